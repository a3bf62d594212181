// SPDX-License-Identifier: Apache-2.0

#include "oass/keypoint.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "oass/common.hpp"

namespace oass {

KeypointStrategy parse_strategy(const std::string& name) {
  if (name == "max") return KeypointStrategy::Max;
  if (name == "cmax") return KeypointStrategy::CMax;
  if (name == "ctopk") return KeypointStrategy::CTopk;
  if (name == "ctopk-w" || name == "ctopkw") return KeypointStrategy::CTopkW;
  if (name == "gt-bbox" || name == "gtbbox") return KeypointStrategy::GtBbox;
  if (name == "center") return KeypointStrategy::Center;
  throw ConfigError("unknown keypoint strategy: " + name);
}

const char* strategy_name(KeypointStrategy s) {
  switch (s) {
    case KeypointStrategy::Max: return "max";
    case KeypointStrategy::CMax: return "cmax";
    case KeypointStrategy::CTopk: return "ctopk";
    case KeypointStrategy::CTopkW: return "ctopk-w";
    case KeypointStrategy::GtBbox: return "gt-bbox";
    case KeypointStrategy::Center: return "center";
  }
  return "?";
}

std::vector<LocalMaximum> find_local_maxima(const Map2D& map, int k) {
  require(k >= 1, "find_local_maxima: k must be >= 1");
  require(map.all_finite(), "find_local_maxima: non-finite map");
  const int h = map.h, w = map.w;

  // candidate: positive and >= all in-bounds 8-neighbours
  std::vector<uint8_t> cand(static_cast<size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = map.at(y, x);
      if (v <= 0.0) continue;
      bool ok = true;
      for (int dy = -1; dy <= 1 && ok; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          if (map.at(ny, nx) > v) {
            ok = false;
            break;
          }
        }
      if (ok) cand[static_cast<size_t>(y) * w + x] = 1;
    }

  // plateau suppression: keep the row-major-first pixel of each connected
  // equal-value candidate component
  std::vector<uint8_t> seen(static_cast<size_t>(h) * w, 0);
  std::vector<LocalMaximum> maxima;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t idx = static_cast<size_t>(y) * w + x;
      if (!cand[idx] || seen[idx]) continue;
      const double v = map.at(y, x);
      maxima.push_back({x, y, v});
      std::deque<std::pair<int, int>> q{{y, x}};
      seen[idx] = 1;
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const size_t nidx = static_cast<size_t>(ny) * w + nx;
            if (seen[nidx] || !cand[nidx]) continue;
            if (map.at(ny, nx) != v) continue;
            seen[nidx] = 1;
            q.push_back({ny, nx});
          }
      }
    }

  std::stable_sort(maxima.begin(), maxima.end(),
                   [](const LocalMaximum& a, const LocalMaximum& b) {
                     return a.value > b.value;
                   });
  if (static_cast<int>(maxima.size()) > k) maxima.resize(k);
  return maxima;
}

Keypoint argmax_keypoint(const Map2D& map) {
  int bx = 0, by = 0;
  double best = map.at(0, 0);
  for (int y = 0; y < map.h; ++y)
    for (int x = 0; x < map.w; ++x)
      if (map.at(y, x) > best) {
        best = map.at(y, x);
        bx = x;
        by = y;
      }
  return {bx, by, CoordSpace::Feature, 1};
}

Keypoint keypoint_max(const ClassActivationMaps& cams) {
  return argmax_keypoint(merge_cams(cams));
}

std::map<int, Keypoint> keypoint_cmax(const ClassActivationMaps& cams,
                                      const LabelVector& labels) {
  require(labels.size() == cams.num_classes(), "keypoint_cmax: label count mismatch");
  std::map<int, Keypoint> out;
  for (int c = 0; c < cams.num_classes(); ++c) {
    if (!labels.positive(c)) continue;
    out[c] = argmax_keypoint(channel_copy(cams.data, c));
  }
  return out;
}

namespace {

// round half away from zero, then clip into [0, dim)
int round_clip(double v, int dim) {
  int r = static_cast<int>(std::round(v));
  return std::clamp(r, 0, dim - 1);
}

KeypointResult center_fallback(int w, int h) {
  return {{w / 2, h / 2, CoordSpace::Feature, 1}, true};
}

}  // namespace

KeypointResult keypoint_ctopk(const Map2D& cam_channel, int k) {
  auto maxima = find_local_maxima(cam_channel, k);
  if (maxima.empty()) return center_fallback(cam_channel.w, cam_channel.h);
  double sx = 0.0, sy = 0.0;
  for (const auto& m : maxima) {
    sx += m.x;
    sy += m.y;
  }
  const double n = static_cast<double>(maxima.size());
  return {{round_clip(sx / n, cam_channel.w), round_clip(sy / n, cam_channel.h),
           CoordSpace::Feature, 1},
          false};
}

KeypointResult keypoint_ctopkw(const Map2D& cam_channel, int k,
                               const StrategyConfig& cfg) {
  auto maxima = find_local_maxima(cam_channel, k);
  if (maxima.empty()) return center_fallback(cam_channel.w, cam_channel.h);
  double wsum = 0.0;
  for (const auto& m : maxima) wsum += m.value;
  double sx = 0.0, sy = 0.0;
  for (const auto& m : maxima) {
    const double wgt = m.value / wsum;
    sx += wgt * m.x;
    sy += wgt * m.y;
  }
  if (cfg.literal_ctopkw_scaling) {
    const double n = static_cast<double>(maxima.size());
    sx /= n;
    sy /= n;
  }
  return {{round_clip(sx, cam_channel.w), round_clip(sy, cam_channel.h),
           CoordSpace::Feature, 1},
          false};
}

std::map<int, KeypointResult> keypoint_gt_bbox(
    const std::vector<ClassBoxCenter>& centers, int image_w, int image_h) {
  std::map<int, KeypointResult> out;
  if (centers.empty()) return out;
  std::map<int, std::pair<double, double>> sums;
  std::map<int, int> counts;
  for (const auto& c : centers) {
    sums[c.class_id].first += c.cx;
    sums[c.class_id].second += c.cy;
    counts[c.class_id] += 1;
  }
  for (const auto& [cls, sum] : sums) {
    const double n = counts[cls];
    out[cls] = {{round_clip(sum.first / n, image_w),
                 round_clip(sum.second / n, image_h), CoordSpace::Pixel, 1},
                false};
  }
  return out;
}

int clamp_pixel_coord(int v, int dim, int min_patch) {
  const int lo = std::min(min_patch, dim / 2);
  const int hi = dim - lo;
  return std::clamp(v, lo, hi);
}

Keypoint to_pixel_space(const Keypoint& kp, int s, int image_w, int image_h,
                        int min_patch) {
  require(min_patch >= 1, "to_pixel_space: min_patch must be >= 1");
  int px, py;
  if (kp.space == CoordSpace::Pixel) {
    px = kp.x;
    py = kp.y;
  } else {
    px = s * kp.x;
    py = s * kp.y;
  }
  return {clamp_pixel_coord(px, image_w, min_patch),
          clamp_pixel_coord(py, image_h, min_patch), CoordSpace::Pixel, s};
}

}  // namespace oass
