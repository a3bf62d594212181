// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <vector>

#include "oass/cam_core.hpp"

namespace oass {

enum class CoordSpace { Feature, Pixel };

// Cut coordinate, either on the feature grid (k') or in pixel space (k).
struct Keypoint {
  int x = 0, y = 0;
  CoordSpace space = CoordSpace::Feature;
  int stride_used = 1;  // pixel space only

  bool operator==(const Keypoint&) const = default;
};

struct KeypointResult {
  Keypoint kp;
  bool fallback = false;  // set when no positive local maximum existed
};

struct LocalMaximum {
  int x = 0, y = 0;
  double value = 0.0;
};

enum class KeypointStrategy { Max, CMax, CTopk, CTopkW, GtBbox, Center };

struct StrategyConfig {
  KeypointStrategy strategy = KeypointStrategy::Max;
  int k = 4;
  int min_patch = 32;
  bool literal_ctopkw_scaling = false;
};

KeypointStrategy parse_strategy(const std::string& name);
const char* strategy_name(KeypointStrategy s);

// True when the strategy derives one keypoint per positive class (the
// channel-wise loss form applies); Max/Center use a single merged cut.
inline bool is_channelwise(KeypointStrategy s) {
  return s == KeypointStrategy::CMax || s == KeypointStrategy::CTopk ||
         s == KeypointStrategy::CTopkW || s == KeypointStrategy::GtBbox;
}

// Up to k strictly-positive 8-neighbourhood maxima, sorted by value
// descending (ties by row-major position). Within a connected equal-value
// plateau only the row-major-first pixel is reported.
std::vector<LocalMaximum> find_local_maxima(const Map2D& map, int k);

// Row-major-first argmax of a single map.
Keypoint argmax_keypoint(const Map2D& map);

// Peak of the channel-merged CAM.
Keypoint keypoint_max(const ClassActivationMaps& cams);

// Per-positive-class argmax. Classes with y_c = 0 are absent from the map.
std::map<int, Keypoint> keypoint_cmax(const ClassActivationMaps& cams,
                                      const LabelVector& labels);

// Rounded geometric center of up to k local maxima; center-of-grid fallback
// (flagged) when the channel has no positive local maximum.
KeypointResult keypoint_ctopk(const Map2D& cam_channel, int k);

// Response-weighted centroid of the maxima. With literal_ctopkw_scaling the
// already-normalized average is additionally divided by the number of maxima,
// dragging the point toward the origin.
KeypointResult keypoint_ctopkw(const Map2D& cam_channel, int k,
                               const StrategyConfig& cfg);

struct ClassBoxCenter {
  int class_id = 0;
  double cx = 0.0, cy = 0.0;
};

// Per-class keypoint at the centroid of that class's box centers, already in
// pixel space. Classes without boxes are absent from the result.
std::map<int, KeypointResult> keypoint_gt_bbox(
    const std::vector<ClassBoxCenter>& centers, int image_w, int image_h);

// k = s * k', then clamped into [min_patch, dim - min_patch] per axis so all
// four patches stay non-degenerate. min_patch is capped at dim / 2.
Keypoint to_pixel_space(const Keypoint& kp, int s, int image_w, int image_h,
                        int min_patch);

int clamp_pixel_coord(int v, int dim, int min_patch);

}  // namespace oass
