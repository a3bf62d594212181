// SPDX-License-Identifier: Apache-2.0

#include "oass/viz.hpp"

#include <algorithm>
#include <cmath>

#include "oass/common.hpp"
#include "oass/csi.hpp"
#include "oass/interp.hpp"

namespace oass {

namespace {

// Row-wise 5x7 glyphs, bit 4 = leftmost column.
struct Glyph {
  char ch;
  uint8_t rows[7];
};

const Glyph kFont[] = {
    {' ', {0, 0, 0, 0, 0, 0, 0}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
    {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {'/', {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10}},
    {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {'%', {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13}},
    {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
};

const Glyph* find_glyph(char c) {
  if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  for (const Glyph& g : kFont)
    if (g.ch == c) return &g;
  return nullptr;
}

void put_px(RgbImage& img, int x, int y, uint8_t r, uint8_t g, uint8_t b) {
  if (x < 0 || y < 0 || x >= img.w || y >= img.h) return;
  uint8_t* p = img.at(y, x);
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

void fill_rect(RgbImage& img, int x0, int y0, int x1, int y1, uint8_t r,
               uint8_t g, uint8_t b) {
  for (int y = std::max(0, y0); y < std::min(img.h, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(img.w, x1); ++x)
      put_px(img, x, y, r, g, b);
}

void hline(RgbImage& img, int x0, int x1, int y, uint8_t r, uint8_t g, uint8_t b) {
  for (int x = x0; x <= x1; ++x) put_px(img, x, y, r, g, b);
}

void vline(RgbImage& img, int x, int y0, int y1, uint8_t r, uint8_t g, uint8_t b) {
  for (int y = y0; y <= y1; ++y) put_px(img, x, y, r, g, b);
}

int text_width(const std::string& s, int scale) {
  return static_cast<int>(s.size()) * 6 * scale;
}

std::string short_name(const std::string& s, size_t n = 6) {
  return s.size() <= n ? s : s.substr(0, n);
}

// Shared scaffolding for the bar plots: white canvas, y axis mapping, bars.
struct BarCanvas {
  RgbImage img;
  int left, right, top, bottom;  // plot box
  double lo, hi;                 // value range mapped onto [bottom, top]
  int slot;                      // horizontal span per class

  BarCanvas(int num_classes, double lo_, double hi_, const std::string& title) {
    slot = 46;
    left = 64;
    top = 28;
    const int plot_w = std::max(1, num_classes) * slot;
    img = RgbImage(left + plot_w + 24, 320);
    right = left + plot_w;
    bottom = img.h - 36;
    lo = lo_;
    hi = hi_;
    if (hi - lo < 1e-12) hi = lo + 1.0;
    fill_rect(img, 0, 0, img.w, img.h, 255, 255, 255);
    draw_text(img, left, 8, title, 0, 0, 0, 1);
    hline(img, left, right, bottom, 0, 0, 0);
    vline(img, left, top, bottom, 0, 0, 0);
    draw_text(img, 4, top - 3, strf("%.3g", hi), 0, 0, 0, 1);
    draw_text(img, 4, bottom - 3, strf("%.3g", lo), 0, 0, 0, 1);
  }

  int ypix(double v) const {
    const double t = (v - lo) / (hi - lo);
    return bottom - static_cast<int>(std::lround(t * (bottom - top)));
  }

  int xcenter(int c) const { return left + c * slot + slot / 2; }

  // bars grow from the zero line (clamped into range) to the value
  void bar(int c, double v, uint8_t r, uint8_t g, uint8_t b) {
    const int yz = ypix(std::max(lo, std::min(hi, 0.0)));
    const int yv = ypix(v);
    const int x = xcenter(c);
    fill_rect(img, x - slot / 3, std::min(yz, yv), x + slot / 3,
              std::max(yz, yv) + 1, r, g, b);
  }

  void whisker(int c, double lo_v, double hi_v) {
    const int x = xcenter(c);
    vline(img, x, ypix(hi_v), ypix(lo_v), 0, 0, 0);
    hline(img, x - 4, x + 4, ypix(hi_v), 0, 0, 0);
    hline(img, x - 4, x + 4, ypix(lo_v), 0, 0, 0);
  }

  void marker(int c, double v, uint8_t r, uint8_t g, uint8_t b) {
    const int x = xcenter(c), y = ypix(v);
    for (int d = -2; d <= 2; ++d) {
      const int s = 2 - std::abs(d);
      hline(img, x - s, x + s, y + d, r, g, b);
    }
  }

  void label(int c, const std::string& name) {
    const std::string s = short_name(name);
    draw_text(img, xcenter(c) - text_width(s, 1) / 2, bottom + 6, s, 0, 0, 0, 1);
  }
};

}  // namespace

void colormap_heat(double t, uint8_t rgb[3]) {
  t = std::clamp(t, 0.0, 1.0);
  // four linear segments: blue, cyan, green, yellow, red
  double r, g, b;
  if (t < 0.25) {
    r = 0, g = 4 * t, b = 1;
  } else if (t < 0.5) {
    r = 0, g = 1, b = 1 - 4 * (t - 0.25);
  } else if (t < 0.75) {
    r = 4 * (t - 0.5), g = 1, b = 0;
  } else {
    r = 1, g = 1 - 4 * (t - 0.75), b = 0;
  }
  rgb[0] = static_cast<uint8_t>(std::lround(r * 255));
  rgb[1] = static_cast<uint8_t>(std::lround(g * 255));
  rgb[2] = static_cast<uint8_t>(std::lround(b * 255));
}

void draw_text(RgbImage& img, int x, int y, const std::string& text, uint8_t r,
               uint8_t g, uint8_t b, int scale) {
  int cx = x;
  for (char c : text) {
    const Glyph* gl = find_glyph(c);
    if (gl) {
      for (int row = 0; row < 7; ++row)
        for (int col = 0; col < 5; ++col)
          if (gl->rows[row] & (0x10 >> col))
            fill_rect(img, cx + col * scale, y + row * scale,
                      cx + (col + 1) * scale, y + (row + 1) * scale, r, g, b);
    }
    cx += 6 * scale;
  }
}

void export_cam_visualization(const ImageTensor& image,
                              const ClassActivationMaps& cams,
                              const LabelVector& labels,
                              const std::vector<std::string>& class_names,
                              const std::string& path, double alpha) {
  require(cams.num_classes() == labels.size(),
          "export_cam_visualization: label/CAM count mismatch");
  const int H = image.height(), W = image.width();
  const RgbImage base = tensor_to_rgb(image.data);

  std::vector<int> positive;
  for (int c = 0; c < labels.size(); ++c)
    if (labels.positive(c)) positive.push_back(c);

  const int panels = std::max<size_t>(1, positive.size());
  RgbImage out(W * panels, H);
  auto blit = [&](const RgbImage& src, int panel) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const uint8_t* p = src.at(y, x);
        put_px(out, panel * W + x, y, p[0], p[1], p[2]);
      }
  };

  if (positive.empty()) {
    blit(base, 0);
  } else {
    for (size_t i = 0; i < positive.size(); ++i) {
      const int c = positive[i];
      Map2D up = resize(channel_copy(cams.data, c), H, W, Interp::Bilinear);
      double hi = 0.0;
      for (double v : up.v) hi = std::max(hi, v);
      RgbImage panel = base;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double t = hi > 0.0 ? up.at(y, x) / hi : 0.0;
          uint8_t heat[3];
          colormap_heat(t, heat);
          uint8_t* p = panel.at(y, x);
          for (int ch = 0; ch < 3; ++ch)
            p[ch] = static_cast<uint8_t>(
                std::lround((1.0 - alpha) * p[ch] + alpha * heat[ch]));
        }
      const std::string name =
          c < static_cast<int>(class_names.size()) ? class_names[c] : strf("class%d", c);
      draw_text(panel, 3, 3, name, 255, 255, 255, 1);
      blit(panel, static_cast<int>(i));
    }
  }
  write_bmp(out, path);
}

void plot_shift_stats(const ShiftStats& stats,
                      const std::vector<std::string>& class_names,
                      const std::string& path) {
  std::vector<int> ids;
  for (const auto& [c, st] : stats.per_class) ids.push_back(c);
  double lo = 0.0, hi = 0.0;
  for (const auto& [c, st] : stats.per_class) {
    const double sd = std::sqrt(std::max(0.0, st.var_dx));
    lo = std::min(lo, st.mean_dx - sd);
    hi = std::max(hi, st.mean_dx + sd);
  }
  const double pad = 0.08 * (hi - lo + 1e-9);
  BarCanvas cv(static_cast<int>(ids.size()), lo - pad, hi + pad,
               strf("MEAN DX PER CLASS (PX AT %d)", stats.normalized_to));
  hline(cv.img, cv.left, cv.right, cv.ypix(0.0), 160, 160, 160);
  for (size_t i = 0; i < ids.size(); ++i) {
    const ClassShiftStats& st = stats.per_class.at(ids[i]);
    const double sd = std::sqrt(std::max(0.0, st.var_dx));
    cv.bar(static_cast<int>(i), st.mean_dx, 70, 110, 190);
    cv.whisker(static_cast<int>(i), st.mean_dx - sd, st.mean_dx + sd);
    cv.label(static_cast<int>(i), ids[i] < static_cast<int>(class_names.size())
                                      ? class_names[ids[i]]
                                      : strf("c%d", ids[i]));
  }
  write_bmp(cv.img, path);
}

void plot_improvement(const std::vector<double>& deltas,
                      const std::vector<double>& shift_variance,
                      const std::vector<std::string>& class_names,
                      const std::string& path) {
  require(shift_variance.empty() || shift_variance.size() == deltas.size(),
          "plot_improvement: variance length mismatch");
  double lo = 0.0, hi = 0.0;
  for (double d : deltas) {
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  const double pad = 0.08 * (hi - lo + 1e-9);
  BarCanvas cv(static_cast<int>(deltas.size()), lo - pad, hi + pad,
               "AP DELTA PER CLASS (MARKER: SHIFT VAR)");
  hline(cv.img, cv.left, cv.right, cv.ypix(0.0), 160, 160, 160);
  double vmax = 0.0;
  for (double v : shift_variance) vmax = std::max(vmax, v);
  for (size_t c = 0; c < deltas.size(); ++c) {
    cv.bar(static_cast<int>(c), deltas[c], 190, 110, 70);
    cv.label(static_cast<int>(c), c < class_names.size() ? class_names[c]
                                                         : strf("c%zu", c));
    if (!shift_variance.empty() && vmax > 0.0) {
      // variance rescaled onto the delta axis
      const double v = cv.lo + (shift_variance[c] / vmax) * (cv.hi - cv.lo);
      cv.marker(static_cast<int>(c), v, 20, 140, 60);
    }
  }
  write_bmp(cv.img, path);
}

void export_cut_overlay(const ImageTensor& image, int kx, int ky,
                        const std::string& path) {
  RgbImage img = tensor_to_rgb(image.data);
  vline(img, kx, 0, img.h - 1, 255, 40, 40);
  hline(img, 0, img.w - 1, ky, 255, 40, 40);
  write_bmp(img, path);
}

}  // namespace oass
