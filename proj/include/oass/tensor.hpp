// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "oass/common.hpp"

namespace oass {

// Dense row-major (channel, row, column) tensor of doubles.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0) {}

  size_t size() const { return v.size(); }

  double& at(int ch, int y, int x) {
    return v[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  double at(int ch, int y, int x) const {
    return v[(static_cast<size_t>(ch) * h + y) * w + x];
  }

  double* row(int ch, int y) {
    return v.data() + (static_cast<size_t>(ch) * h + y) * w;
  }
  const double* row(int ch, int y) const {
    return v.data() + (static_cast<size_t>(ch) * h + y) * w;
  }

  bool same_shape(const Tensor& o) const {
    return c == o.c && h == o.h && w == o.w;
  }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

// Single-channel real map (h x w), the substrate of keypoint detection.
struct Map2D {
  int h = 0, w = 0;
  std::vector<double> v;

  Map2D() = default;
  Map2D(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0.0) {}

  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline Map2D channel_copy(const Tensor& t, int ch) {
  require(ch >= 0 && ch < t.c, "channel_copy: channel out of range");
  Map2D m(t.h, t.w);
  const double* src = t.v.data() + static_cast<size_t>(ch) * t.h * t.w;
  std::copy(src, src + static_cast<size_t>(t.h) * t.w, m.v.begin());
  return m;
}

// Spatial mean per channel.
inline std::vector<double> global_average_pool(const Tensor& t) {
  std::vector<double> out(t.c, 0.0);
  const double inv = 1.0 / (static_cast<double>(t.h) * t.w);
  for (int ch = 0; ch < t.c; ++ch) {
    double s = 0.0;
    const double* p = t.v.data() + static_cast<size_t>(ch) * t.h * t.w;
    for (size_t i = 0; i < static_cast<size_t>(t.h) * t.w; ++i) s += p[i];
    out[ch] = s * inv;
  }
  return out;
}

}  // namespace oass
