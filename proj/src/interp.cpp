// SPDX-License-Identifier: Apache-2.0

#include "oass/interp.hpp"

#include <algorithm>
#include <cmath>

namespace oass {

namespace {

struct Taps {
  int lo, hi;
  double t;  // weight of hi
};

// Precomputed per-axis sample positions.
std::vector<Taps> make_taps(int dst, int src) {
  std::vector<Taps> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double x = (i + 0.5) * scale - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(src - 1));
    int lo = static_cast<int>(std::floor(x));
    int hi = std::min(lo + 1, src - 1);
    taps[i] = {lo, hi, x - lo};
  }
  return taps;
}

std::vector<int> make_nearest(int dst, int src) {
  std::vector<int> idx(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double x = (i + 0.5) * scale - 0.5;
    int n = static_cast<int>(std::lround(x));
    idx[i] = std::clamp(n, 0, src - 1);
  }
  return idx;
}

}  // namespace

Tensor resize(const Tensor& src, int oh, int ow, Interp interp) {
  require(src.c > 0 && src.h > 0 && src.w > 0, "resize: empty source");
  require(oh > 0 && ow > 0, "resize: non-positive target size");
  if (oh == src.h && ow == src.w) return src;

  Tensor out(src.c, oh, ow);
  if (interp == Interp::Nearest) {
    auto iy = make_nearest(oh, src.h);
    auto ix = make_nearest(ow, src.w);
    for (int ch = 0; ch < src.c; ++ch)
      for (int y = 0; y < oh; ++y) {
        const double* srow = src.row(ch, iy[y]);
        double* drow = out.row(ch, y);
        for (int x = 0; x < ow; ++x) drow[x] = srow[ix[x]];
      }
    return out;
  }

  auto ty = make_taps(oh, src.h);
  auto tx = make_taps(ow, src.w);
  for (int ch = 0; ch < src.c; ++ch)
    for (int y = 0; y < oh; ++y) {
      const double* r0 = src.row(ch, ty[y].lo);
      const double* r1 = src.row(ch, ty[y].hi);
      const double fy = ty[y].t;
      double* drow = out.row(ch, y);
      for (int x = 0; x < ow; ++x) {
        const Taps& t = tx[x];
        double top = r0[t.lo] + (r0[t.hi] - r0[t.lo]) * t.t;
        double bot = r1[t.lo] + (r1[t.hi] - r1[t.lo]) * t.t;
        drow[x] = top + (bot - top) * fy;
      }
    }
  return out;
}

Map2D resize(const Map2D& src, int oh, int ow, Interp interp) {
  Tensor t(1, src.h, src.w);
  t.v = src.v;
  Tensor r = resize(t, oh, ow, interp);
  Map2D out(oh, ow);
  out.v = std::move(r.v);
  return out;
}

}  // namespace oass
