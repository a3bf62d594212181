// SPDX-License-Identifier: Apache-2.0

#include "oass/patching.hpp"

#include <algorithm>
#include <cmath>

#include "oass/common.hpp"

namespace oass {

namespace {
inline int ceil_div(int a, int b) { return (a + b - 1) / b; }
}

PatchGeometry cut_geometry(int image_w, int image_h, const Keypoint& pixel_kp) {
  require(pixel_kp.space == CoordSpace::Pixel, "cut_geometry: keypoint must be pixel-space");
  const int kx = pixel_kp.x, ky = pixel_kp.y;
  if (kx < 1 || kx > image_w - 1 || ky < 1 || ky > image_h - 1)
    throw ShapeError(strf("cut_geometry: keypoint (%d,%d) on or outside the %dx%d border",
                          kx, ky, image_w, image_h));
  PatchGeometry g;
  g.width = image_w;
  g.height = image_h;
  g.keypoint = pixel_kp;
  g.rects[0] = {0, 0, kx, ky};
  g.rects[1] = {kx, 0, image_w, ky};
  g.rects[2] = {0, ky, kx, image_h};
  g.rects[3] = {kx, ky, image_w, image_h};
  return g;
}

std::array<Tensor, 4> cut_patches(const Tensor& image, const PatchGeometry& geom) {
  require(image.h == geom.height && image.w == geom.width,
          "cut_patches: image dims differ from geometry");
  std::array<Tensor, 4> out;
  for (int i = 0; i < 4; ++i) {
    const Rect& r = geom.rects[i];
    Tensor crop(image.c, r.height(), r.width());
    for (int ch = 0; ch < image.c; ++ch)
      for (int y = r.y0; y < r.y1; ++y) {
        const double* src = image.row(ch, y) + r.x0;
        std::copy(src, src + r.width(), crop.row(ch, y - r.y0));
      }
    out[i] = std::move(crop);
  }
  return out;
}

Tensor resize_patch(const Tensor& crop, int target_h, int target_w, Interp interp) {
  require(crop.h >= 1 && crop.w >= 1, "resize_patch: degenerate crop");
  if (target_h <= 0 || target_w <= 0)
    throw ShapeError("resize_patch: non-positive target size");
  return resize(crop, target_h, target_w, interp);
}

PatchSet make_patch_set(const ImageTensor& image, const Keypoint& pixel_kp,
                        Interp interp) {
  const int H = image.height(), W = image.width();
  require(H % 2 == 0 && W % 2 == 0, "make_patch_set: image dims must be even");
  PatchSet ps;
  ps.geometry = cut_geometry(W, H, pixel_kp);
  auto crops = cut_patches(image.data, ps.geometry);
  for (int i = 0; i < 4; ++i)
    ps.patches[i].data = resize_patch(crops[i], H / 2, W / 2, interp);
  return ps;
}

std::array<Rect, 4> feature_rects(const PatchGeometry& geom, int s, int fh, int fw) {
  require(fh >= 2 && fw >= 2, "feature_rects: feature grid too small to split");
  // one snapped cut guarantees exact tiling of the feature grid
  int fx = static_cast<int>(std::round(static_cast<double>(geom.keypoint.x) / s));
  int fy = static_cast<int>(std::round(static_cast<double>(geom.keypoint.y) / s));
  fx = std::clamp(fx, 1, fw - 1);
  fy = std::clamp(fy, 1, fh - 1);
  return {Rect{0, 0, fx, fy}, Rect{fx, 0, fw, fy}, Rect{0, fy, fx, fh},
          Rect{fx, fy, fw, fh}};
}

FeatureMap tile_features(const std::array<FeatureMap, 4>& patch_features,
                         const PatchGeometry& geom, Interp interp) {
  const int s = patch_features[0].stride;
  const int D = patch_features[0].depth();
  for (const FeatureMap& f : patch_features) {
    require(f.stride == s, "tile_features: stride mismatch across patches");
    require(f.depth() == D, "tile_features: depth mismatch across patches");
    require(f.data.h == patch_features[0].data.h &&
                f.data.w == patch_features[0].data.w,
            "tile_features: patch feature dims differ");
  }
  const int fh = ceil_div(geom.height, s), fw = ceil_div(geom.width, s);
  auto rects = feature_rects(geom, s, fh, fw);

  FeatureMap out;
  out.stride = s;
  out.data = Tensor(D, fh, fw);
  std::vector<uint8_t> written(static_cast<size_t>(fh) * fw, 0);
  for (int i = 0; i < 4; ++i) {
    const Rect& r = rects[i];
    Tensor piece = resize(patch_features[i].data, r.height(), r.width(), interp);
    for (int d = 0; d < D; ++d)
      for (int y = 0; y < r.height(); ++y) {
        const double* src = piece.row(d, y);
        double* dst = out.data.row(d, r.y0 + y) + r.x0;
        std::copy(src, src + r.width(), dst);
      }
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x)
        written[static_cast<size_t>(y) * fw + x] += 1;
  }
  for (uint8_t wct : written)
    if (wct != 1)
      throw ShapeError("tile_features: feature rectangles left a gap or overlap");
  return out;
}

}  // namespace oass
