// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "oass/cam_core.hpp"
#include "oass/interp.hpp"
#include "oass/keypoint.hpp"

namespace oass {

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

// The four keypoint-anchored rectangles: top-left, top-right, bottom-left,
// bottom-right. They tile [0,W) x [0,H) exactly.
struct PatchGeometry {
  std::array<Rect, 4> rects;
  int width = 0, height = 0;
  Keypoint keypoint;  // pixel space
};

struct PatchSet {
  PatchGeometry geometry;
  std::array<ImageTensor, 4> patches;  // each resized to (H/2, W/2)
};

// Rectangle bookkeeping only; rejects keypoints on or outside the border.
PatchGeometry cut_geometry(int image_w, int image_h, const Keypoint& pixel_kp);

// Materialized copies of the four crops, so teacher inputs cannot alias a
// mutated source.
std::array<Tensor, 4> cut_patches(const Tensor& image, const PatchGeometry& geom);

Tensor resize_patch(const Tensor& crop, int target_h, int target_w,
                    Interp interp = Interp::Bilinear);

// cut + resize to the unified (H/2, W/2) patch size.
PatchSet make_patch_set(const ImageTensor& image, const Keypoint& pixel_kp,
                        Interp interp = Interp::Bilinear);

// Feature-grid rectangles derived from one snapped cut (round(k/s), clamped
// so all four stay non-empty); they tile the (fh, fw) grid exactly.
std::array<Rect, 4> feature_rects(const PatchGeometry& geom, int s, int fh, int fw);

// Resize each patch feature map back to its feature rectangle and place it;
// output dims equal the full-image feature dims (ceil(H/s), ceil(W/s)).
FeatureMap tile_features(const std::array<FeatureMap, 4>& patch_features,
                         const PatchGeometry& geom,
                         Interp interp = Interp::Bilinear);

}  // namespace oass
