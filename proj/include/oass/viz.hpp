// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "oass/cam_core.hpp"
#include "oass/data.hpp"
#include "oass/imageio.hpp"
#include "oass/metrics.hpp"

namespace oass {

// Blue -> cyan -> green -> yellow -> red gradient for t in [0, 1].
void colormap_heat(double t, uint8_t rgb[3]);

// 5x7 bitmap text, lowercase folded to uppercase, unknown glyphs skipped.
void draw_text(RgbImage& img, int x, int y, const std::string& text,
               uint8_t r, uint8_t g, uint8_t b, int scale = 1);

// One panel per positive class: the CAM channel min-max normalized,
// upsampled to the image size, colorized and alpha-blended over the image,
// with the class name drawn top-left. Panels concatenate horizontally; an
// all-negative label vector yields the plain image. Byte-deterministic.
void export_cam_visualization(const ImageTensor& image,
                              const ClassActivationMaps& cams,
                              const LabelVector& labels,
                              const std::vector<std::string>& class_names,
                              const std::string& path, double alpha = 0.5);

// Horizontal-shift figure: one bar per class (mean dx) with a +/- 1 sd
// whisker, zero line drawn.
void plot_shift_stats(const ShiftStats& stats,
                      const std::vector<std::string>& class_names,
                      const std::string& path);

// Per-class AP deltas as bars; when shift variances are given (same length)
// they are overlaid as markers on a secondary scale.
void plot_improvement(const std::vector<double>& deltas,
                      const std::vector<double>& shift_variance,
                      const std::vector<std::string>& class_names,
                      const std::string& path);

// Patch-boundary debug overlay: the two cut lines drawn over the image.
void export_cut_overlay(const ImageTensor& image, int kx, int ky,
                        const std::string& path);

}  // namespace oass
