// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oass/cam_core.hpp"
#include "oass/rng.hpp"

namespace oass {

struct BBoxAnnotation {
  int class_id = 0;
  double x_l = 0, x_h = 0, y_l = 0, y_h = 0;  // 0 <= x_l < x_h <= W
  int image_w = 0, image_h = 0;
  bool difficult = false;

  double center_x() const { return 0.5 * (x_l + x_h); }
  double center_y() const { return 0.5 * (y_l + y_h); }
};

struct Sample {
  ImageTensor image;
  LabelVector labels;
  std::vector<BBoxAnnotation> boxes;
  std::string id;
};

// The fixed 20-class VOC vocabulary, in canonical order.
const std::vector<std::string>& voc_class_names();

struct VocAnnotation {
  LabelVector labels;
  std::vector<BBoxAnnotation> boxes;
  int width = 0, height = 0;
  std::string filename;
};

// Parses a VOC annotation XML document. Unknown class names and malformed
// documents raise DataError with the offending element path.
VocAnnotation parse_voc_annotation(const std::string& xml_text,
                                   const std::vector<std::string>& class_names = voc_class_names(),
                                   bool include_difficult = true);

// Inverse of parse_voc_annotation, used by the round-trip property.
std::string serialize_voc_annotation(const VocAnnotation& ann,
                                     const std::vector<std::string>& class_names = voc_class_names());

// ---------------------------------------------------------------------------
// Object-location-shift statistics

struct ClassShiftStats {
  double mean_dx = 0, var_dx = 0, mean_dy = 0, var_dy = 0;
  double mean_abs_dx = 0;  // per-box |dx| averaged, the headline shift figure
  long count = 0;
};

struct ShiftStats {
  std::map<int, ClassShiftStats> per_class;
  int normalized_to = 512;

  // Unweighted mean over classes of per-class mean |dx|.
  double cross_class_mean_abs_dx() const;
};

// Each box contributes dx = (center_x - W/2) * target_size / W and the
// analogous dy, aggregated per class into mean and population variance.
ShiftStats shift_statistics(const std::vector<Sample>& samples, int target_size = 512);

void write_shift_stats_csv(const ShiftStats& stats, const std::string& path,
                           const std::vector<std::string>& class_names);

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentConfig {
  bool enabled = false;
  int min_size = 320, max_size = 640;  // longer-side resize range
  int canvas = 512;                    // pad/crop target, always even
  double flip_prob = 0.5;
};

// Horizontal flip of pixels and boxes; its own inverse.
Sample flip_horizontal(const Sample& s);

// Resize longer side into [min_size, max_size], random horizontal flip,
// then top-left zero-pad (or center-crop for sides beyond the canvas).
Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// VOC directory layout

struct VocDataset {
  std::vector<std::string> ids;
  std::string root;  // contains Annotations/, JPEGImages/, ImageSets/Main/
};

VocDataset load_voc_split(const std::string& root, const std::string& split);
VocAnnotation load_voc_annotation_file(const std::string& root, const std::string& id,
                                       bool include_difficult = true);

}  // namespace oass
