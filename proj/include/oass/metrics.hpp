// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "oass/data.hpp"

namespace oass {

// AllPoint: precision at each positive rank, averaged. ElevenPoint: the
// detection-style interpolation at recalls {0, 0.1, ..., 1.0}.
enum class ApMode { AllPoint, ElevenPoint };

// Ranking quality of `scores` against binary `labels`. Ties are broken by
// index ascending (stable sort), which makes the value deterministic.
// Zero positives leave AP undefined and raise DataError.
double average_precision(const std::vector<double>& scores,
                         const std::vector<uint8_t>& labels,
                         ApMode mode = ApMode::AllPoint);

struct APReport {
  std::vector<double> per_class_ap;  // NaN marks a skipped class
  double map = 0.0;                  // mean over defined entries
  int num_images = 0;
  std::string config_digest;
};

// Bitwise equality, NaN-safe; used by the determinism checks.
bool identical(const APReport& a, const APReport& b);

// Sigmoid scores per image per class (CSI head when the model has it, base
// head otherwise), then per-class AP over the dataset. Classes with zero
// positives are skipped with a warning on stderr.
APReport evaluate(const Model& model, const std::vector<Sample>& samples,
                  const std::string& config_digest = "",
                  ApMode mode = ApMode::AllPoint);

// delta_c = b.AP_c - a.AP_c.
std::vector<double> per_class_improvement(const APReport& a, const APReport& b);

void write_ap_csv(const APReport& report, const std::string& path,
                  const std::vector<std::string>& class_names);

}  // namespace oass
