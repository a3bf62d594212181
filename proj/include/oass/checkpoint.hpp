// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "oass/cam_core.hpp"
#include "oass/training.hpp"

namespace oass {

// Versioned binary container for a training run's state. Geometry fields
// are stored so that loading against a mismatched configuration fails
// instead of silently misinterpreting parameters.
struct Checkpoint {
  ModelConfig model_cfg;
  std::vector<double> params;
  EmaState ema;
  AdamState adam;
  int epoch = 0;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds a usable model; validates parameter counts against the stored
// architecture.
Model restore_model(const Checkpoint& ck);

Checkpoint snapshot(const Model& model, const ModelConfig& cfg,
                    const EmaState& ema, const AdamState& adam, int epoch);

}  // namespace oass
