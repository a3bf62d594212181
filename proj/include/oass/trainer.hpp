// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "oass/checkpoint.hpp"
#include "oass/config.hpp"
#include "oass/pipeline.hpp"

namespace oass {

struct EpochStats {
  int epoch = 0;
  double cls = 0, mean_re = 0, mean_pcls = 0, total = 0, alpha = 0;
};

struct TrainResult {
  Model model;
  EmaState ema;
  AdamState adam;
  std::vector<EpochStats> history;
  PipelineCounters counters;  // summed over the whole run
};

// One optimizer step on the mean loss of `batch`; EMA update afterwards.
// The returned bundle carries batch means (per-class maps average over the
// samples that produced each term). Per-sample gradients are reduced in
// index order, so the result is identical for any thread count.
LossBundle train_step(Model& model, EmaState& ema, AdamState& adam,
                      const std::vector<const Sample*>& batch,
                      const RampedAlphas& alphas, const PipelineConfig& cfg,
                      int threads = 1, PipelineCounters* counters = nullptr);

// Full deterministic loop: shuffled batches, ramped loss weights, metrics
// CSV, periodic checkpoints. `resume` continues from a saved state.
TrainResult train_model(const RunConfig& cfg, const std::vector<Sample>& train_set,
                        std::ostream* log = nullptr,
                        const Checkpoint* resume = nullptr);

void write_metrics_csv(const std::vector<EpochStats>& history,
                       const std::string& path);

}  // namespace oass
