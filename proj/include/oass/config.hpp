// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "oass/pipeline.hpp"
#include "oass/synth.hpp"

namespace oass {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 16;
  double lr = 1e-3;
  double ema_decay = 0.999;
  double alpha_final = 1.0 / 15.0;
  int rampup_epochs = 100;
  uint64_t seed = 1;
  int threads = 1;  // 0 selects hardware concurrency
  int checkpoint_every = 20;
  std::string out_dir = "runs/default";
};

struct DataConfig {
  std::string kind = "synth";  // synth | manifest | voc
  std::string root;            // VOC root or manifest path
  std::string train_split = "train";
  std::string eval_split = "val";
  bool include_difficult = true;
  AugmentConfig augment;
  SynthConfig synth;
  uint64_t synth_seed = 7;
  int synth_eval_images = 200;
};

struct RunConfig {
  ModelConfig model;
  PipelineConfig pipeline;
  TrainConfig train;
  DataConfig data;
};

// Strict parse: unknown sections or keys raise ConfigError, as do values
// outside their documented domains.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical serialization (sorted keys, every effective value explicit).
std::string run_config_canonical(const RunConfig& cfg);

// FNV-1a 64-bit over the canonical serialization, as fixed-width hex.
std::string config_digest(const RunConfig& cfg);

LossWeights loss_weights(const RunConfig& cfg);

}  // namespace oass
