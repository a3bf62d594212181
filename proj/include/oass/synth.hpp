// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "oass/data.hpp"

namespace oass {

// Deterministic multi-object shape dataset. Each class has one shape
// archetype; object centers are displaced from the image center by a
// per-axis offset whose magnitude is uniform in [shift_lo, shift_hi] with a
// random sign, so the placement variance has the closed form
// (hi^3 - lo^3) / (3 (hi - lo)).
struct SynthConfig {
  int num_images = 500;
  int num_classes = 5;  // at most 5 shape archetypes
  int image_size = 128;
  int min_objects = 1, max_objects = 3;
  double half_lo = 10.0, half_hi = 22.0;   // shape half-extent, px
  double shift_lo = 10.0, shift_hi = 34.0; // center offset magnitude, px
  double noise_amp = 0.09;
  double color_jitter = 0.18;
  bool shared_colors = false;  // true: classes share one palette (shape-only cue)
};

double synth_placement_variance(const SynthConfig& cfg);

std::vector<Sample> synth_dataset(const SynthConfig& cfg, uint64_t seed);

// Manifest + one BMP per image. Returns the manifest path.
std::string write_synth_dataset(const std::vector<Sample>& samples,
                                const SynthConfig& cfg, const std::string& out_dir);

// Reads boxes/labels back from a manifest (images stay on disk).
std::vector<Sample> load_synth_manifest(const std::string& manifest_path,
                                        bool load_images);

}  // namespace oass
