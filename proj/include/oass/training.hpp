// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <vector>

#include "oass/cam_core.hpp"

namespace oass {

// ---------------------------------------------------------------------------
// EMA teacher

// Shadow copy of the student's encoder parameters.
struct EmaState {
  std::vector<double> teacher;
  double decay = 0.999;
  long step = 0;

  static EmaState init(std::span<const double> student, double decay);
};

// teacher' = decay * teacher + (1 - decay) * student, elementwise.
void ema_update(EmaState& state, std::span<const double> student);

// ---------------------------------------------------------------------------
// Losses

enum class ReForm { Mae, Mse };

struct LossWeights {
  double alpha_final = 1.0 / 15.0;  // shared by alpha_re and alpha_p
  int rampup_epochs = 100;
};

struct RampedAlphas {
  double alpha_re = 0.0, alpha_p = 0.0;
};

// Linear ramp: alpha(epoch) = final * min(1, epoch / rampup_epochs).
RampedAlphas rampup_weight(int epoch, const LossWeights& weights);

// Key -1 marks the single merged pseudo-class used by the Max/Center
// strategies; channel-wise strategies key by class id.
struct LossBundle {
  double cls = 0.0;
  std::map<int, double> per_class_re;
  std::map<int, double> per_class_pcls;
  double total = 0.0;
  int num_positive = 0;
};

// Mean over classes of per-class binary cross-entropy with logits.
double classification_loss(std::span<const double> logits, const LabelVector& labels);

// Numerically stable single-logit BCE.
double bce_with_logit(double logit, double target);
double sigmoid(double z);

// Mean absolute (or squared) difference between the full-image CAM channel
// and the tiled reconstruction.
double reconstruction_loss(const Map2D& full_cam_channel,
                           const Map2D& tiled_cam_channel,
                           ReForm form = ReForm::Mae);

// BCE between sigmoid(spatial mean of the tiled pre-clamp channel + bias)
// and the class label.
double patch_classification_loss(const Map2D& tiled_raw_channel, double bias,
                                 double y);

// Assembles the total. Channel-wise: cls + sum over positive classes of
// (a_p * pcls_c + a_re * re_c) / max(1, #positives). Merged (Max/Center):
// cls + a_p * pcls + a_re * re, unaveraged. Missing terms for a positive
// class are rejected.
LossBundle total_loss(double cls, const std::map<int, double>& per_class_re,
                      const std::map<int, double>& per_class_pcls,
                      const LabelVector& labels, const RampedAlphas& alphas,
                      bool channelwise);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState init(size_t n, double lr);
};

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads);

}  // namespace oass
