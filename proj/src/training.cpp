// SPDX-License-Identifier: Apache-2.0

#include "oass/training.hpp"

#include <algorithm>
#include <cmath>

#include "oass/common.hpp"

namespace oass {

EmaState EmaState::init(std::span<const double> student, double decay) {
  require(decay >= 0.0 && decay < 1.0, "ema: decay must be in [0, 1)");
  EmaState s;
  s.teacher.assign(student.begin(), student.end());
  s.decay = decay;
  return s;
}

void ema_update(EmaState& state, std::span<const double> student) {
  if (state.teacher.size() != student.size())
    throw ShapeError("ema_update: teacher/student size mismatch");
  const double d = state.decay;
  for (size_t i = 0; i < student.size(); ++i)
    state.teacher[i] = d * state.teacher[i] + (1.0 - d) * student[i];
  state.step += 1;
}

RampedAlphas rampup_weight(int epoch, const LossWeights& weights) {
  require(epoch >= 0, "rampup_weight: negative epoch");
  double frac = 1.0;
  if (weights.rampup_epochs > 0)
    frac = std::min(1.0, static_cast<double>(epoch) / weights.rampup_epochs);
  return {weights.alpha_final * frac, weights.alpha_final * frac};
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logit(double logit, double target) {
  if (!std::isfinite(logit)) throw NumericalError("bce: non-finite logit");
  // max(z,0) - z*y + log(1 + exp(-|z|))
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

double classification_loss(std::span<const double> logits, const LabelVector& labels) {
  require(static_cast<int>(logits.size()) == labels.size(),
          "classification_loss: length mismatch");
  double sum = 0.0;
  for (int c = 0; c < labels.size(); ++c)
    sum += bce_with_logit(logits[c], labels.positive(c) ? 1.0 : 0.0);
  return sum / labels.size();
}

double reconstruction_loss(const Map2D& full_cam_channel,
                           const Map2D& tiled_cam_channel, ReForm form) {
  if (full_cam_channel.h != tiled_cam_channel.h ||
      full_cam_channel.w != tiled_cam_channel.w)
    throw ShapeError("reconstruction_loss: spatial dims mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < full_cam_channel.v.size(); ++i) {
    const double d = full_cam_channel.v[i] - tiled_cam_channel.v[i];
    sum += form == ReForm::Mae ? std::abs(d) : d * d;
  }
  return sum / static_cast<double>(full_cam_channel.v.size());
}

double patch_classification_loss(const Map2D& tiled_raw_channel, double bias,
                                 double y) {
  double mean = 0.0;
  for (double x : tiled_raw_channel.v) mean += x;
  mean /= static_cast<double>(tiled_raw_channel.v.size());
  return bce_with_logit(mean + bias, y);
}

LossBundle total_loss(double cls, const std::map<int, double>& per_class_re,
                      const std::map<int, double>& per_class_pcls,
                      const LabelVector& labels, const RampedAlphas& alphas,
                      bool channelwise) {
  LossBundle b;
  b.cls = cls;
  b.num_positive = labels.num_positive();
  b.per_class_re = per_class_re;
  b.per_class_pcls = per_class_pcls;

  if (!channelwise) {
    // single merged pseudo-class, keyed -1; absent when no positives
    double aux = 0.0;
    if (per_class_re.count(-1)) aux += alphas.alpha_re * per_class_re.at(-1);
    if (per_class_pcls.count(-1)) aux += alphas.alpha_p * per_class_pcls.at(-1);
    b.total = cls + aux;
    return b;
  }

  double aux = 0.0;
  for (int c = 0; c < labels.size(); ++c) {
    if (!labels.positive(c)) continue;
    auto re = per_class_re.find(c);
    auto pc = per_class_pcls.find(c);
    if (re == per_class_re.end() || pc == per_class_pcls.end())
      throw ShapeError(strf("total_loss: missing per-class term for positive class %d", c));
    aux += alphas.alpha_p * pc->second + alphas.alpha_re * re->second;
  }
  b.total = cls + aux / std::max(1, b.num_positive);
  if (!std::isfinite(b.total)) throw NumericalError("total_loss: non-finite total");
  return b;
}

AdamState AdamState::init(size_t n, double lr_) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr_;
  return s;
}

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads) {
  require(params.size() == grads.size() && params.size() == state.m.size(),
          "adam_step: size mismatch");
  state.t += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace oass
