// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <vector>

#include "oass/csi.hpp"
#include "oass/data.hpp"
#include "oass/interp.hpp"
#include "oass/keypoint.hpp"
#include "oass/patching.hpp"
#include "oass/training.hpp"

namespace oass {

// How CSI logits enter the classification loss when the head is enabled.
enum class CsiClsMode { Replace, Supplement };

struct PipelineConfig {
  StrategyConfig keypoint;
  Interp interpolation = Interp::Bilinear;
  ReForm re_form = ReForm::Mae;
  CsiClsMode csi_cls_mode = CsiClsMode::Replace;
  bool keypoint_from_teacher = false;  // cut driven by teacher CAMs instead
};

// Execution counters; the zero-positive skip rule is asserted through them.
struct PipelineCounters {
  int keypoints_computed = 0;
  int patch_encodes = 0;
  int fallbacks = 0;
};

// Pixel-space cut per positive class; key -1 is the single merged cut used
// by Max and Center.
using KeypointPlan = std::map<int, Keypoint>;

struct SampleForward {
  LossBundle losses;
  std::vector<double> logits;  // the logits L_cls was computed on
  KeypointPlan plan;
  PipelineCounters counters;
};

// The cut plan the pipeline would use at the current parameters. Empty when
// the sample has no positive labels.
KeypointPlan plan_keypoints(const Model& model, const EmaState& ema,
                            const Sample& sample, const PipelineConfig& cfg,
                            PipelineCounters* counters = nullptr);

// The CSI masks the pipeline would derive at the current parameters
// (min-max normalized student CAM channels, one per class).
std::vector<Map2D> plan_csi_masks(const Model& model, const Sample& sample);

// Full per-sample loss (classification + reconstruction + patch
// classification, ramp weights applied). When `grad` is non-null the
// analytic gradient is accumulated into it (same layout as model.params;
// caller zeroes it). `fixed_plan` bypasses keypoint detection and
// `fixed_masks` bypasses mask derivation: the gradient treats both as
// constants (the argmax is piecewise constant, the masks are detached), so
// a finite-difference check must hold them constant too.
SampleForward sample_forward(const Model& model, const EmaState& ema,
                             const Sample& sample, const RampedAlphas& alphas,
                             const PipelineConfig& cfg,
                             const KeypointPlan* fixed_plan = nullptr,
                             std::vector<double>* grad = nullptr,
                             const std::vector<Map2D>* fixed_masks = nullptr);

}  // namespace oass
