// SPDX-License-Identifier: Apache-2.0

#include "oass/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oass/common.hpp"

namespace oass {

namespace {

Map2D project_channel(const Tensor& feat, std::span<const double> w) {
  Map2D out(feat.h, feat.w);
  const size_t plane = static_cast<size_t>(feat.h) * feat.w;
  for (int d = 0; d < feat.c; ++d) {
    const double* p = feat.v.data() + d * plane;
    for (size_t i = 0; i < plane; ++i) out.v[i] += w[d] * p[i];
  }
  return out;
}

Map2D clamped(const Map2D& raw) {
  Map2D out = raw;
  for (double& v : out.v) v = std::max(0.0, v);
  return out;
}

// Gradient views into a flat buffer with the model's layout.
struct GradSink {
  std::vector<double>* g = nullptr;
  const ParamLayout* L = nullptr;

  explicit operator bool() const { return g != nullptr; }
  double* head_w(int c) {
    return g->data() + L->head_w + static_cast<size_t>(c) * L->depth;
  }
  double& head_b(int c) { return (*g)[L->head_b + c]; }
  double* csi_proj(int c) {
    return g->data() + L->csi_proj + static_cast<size_t>(c) * L->depth;
  }
  double* csi_mixer() { return g->data() + L->csi_mixer; }
  double* csi_bias() { return g->data() + L->csi_bias; }
  std::span<double> enc() {
    return {g->data(), static_cast<size_t>(L->encoder_count)};
  }
};

// d/dx of the chosen discrepancy at (full - tiled) = diff.
double re_dfull(double diff, ReForm form, double inv_hw) {
  if (form == ReForm::Mae) return diff > 0 ? inv_hw : (diff < 0 ? -inv_hw : 0.0);
  return 2.0 * diff * inv_hw;
}

struct CutProducts {
  PatchGeometry geom;
  Tensor tiled;              // D x fh x fw teacher reconstruction
  std::vector<double> gap_tiled;  // spatial mean per depth channel
};

CutProducts run_cut(const Model& model, const EmaState& ema, const Sample& s,
                    const Keypoint& kp, const PipelineConfig& cfg,
                    PipelineCounters& counters) {
  PatchSet ps = make_patch_set(s.image, kp, cfg.interpolation);
  std::array<FeatureMap, 4> pf;
  for (int i = 0; i < 4; ++i) {
    pf[i] = extract_features_with(model, ps.patches[i], ema.teacher);
    ++counters.patch_encodes;
  }
  FeatureMap tiled = tile_features(pf, ps.geometry, cfg.interpolation);
  CutProducts out;
  out.geom = ps.geometry;
  out.gap_tiled = global_average_pool(tiled.data);
  out.tiled = std::move(tiled.data);
  return out;
}

}  // namespace

KeypointPlan plan_keypoints(const Model& model, const EmaState& ema,
                            const Sample& sample, const PipelineConfig& cfg,
                            PipelineCounters* counters) {
  PipelineCounters scratch;
  PipelineCounters& ctr = counters ? *counters : scratch;
  KeypointPlan plan;
  if (sample.labels.num_positive() == 0) return plan;

  const int W = sample.image.width(), H = sample.image.height();
  const int mp = cfg.keypoint.min_patch;
  const KeypointStrategy strat = cfg.keypoint.strategy;

  if (strat == KeypointStrategy::Center) {
    Keypoint kp{W / 2, H / 2, CoordSpace::Pixel, 1};
    plan[-1] = to_pixel_space(kp, 1, W, H, mp);
    ++ctr.keypoints_computed;
    return plan;
  }

  if (strat == KeypointStrategy::GtBbox) {
    std::vector<ClassBoxCenter> centers;
    for (const BBoxAnnotation& b : sample.boxes)
      if (sample.labels.positive(b.class_id))
        centers.push_back({b.class_id, b.center_x(), b.center_y()});
    std::map<int, KeypointResult> per_class = keypoint_gt_bbox(centers, W, H);
    for (int c = 0; c < sample.labels.size(); ++c) {
      if (!sample.labels.positive(c)) continue;
      auto it = per_class.find(c);
      KeypointResult kr;
      if (it != per_class.end()) {
        kr = it->second;
      } else {
        // positive label without any box annotation: cut at the center
        kr.kp = Keypoint{W / 2, H / 2, CoordSpace::Pixel, 1};
        kr.fallback = true;
      }
      plan[c] = to_pixel_space(kr.kp, 1, W, H, mp);
      ++ctr.keypoints_computed;
      ctr.fallbacks += kr.fallback;
    }
    return plan;
  }

  // CAM-driven strategies
  FeatureMap f = cfg.keypoint_from_teacher
                     ? extract_features_with(model, sample.image, ema.teacher)
                     : extract_features(model, sample.image);
  ClassActivationMaps cams = compute_cams(f, model);
  const int s = f.stride;

  if (strat == KeypointStrategy::Max) {
    plan[-1] = to_pixel_space(keypoint_max(cams), s, W, H, mp);
    ++ctr.keypoints_computed;
    return plan;
  }

  for (int c = 0; c < sample.labels.size(); ++c) {
    if (!sample.labels.positive(c)) continue;
    KeypointResult kr;
    if (strat == KeypointStrategy::CMax) {
      kr.kp = argmax_keypoint(channel_copy(cams.data, c));
    } else if (strat == KeypointStrategy::CTopk) {
      kr = keypoint_ctopk(channel_copy(cams.data, c), cfg.keypoint.k);
    } else {
      kr = keypoint_ctopkw(channel_copy(cams.data, c), cfg.keypoint.k,
                           cfg.keypoint);
    }
    plan[c] = to_pixel_space(kr.kp, s, W, H, mp);
    ++ctr.keypoints_computed;
    ctr.fallbacks += kr.fallback;
  }
  return plan;
}

std::vector<Map2D> plan_csi_masks(const Model& model, const Sample& sample) {
  FeatureMap F = extract_features(model, sample.image);
  ClassActivationMaps cams = compute_cams(F, model);
  std::vector<Map2D> masks;
  masks.reserve(model.num_classes);
  for (int c = 0; c < model.num_classes; ++c)
    masks.push_back(csi_mask(channel_copy(cams.data, c), MaskNorm::MinMax));
  return masks;
}

SampleForward sample_forward(const Model& model, const EmaState& ema,
                             const Sample& sample, const RampedAlphas& alphas,
                             const PipelineConfig& cfg,
                             const KeypointPlan* fixed_plan,
                             std::vector<double>* grad,
                             const std::vector<Map2D>* fixed_masks) {
  const int C = model.num_classes;
  require(sample.labels.size() == C, "sample_forward: label count mismatch");
  require(!fixed_masks || static_cast<int>(fixed_masks->size()) == C,
          "sample_forward: fixed mask count mismatch");
  GradSink gs;
  if (grad) {
    require(grad->size() == model.params.size(),
            "sample_forward: gradient buffer size mismatch");
    gs = GradSink{grad, &model.layout};
  }

  SampleForward out;
  EncoderTrace trace;
  FeatureMap F = extract_features(model, sample.image, grad ? &trace : nullptr);
  const int fh = F.data.h, fw = F.data.w;
  const double inv_hw = 1.0 / (static_cast<double>(fh) * fw);
  Tensor raw = project_cams(F, model);
  ClassActivationMaps cams;
  cams.data = raw;
  for (double& v : cams.data.v) v = std::max(0.0, v);

  // dL/dF accumulated across every student path, sent through the encoder
  // backward once at the end.
  Tensor gradF;
  if (grad) gradF = Tensor(F.data.c, fh, fw);

  // classification logits
  std::vector<double> base_logits = classify(F, model);
  std::vector<Map2D> masks;
  CsiHeadForward csif;
  std::vector<double> msum;  // per class c, per depth d: sum_ij F * mask_c
  const bool use_csi = model.csi_enabled;
  if (use_csi) {
    masks.reserve(C);
    CsiFeatures feats;
    feats.per_class.reserve(C);
    for (int c = 0; c < C; ++c) {
      masks.push_back(fixed_masks
                          ? (*fixed_masks)[c]
                          : csi_mask(channel_copy(cams.data, c), MaskNorm::MinMax));
      require(masks[c].h == fh && masks[c].w == fw,
              "sample_forward: mask dims differ from features");
      Tensor fc = F.data;
      const size_t plane = static_cast<size_t>(fh) * fw;
      for (int d = 0; d < fc.c; ++d)
        for (size_t i = 0; i < plane; ++i) fc.v[d * plane + i] *= masks[c].v[i];
      feats.per_class.push_back(std::move(fc));
    }
    csif = csi_head_forward(feats, model);
    if (grad) {
      msum.assign(static_cast<size_t>(C) * model.layout.depth, 0.0);
      const size_t plane = static_cast<size_t>(fh) * fw;
      for (int c = 0; c < C; ++c)
        for (int d = 0; d < model.layout.depth; ++d) {
          double s = 0.0;
          const double* p = feats.per_class[c].v.data() + d * plane;
          for (size_t i = 0; i < plane; ++i) s += p[i];
          msum[static_cast<size_t>(c) * model.layout.depth + d] = s;
        }
    }
  }

  const bool csi_for_cls = use_csi;
  const bool supplement = use_csi && cfg.csi_cls_mode == CsiClsMode::Supplement;
  out.logits = csi_for_cls ? csif.logits : base_logits;

  double cls = classification_loss(out.logits, sample.labels);
  if (supplement)
    cls = 0.5 * (cls + classification_loss(base_logits, sample.labels));

  // backward through the classification term(s)
  auto backprop_base_logits = [&](const std::vector<double>& logits,
                                  double scale) {
    std::vector<double> gap = global_average_pool(F.data);
    for (int c = 0; c < C; ++c) {
      const double gz =
          scale * (sigmoid(logits[c]) - sample.labels.positive(c)) / C;
      gs.head_b(c) += gz;
      double* gw = gs.head_w(c);
      std::span<const double> wc = model.head_w(c);
      for (int d = 0; d < model.layout.depth; ++d) gw[d] += gz * gap[d];
      const size_t plane = static_cast<size_t>(fh) * fw;
      for (int d = 0; d < model.layout.depth; ++d) {
        const double add = gz * wc[d] * inv_hw;
        double* gp = gradF.v.data() + d * plane;
        for (size_t i = 0; i < plane; ++i) gp[i] += add;
      }
    }
  };
  auto backprop_csi_logits = [&](double scale) {
    const int D = model.layout.depth;
    const double* mixer = model.csi_mixer();
    std::vector<double> gpool(C, 0.0);
    for (int i = 0; i < C; ++i) {
      const double gz =
          scale * (sigmoid(csif.logits[i]) - sample.labels.positive(i)) / C;
      gs.csi_bias()[i] += gz;
      for (int j = 0; j < C; ++j) {
        gs.csi_mixer()[i * C + j] += gz * csif.pooled[j];
        gpool[j] += gz * mixer[i * C + j];
      }
    }
    const size_t plane = static_cast<size_t>(fh) * fw;
    for (int j = 0; j < C; ++j) {
      const double glm = gpool[j] * inv_hw;  // uniform over pixels
      double* gp = gs.csi_proj(j);
      for (int d = 0; d < D; ++d) gp[d] += glm * msum[j * D + d];
      std::span<const double> pj = model.csi_proj(j);
      for (int d = 0; d < D; ++d) {
        const double coef = glm * pj[d];
        double* gf = gradF.v.data() + d * plane;
        for (size_t i = 0; i < plane; ++i) gf[i] += coef * masks[j].v[i];
      }
    }
  };
  if (grad) {
    if (!use_csi) {
      backprop_base_logits(base_logits, 1.0);
    } else if (supplement) {
      backprop_csi_logits(0.5);
      backprop_base_logits(base_logits, 0.5);
    } else {
      backprop_csi_logits(1.0);
    }
  }

  // auxiliary self-supervision
  const int P = sample.labels.num_positive();
  const bool channelwise = is_channelwise(cfg.keypoint.strategy);
  std::map<int, double> re_terms, pcls_terms;
  if (P > 0) {
    out.plan = fixed_plan ? *fixed_plan
                          : plan_keypoints(model, ema, sample, cfg, &out.counters);
    const double re_coef = channelwise ? alphas.alpha_re / P : alphas.alpha_re;
    const double p_coef = channelwise ? alphas.alpha_p / P : alphas.alpha_p;

    for (const auto& [key, kp] : out.plan) {
      CutProducts cut = run_cut(model, ema, sample, kp, cfg, out.counters);
      require(cut.tiled.h == fh && cut.tiled.w == fw,
              "sample_forward: tiled dims differ from full feature dims");

      if (key >= 0) {
        // channel-wise: one cut per positive class, terms on that channel
        const int c = key;
        Map2D raw_full = channel_copy(raw, c);
        Map2D raw_tiled = project_channel(cut.tiled, model.head_w(c));
        Map2D full = clamped(raw_full);
        Map2D tiled = clamped(raw_tiled);
        re_terms[c] = reconstruction_loss(full, tiled, cfg.re_form);
        pcls_terms[c] =
            patch_classification_loss(raw_tiled, model.head_b(c), 1.0);
        if (grad) {
          std::span<const double> wc = model.head_w(c);
          double* gw = gs.head_w(c);
          const size_t plane = static_cast<size_t>(fh) * fw;
          for (size_t i = 0; i < plane; ++i) {
            const double dfull = re_dfull(full.v[i] - tiled.v[i], cfg.re_form, inv_hw);
            if (raw_full.v[i] > 0.0 && dfull != 0.0) {
              const double g = re_coef * dfull;
              for (int d = 0; d < cut.tiled.c; ++d) {
                gw[d] += g * F.data.v[d * plane + i];
                gradF.v[d * plane + i] += g * wc[d];
              }
            }
            if (raw_tiled.v[i] > 0.0 && dfull != 0.0) {
              const double g = -re_coef * dfull;
              for (int d = 0; d < cut.tiled.c; ++d)
                gw[d] += g * cut.tiled.v[d * plane + i];
            }
          }
          const double z =
              std::accumulate(raw_tiled.v.begin(), raw_tiled.v.end(), 0.0) *
                  inv_hw + model.head_b(c);
          const double gz = p_coef * (sigmoid(z) - 1.0);
          gs.head_b(c) += gz;
          for (int d = 0; d < cut.tiled.c; ++d) gw[d] += gz * cut.gap_tiled[d];
        }
      } else {
        // merged cut (Max / Center): discrepancy on the merged CAM, patch
        // classification against the full label vector
        FeatureMap tiled_fm;
        tiled_fm.data = cut.tiled;
        tiled_fm.stride = F.stride;
        Tensor raw_t = project_cams(tiled_fm, model);
        ClassActivationMaps cams_t;
        cams_t.data = raw_t;
        for (double& v : cams_t.data.v) v = std::max(0.0, v);
        Map2D merged_full = merge_cams(cams);
        Map2D merged_tiled = merge_cams(cams_t);
        re_terms[-1] = reconstruction_loss(merged_full, merged_tiled, cfg.re_form);
        double p_loss = 0.0;
        std::vector<double> tz(C);
        for (int c = 0; c < C; ++c) {
          tz[c] = std::accumulate(raw_t.v.begin() + static_cast<size_t>(c) * fh * fw,
                                  raw_t.v.begin() + static_cast<size_t>(c + 1) * fh * fw,
                                  0.0) * inv_hw + model.head_b(c);
          p_loss += bce_with_logit(tz[c], sample.labels.positive(c));
        }
        pcls_terms[-1] = p_loss / C;
        if (grad) {
          const size_t plane = static_cast<size_t>(fh) * fw;
          for (size_t i = 0; i < plane; ++i) {
            const double dfull =
                re_dfull(merged_full.v[i] - merged_tiled.v[i], cfg.re_form, inv_hw);
            if (dfull == 0.0) continue;
            // subgradient routed to the first channel attaining the max,
            // matching merge_cams' strict-greater update rule
            int cf = 0, ct = 0;
            for (int c = 1; c < C; ++c) {
              if (cams.data.v[c * plane + i] > cams.data.v[cf * plane + i]) cf = c;
              if (cams_t.data.v[c * plane + i] > cams_t.data.v[ct * plane + i]) ct = c;
            }
            if (raw.v[cf * plane + i] > 0.0) {
              const double g = re_coef * dfull;
              std::span<const double> wc = model.head_w(cf);
              double* gw = gs.head_w(cf);
              for (int d = 0; d < cut.tiled.c; ++d) {
                gw[d] += g * F.data.v[d * plane + i];
                gradF.v[d * plane + i] += g * wc[d];
              }
            }
            if (raw_t.v[ct * plane + i] > 0.0) {
              const double g = -re_coef * dfull;
              double* gw = gs.head_w(ct);
              for (int d = 0; d < cut.tiled.c; ++d)
                gw[d] += g * cut.tiled.v[d * plane + i];
            }
          }
          for (int c = 0; c < C; ++c) {
            const double gz =
                p_coef * (sigmoid(tz[c]) - sample.labels.positive(c)) / C;
            gs.head_b(c) += gz;
            double* gw = gs.head_w(c);
            for (int d = 0; d < cut.tiled.c; ++d)
              gw[d] += gz * cut.gap_tiled[d];
          }
        }
      }
    }
  }

  out.losses = total_loss(cls, re_terms, pcls_terms, sample.labels, alphas,
                          channelwise);
  if (grad) {
    model.encoder->backward(trace, gradF, model.encoder_params(), gs.enc());
  }
  return out;
}

}  // namespace oass
