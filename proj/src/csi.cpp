// SPDX-License-Identifier: Apache-2.0

#include "oass/csi.hpp"

#include <algorithm>

#include "oass/common.hpp"

namespace oass {

Map2D csi_mask(const Map2D& cam_channel, MaskNorm norm) {
  if (norm == MaskNorm::None) return cam_channel;
  double lo = cam_channel.v[0], hi = cam_channel.v[0];
  for (double x : cam_channel.v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  Map2D m(cam_channel.h, cam_channel.w);
  if (hi <= 0.0) return m;  // no response anywhere -> zero mask
  if (hi == lo) {
    m.v.assign(m.v.size(), 1.0);  // uniformly at its own max
    return m;
  }
  // divide rather than multiply by a reciprocal so the max lands exactly on 1
  for (size_t i = 0; i < m.v.size(); ++i)
    m.v[i] = (cam_channel.v[i] - lo) / (hi - lo);
  return m;
}

CsiFeatures generate_csi(const FeatureMap& features,
                         const ClassActivationMaps& cams, MaskNorm norm) {
  require(features.data.h == cams.data.h && features.data.w == cams.data.w,
          "generate_csi: spatial dims mismatch");
  const int C = cams.num_classes(), D = features.depth();
  const int h = features.data.h, w = features.data.w;
  const size_t plane = static_cast<size_t>(h) * w;

  CsiFeatures out;
  out.per_class.reserve(C);
  for (int c = 0; c < C; ++c) {
    Map2D mask = csi_mask(channel_copy(cams.data, c), norm);
    Tensor f(D, h, w);
    for (int d = 0; d < D; ++d) {
      const double* src = features.data.v.data() + static_cast<size_t>(d) * plane;
      double* dst = f.v.data() + static_cast<size_t>(d) * plane;
      for (size_t i = 0; i < plane; ++i) dst[i] = src[i] * mask.v[i];
    }
    out.per_class.push_back(std::move(f));
  }
  return out;
}

CsiHeadForward csi_head_forward(const CsiFeatures& csi, const Model& model) {
  const int C = model.num_classes;
  require(static_cast<int>(csi.per_class.size()) == C, "csi_head: class count mismatch");
  const int D = model.layout.depth;
  const int h = csi.per_class[0].h, w = csi.per_class[0].w;
  const size_t plane = static_cast<size_t>(h) * w;

  CsiHeadForward fwd;
  fwd.logit_maps = Tensor(C, h, w);
  for (int c = 0; c < C; ++c) {
    const Tensor& f = csi.per_class[c];
    require(f.c == D && f.h == h && f.w == w, "csi_head: feature shape mismatch");
    std::span<const double> proj = model.csi_proj(c);
    double* dst = fwd.logit_maps.v.data() + static_cast<size_t>(c) * plane;
    for (int d = 0; d < D; ++d) {
      const double pv = proj[d];
      const double* src = f.v.data() + static_cast<size_t>(d) * plane;
      for (size_t i = 0; i < plane; ++i) dst[i] += pv * src[i];
    }
  }
  // GAP commutes with the linear mixer; pool first, then mix
  fwd.pooled = global_average_pool(fwd.logit_maps);
  fwd.logits.assign(C, 0.0);
  const double* M = model.csi_mixer();
  const double* bias = model.csi_bias();
  for (int c = 0; c < C; ++c) {
    double z = bias[c];
    for (int j = 0; j < C; ++j) z += M[c * C + j] * fwd.pooled[j];
    fwd.logits[c] = z;
  }
  return fwd;
}

std::vector<double> csi_head(const CsiFeatures& csi, const Model& model) {
  return csi_head_forward(csi, model).logits;
}

}  // namespace oass
