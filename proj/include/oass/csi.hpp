// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "oass/cam_core.hpp"

namespace oass {

enum class MaskNorm { MinMax, None };

// Per-class instance feature maps f_c, each D x h x w.
struct CsiFeatures {
  std::vector<Tensor> per_class;
};

// Per-channel mask from a CAM channel: min-max normalized to [0, 1].
// A channel with no positive response masks everything out; a constant
// positive channel passes features through unchanged.
Map2D csi_mask(const Map2D& cam_channel, MaskNorm norm);

// f_c[:, i, j] = features[:, i, j] * m_c[i, j]. Masks are treated as
// constants; gradient flows through the features only.
CsiFeatures generate_csi(const FeatureMap& features,
                         const ClassActivationMaps& cams,
                         MaskNorm norm = MaskNorm::MinMax);

// Per-class 1x1 projection to one logit map, channel concat, 1x1 mixer with
// bias, then global average pooling to image-level logits.
std::vector<double> csi_head(const CsiFeatures& csi, const Model& model);

// Intermediate products of csi_head, for training.
struct CsiHeadForward {
  Tensor logit_maps;              // C x h x w, pre-mixer
  std::vector<double> pooled;     // GAP of logit_maps (length C)
  std::vector<double> logits;     // mixer output (length C)
};

CsiHeadForward csi_head_forward(const CsiFeatures& csi, const Model& model);

}  // namespace oass
