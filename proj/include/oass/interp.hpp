// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "oass/tensor.hpp"

namespace oass {

enum class Interp { Bilinear, Nearest };

// Resize every channel to (oh, ow). Bilinear uses the half-pixel-center
// convention (align_corners off): src = (dst + 0.5) * scale - 0.5, with
// sampling coordinates clamped to the valid range. Resizing to the same
// size reproduces the input exactly.
Tensor resize(const Tensor& src, int oh, int ow, Interp interp = Interp::Bilinear);

Map2D resize(const Map2D& src, int oh, int ow, Interp interp = Interp::Bilinear);

}  // namespace oass
