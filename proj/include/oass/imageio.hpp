// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oass/tensor.hpp"

namespace oass {

// 8-bit interleaved RGB raster.
struct RgbImage {
  int w = 0, h = 0;
  std::vector<uint8_t> px;  // 3 bytes per pixel, row-major

  RgbImage() = default;
  RgbImage(int w_, int h_) : w(w_), h(h_), px(static_cast<size_t>(w_) * h_ * 3, 0) {}

  uint8_t* at(int y, int x) { return px.data() + (static_cast<size_t>(y) * w + x) * 3; }
  const uint8_t* at(int y, int x) const {
    return px.data() + (static_cast<size_t>(y) * w + x) * 3;
  }
};

// Uncompressed 24-bit BMP; byte-deterministic for fixed input.
void write_bmp(const RgbImage& img, const std::string& path);
RgbImage read_bmp(const std::string& path);

// [0,1] float tensor (3 x H x W) <-> 8-bit raster.
RgbImage tensor_to_rgb(const Tensor& t);
Tensor rgb_to_tensor(const RgbImage& img);

}  // namespace oass
