// SPDX-License-Identifier: Apache-2.0

#include "oass/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "oass/common.hpp"

namespace oass {

namespace {

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(v & 0xFF);
  b.push_back((v >> 8) & 0xFF);
}
void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xFF);
}

uint32_t get_u32(const uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (uint32_t(p[3]) << 24);
}
uint16_t get_u16(const uint8_t* p) { return p[0] | (p[1] << 8); }

}  // namespace

void write_bmp(const RgbImage& img, const std::string& path) {
  const int row_bytes = img.w * 3;
  const int pad = (4 - row_bytes % 4) % 4;
  const uint32_t data_size = static_cast<uint32_t>((row_bytes + pad) * img.h);
  std::vector<uint8_t> out;
  out.reserve(54 + data_size);
  out.push_back('B');
  out.push_back('M');
  put_u32(out, 54 + data_size);
  put_u32(out, 0);
  put_u32(out, 54);
  put_u32(out, 40);  // BITMAPINFOHEADER
  put_u32(out, static_cast<uint32_t>(img.w));
  put_u32(out, static_cast<uint32_t>(img.h));
  put_u16(out, 1);
  put_u16(out, 24);
  put_u32(out, 0);
  put_u32(out, data_size);
  put_u32(out, 2835);
  put_u32(out, 2835);
  put_u32(out, 0);
  put_u32(out, 0);
  for (int y = img.h - 1; y >= 0; --y) {
    for (int x = 0; x < img.w; ++x) {
      const uint8_t* p = img.at(y, x);
      out.push_back(p[2]);
      out.push_back(p[1]);
      out.push_back(p[0]);
    }
    for (int i = 0; i < pad; ++i) out.push_back(0);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

RgbImage read_bmp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(is)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 54 || buf[0] != 'B' || buf[1] != 'M')
    throw DataError("not a BMP file: " + path);
  const uint32_t offset = get_u32(&buf[10]);
  const int w = static_cast<int>(get_u32(&buf[18]));
  const int h = static_cast<int>(get_u32(&buf[22]));
  const uint16_t bpp = get_u16(&buf[28]);
  const uint32_t comp = get_u32(&buf[30]);
  if (bpp != 24 || comp != 0)
    throw DataError("unsupported BMP variant in " + path);
  const int row_bytes = w * 3;
  const int pad = (4 - row_bytes % 4) % 4;
  if (buf.size() < offset + static_cast<size_t>(row_bytes + pad) * h)
    throw DataError("truncated BMP file: " + path);
  RgbImage img(w, h);
  for (int y = 0; y < h; ++y) {
    const uint8_t* row = buf.data() + offset + static_cast<size_t>(row_bytes + pad) * (h - 1 - y);
    for (int x = 0; x < w; ++x) {
      uint8_t* p = img.at(y, x);
      p[0] = row[x * 3 + 2];
      p[1] = row[x * 3 + 1];
      p[2] = row[x * 3 + 0];
    }
  }
  return img;
}

RgbImage tensor_to_rgb(const Tensor& t) {
  require(t.c == 3, "tensor_to_rgb: expected 3 channels");
  RgbImage img(t.w, t.h);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x) {
      uint8_t* p = img.at(y, x);
      for (int ch = 0; ch < 3; ++ch) {
        double v = std::clamp(t.at(ch, y, x), 0.0, 1.0);
        p[ch] = static_cast<uint8_t>(std::lround(v * 255.0));
      }
    }
  return img;
}

Tensor rgb_to_tensor(const RgbImage& img) {
  Tensor t(3, img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const uint8_t* p = img.at(y, x);
      for (int ch = 0; ch < 3; ++ch) t.at(ch, y, x) = p[ch] / 255.0;
    }
  return t;
}

}  // namespace oass
