// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "volgen/tensor.hpp"

namespace volgen {

// Images are row-major [h][w][c], float in [0,1] for the F variant.
struct ImageF {
  int width = 0, height = 0, channels = 0;
  std::vector<float> px;

  static ImageF zeros(int w, int h, int c) { return {w, h, c, std::vector<float>(size_t(w) * h * c, 0.0f)}; }
  float& at(int x, int y, int c) { return px[(size_t(y) * width + x) * channels + c]; }
  float at(int x, int y, int c) const { return px[(size_t(y) * width + x) * channels + c]; }
};

// 8-bit PNG, 1 or 3 channels; values clamped/rounded from [0,1].
void write_png8(const std::string& path, const ImageF& img);
// 16-bit grayscale PNG for occupancy/depth dumps; `scale` maps float -> u16.
void write_png16(const std::string& path, const ImageF& img, double scale = 65535.0);

ImageF read_png(const std::string& path);  // 8 or 16 bit, any channel count -> [0,1]

ImageF tensor_to_image(const Tensor& t);   // [H,W,C] or [H,W]
Tensor image_to_tensor(const ImageF& img);

}  // namespace volgen
