#pragma once

#include <string>

#include "mde/core/tensor.hpp"

namespace mde {

// 8-bit PNG IO; tensors are [3,H,W] (RGB) or [H,W] (gray) with [0,1] values.
Tensor read_png_rgb01(const std::string& path);
void write_png_rgb01(const std::string& path, const Tensor& image);
Tensor read_png_gray01(const std::string& path);
void write_png_gray01(const std::string& path, const Tensor& image);

// Binary masks stored as 0/255 grayscale; values >= 128 load as 1.
Tensor read_mask_png(const std::string& path);
void write_mask_png(const std::string& path, const Tensor& mask);

}  // namespace mde
