#pragma once

#include <string>

#include "ssattn/tensor.hpp"

namespace ssattn::io {

// 8-bit RGB PNG -> [3,H,W] in [0,1]. Grayscale and alpha inputs are converted.
Tensor read_png(const std::string& path);

// [3,H,W] (or [1,H,W], written as gray replicated to RGB), clamped to [0,1]
// and rounded to 8 bits.
void write_png(const std::string& path, const Tensor& img);

}  // namespace ssattn::io
