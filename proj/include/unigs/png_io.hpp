#pragma once

#include <string>

#include "unigs/tensor.hpp"

namespace unigs {

struct PngImage {
  Tensor rgb;    // [3,H,W] in [0,1]
  Tensor alpha;  // [1,H,W] when the file carries alpha, else undefined
  bool has_alpha() const { return alpha.defined(); }
};

// Writes 8-bit RGB (or RGBA when alpha is defined). Values are clamped to
// [0,1] and rounded to the nearest of 256 levels.
void save_png(const std::string& path, const Tensor& rgb,
              const Tensor& alpha = Tensor());

// Reads any PNG as 8-bit, expanding gray/palette to RGB. 16-bit files are
// reduced to 8. Levels map back to k/255.
PngImage load_png(const std::string& path);

// Header-only peek: (width, height) without decoding the pixel data.
std::pair<long, long> png_size(const std::string& path);

}  // namespace unigs
