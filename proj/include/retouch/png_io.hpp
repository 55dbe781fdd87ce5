#pragma once

#include <string>

#include "retouch/image.hpp"

namespace retouch {

// 8/16-bit RGB or RGBA PNG -> [0,1] NonlinearSRGB tensor. Alpha is dropped.
// Throws std::runtime_error with a descriptive message on missing files,
// truncated data, or unsupported bit depth / color type.
ImageTensor load_png(const std::string& path);

// 8-bit RGB PNG; value v is written as round(v*255). The image must be in
// NonlinearSRGB state (de-linearize first).
void save_png(const ImageTensor& img, const std::string& path);

}  // namespace retouch
