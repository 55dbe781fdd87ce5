#pragma once

#include <vector>

#include "retouch/image.hpp"
#include "retouch/rng.hpp"

namespace retouch {

// K dominant image colors in Lab space, sorted by ascending L*.
struct Palette {
    std::vector<Lab> entries;
    int size() const { return static_cast<int>(entries.size()); }
};

// One per-pixel weight map in [0,1] per palette entry.
struct SoftMask {
    int height = 0, width = 0;
    std::vector<double> weights;  // H*W

    double at(int y, int x) const { return weights[static_cast<size_t>(y) * width + x]; }
};

struct SoftMaskSet {
    std::vector<SoftMask> masks;
    int size() const { return static_cast<int>(masks.size()); }
};

// Seeded k-means++ over per-pixel Lab values of a LinearSRGB image.
// At most 50 Lloyd iterations, stopping when no centroid moves more than
// 1e-4. Deterministic for a fixed (image, k, seed); duplicate centroids are
// allowed when k exceeds the number of distinct colors.
Palette extract_palette(const ImageTensor& img, int k, uint64_t seed);

// Soft masks from Lab distance to each palette entry, min-max normalized
// per mask: omega = 1 - (d - min)/(max - min + eps). A constant image
// (max == min) gets an all-ones mask.
SoftMaskSet compute_masks(const ImageTensor& img, const Palette& palette);

// out = retouched * mask + base * (1 - mask), pointwise per channel.
struct CompositeTape {
    const SoftMask* mask = nullptr;
    int height = 0, width = 0;
};
ImageTensor composite(const ImageTensor& base, const ImageTensor& retouched, const SoftMask& mask,
                      CompositeTape* tape = nullptr);
void composite_backward(const CompositeTape& tape, const ImageTensor& upstream,
                        ImageTensor& d_base, ImageTensor& d_retouched);

}  // namespace retouch
