#include "retouch/palette.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace retouch {

namespace {

double lab_dist2(const Lab& a, const Lab& b) {
    double dl = a.L - b.L, da = a.a - b.a, db = a.b - b.b;
    return dl * dl + da * da + db * db;
}

std::vector<Lab> image_lab(const ImageTensor& img) {
    if (img.state != ColorState::LinearSRGB) {
        throw std::invalid_argument("extract_palette/compute_masks need a LinearSRGB image");
    }
    std::vector<Lab> lab(img.pixel_count());
    for (size_t p = 0; p < lab.size(); ++p) {
        const double* x = &img.data[p * 3];
        lab[p] = rgb_to_lab(x[0], x[1], x[2]);
    }
    return lab;
}

}  // namespace

Palette extract_palette(const ImageTensor& img, int k, uint64_t seed) {
    if (k < 1 || k > 16) throw std::invalid_argument("extract_palette: k must be in [1,16]");
    std::vector<Lab> points = image_lab(img);
    const size_t n = points.size();
    Rng rng(seed);

    // k-means++ seeding
    std::vector<Lab> centers;
    centers.reserve(k);
    centers.push_back(points[rng.index(n)]);
    std::vector<double> d2(n);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (size_t p = 0; p < n; ++p) {
            double best = std::numeric_limits<double>::max();
            for (const Lab& ctr : centers) best = std::min(best, lab_dist2(points[p], ctr));
            d2[p] = best;
            total += best;
        }
        if (total <= 0.0) {
            centers.push_back(centers.back());  // fewer distinct colors than k
            continue;
        }
        double target = rng.uniform() * total;
        double run = 0.0;
        size_t pick = n - 1;
        for (size_t p = 0; p < n; ++p) {
            run += d2[p];
            if (run >= target) {
                pick = p;
                break;
            }
        }
        centers.push_back(points[pick]);
    }

    // Lloyd iterations
    std::vector<int> assign(n, 0);
    for (int iter = 0; iter < 50; ++iter) {
        for (size_t p = 0; p < n; ++p) {
            double best = std::numeric_limits<double>::max();
            int bi = 0;
            for (int c = 0; c < k; ++c) {
                double d = lab_dist2(points[p], centers[c]);
                if (d < best) {
                    best = d;
                    bi = c;
                }
            }
            assign[p] = bi;
        }
        double max_move = 0.0;
        for (int c = 0; c < k; ++c) {
            double sl = 0, sa = 0, sb = 0;
            size_t cnt = 0;
            for (size_t p = 0; p < n; ++p) {
                if (assign[p] != c) continue;
                sl += points[p].L;
                sa += points[p].a;
                sb += points[p].b;
                ++cnt;
            }
            if (cnt == 0) continue;  // empty cluster keeps its centroid
            Lab next{sl / cnt, sa / cnt, sb / cnt};
            max_move = std::max(max_move, std::sqrt(lab_dist2(next, centers[c])));
            centers[c] = next;
        }
        if (max_move < 1e-4) break;
    }

    std::sort(centers.begin(), centers.end(), [](const Lab& a, const Lab& b) {
        if (a.L != b.L) return a.L < b.L;
        if (a.a != b.a) return a.a < b.a;
        return a.b < b.b;
    });
    Palette pal;
    pal.entries = std::move(centers);
    return pal;
}

SoftMaskSet compute_masks(const ImageTensor& img, const Palette& palette) {
    constexpr double kRangeEps = 1e-12;
    std::vector<Lab> points = image_lab(img);
    SoftMaskSet set;
    set.masks.resize(palette.size());
    for (int c = 0; c < palette.size(); ++c) {
        SoftMask& m = set.masks[c];
        m.height = img.height;
        m.width = img.width;
        m.weights.resize(points.size());
        double dmin = std::numeric_limits<double>::max(), dmax = 0.0;
        for (size_t p = 0; p < points.size(); ++p) {
            double d = std::sqrt(lab_dist2(points[p], palette.entries[c]));
            m.weights[p] = d;
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
        }
        if (dmax == dmin) {
            std::fill(m.weights.begin(), m.weights.end(), 1.0);
            continue;
        }
        const double inv = 1.0 / (dmax - dmin + kRangeEps);
        for (double& w : m.weights) w = 1.0 - (w - dmin) * inv;
    }
    return set;
}

ImageTensor composite(const ImageTensor& base, const ImageTensor& retouched, const SoftMask& mask,
                      CompositeTape* tape) {
    if (!base.same_shape(retouched) || base.height != mask.height || base.width != mask.width) {
        throw std::invalid_argument("composite: shape mismatch");
    }
    if (tape) {
        tape->mask = &mask;
        tape->height = base.height;
        tape->width = base.width;
    }
    ImageTensor out(base.height, base.width, base.state);
    for (size_t p = 0; p < base.pixel_count(); ++p) {
        const double w = mask.weights[p];
        for (int c = 0; c < 3; ++c) {
            out.data[p * 3 + c] = retouched.data[p * 3 + c] * w + base.data[p * 3 + c] * (1.0 - w);
        }
    }
    return out;
}

void composite_backward(const CompositeTape& tape, const ImageTensor& upstream,
                        ImageTensor& d_base, ImageTensor& d_retouched) {
    if (upstream.height != tape.height || upstream.width != tape.width) {
        throw std::invalid_argument("composite_backward: shape mismatch");
    }
    d_base = ImageTensor(tape.height, tape.width, upstream.state);
    d_retouched = ImageTensor(tape.height, tape.width, upstream.state);
    for (size_t p = 0; p < upstream.pixel_count(); ++p) {
        const double w = tape.mask->weights[p];
        for (int c = 0; c < 3; ++c) {
            d_retouched.data[p * 3 + c] = upstream.data[p * 3 + c] * w;
            d_base.data[p * 3 + c] = upstream.data[p * 3 + c] * (1.0 - w);
        }
    }
}

}  // namespace retouch
