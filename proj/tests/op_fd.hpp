#pragma once

// Finite-difference instances for the retouching operators, shared by the
// unit and acceptance suites. Instances are sampled with ~1e-3 clearance
// from clamp/sector/knot boundaries, where the subgradient conventions make
// central differences meaningless.

#include <cmath>

#include "helpers.hpp"
#include "retouch/ops.hpp"

namespace testutil {

inline retouch::ImageTensor random_upstream(retouch::Rng& rng, int h, int w) {
    retouch::ImageTensor up(h, w, retouch::ColorState::LinearSRGB);
    for (double& v : up.data) v = rng.uniform(-1.0, 1.0);
    return up;
}

inline double dot_upstream(const retouch::ImageTensor& upstream,
                           const retouch::ImageTensor& img) {
    double acc = 0.0;
    for (size_t i = 0; i < img.size(); ++i) acc += upstream.data[i] * img.data[i];
    return acc;
}

inline retouch::OpParams safe_params_for(retouch::OpKind kind, retouch::Rng& rng) {
    using retouch::OpKind;
    const retouch::OpKindInfo& info = retouch::op_kind_info(kind);
    retouch::OpParams p;
    p.kind = kind;
    p.values.resize(info.param_dim);
    if (kind == OpKind::GaussianBlur) {
        // stay clear of the kernel-radius steps at sigma = k/3 and the
        // identity threshold at 0.05
        static const double zones[][2] = {
            {0.38, 0.62}, {0.72, 0.95}, {1.05, 1.28}, {1.39, 1.62}, {1.72, 1.95}};
        const size_t z = rng.index(5);
        p.values[0] = rng.uniform(zones[z][0], zones[z][1]);
        return p;
    }
    if (kind == OpKind::Hue) {
        const double mag = rng.uniform(0.1, 0.95) * info.hi;
        p.values[0] = rng.uniform() < 0.5 ? -mag : mag;
        return p;
    }
    const double span = info.hi - info.lo;
    for (double& v : p.values) v = rng.uniform(info.lo + 0.1 * span, info.hi - 0.1 * span);
    return p;
}

inline retouch::ImageTensor safe_image_for(retouch::OpKind kind, const retouch::OpParams& p,
                                           retouch::Rng& rng, int h, int w) {
    using retouch::OpKind;
    retouch::ImageTensor img =
        random_image(rng, h, w, retouch::ColorState::LinearSRGB, 0.05, 0.95);
    auto resample_pixel = [&](size_t px, auto&& ok) {
        double* x = &img.data[px * 3];
        for (int tries = 0; tries < 10000; ++tries) {
            if (ok(x)) return true;
            for (int c = 0; c < 3; ++c) x[c] = rng.uniform(0.05, 0.95);
        }
        return false;
    };
    auto gaps_ok = [](const double* x) {
        return std::abs(x[0] - x[1]) >= 2e-2 && std::abs(x[1] - x[2]) >= 2e-2 &&
               std::abs(x[0] - x[2]) >= 2e-2;
    };
    switch (kind) {
        case OpKind::Exposure: {
            const double scale = std::exp2(p.values[0]);
            for (double& v : img.data) {
                if (std::abs(v * scale - 1.0) < 2e-3) v -= 4e-3 / scale;
            }
            break;
        }
        case OpKind::WhiteBalance: {
            for (size_t i = 0; i < img.size(); ++i) {
                const double g = p.values[i % 3];
                if (std::abs(img.data[i] * g - 1.0) < 2e-3) img.data[i] -= 4e-3 / g;
            }
            break;
        }
        case OpKind::ColorCurve: {
            for (double& v : img.data) {
                const double lx = retouch::kCurveSegments * v;
                const double frac = lx - std::floor(lx);
                if (frac < 0.05 || frac > 0.95) {
                    v = (std::floor(lx) + rng.uniform(0.1, 0.9)) / retouch::kCurveSegments;
                }
            }
            break;
        }
        case OpKind::Contrast: {
            const double a = p.values[0];
            for (size_t px = 0; px < img.pixel_count(); ++px) {
                resample_pixel(px, [&](const double* x) {
                    const double lum = 0.27 * x[0] + 0.67 * x[1] + 0.06 * x[2];
                    const double s = 0.5 * (1.0 - std::cos(M_PI * lum)) / std::max(lum, 1e-6);
                    for (int c = 0; c < 3; ++c) {
                        if (std::abs(x[c] * (1.0 + a * (s - 1.0)) - 1.0) < 2e-3) return false;
                    }
                    return true;
                });
            }
            break;
        }
        case OpKind::Hue: {
            const double shift6 = p.values[0] * 3.0 / M_PI;
            for (size_t px = 0; px < img.pixel_count(); ++px) {
                resample_pixel(px, [&](const double* x) {
                    if (!gaps_ok(x)) return false;
                    retouch::Hsv hsv = retouch::rgb_to_hsv(x[0], x[1], x[2]);
                    if (hsv.s < 0.05) return false;
                    double h6 = hsv.h * 3.0 / M_PI + shift6;
                    h6 = std::fmod(h6, 6.0);
                    if (h6 < 0) h6 += 6.0;
                    const double f = h6 - std::floor(h6);
                    return f >= 2e-2 && f <= 1.0 - 2e-2;
                });
            }
            break;
        }
        case OpKind::Saturation: {
            const double r = p.values[0];
            for (size_t px = 0; px < img.pixel_count(); ++px) {
                resample_pixel(px, [&](const double* x) {
                    if (!gaps_ok(x)) return false;
                    retouch::Hsv hsv = retouch::rgb_to_hsv(x[0], x[1], x[2]);
                    return hsv.s >= 0.05 && std::abs(r * hsv.s - 1.0) >= 5e-3;
                });
            }
            break;
        }
        case OpKind::GaussianBlur: break;
    }
    return img;
}

struct OpFdWorst {
    double param = 0.0;
    double input = 0.0;
};

inline OpFdWorst fd_check_op(const retouch::ImageTensor& img, const retouch::OpParams& p,
                             retouch::Rng& rng, int input_coords) {
    retouch::OpTape tape;
    retouch::apply_op(img, p, &tape);
    retouch::ImageTensor upstream = random_upstream(rng, img.height, img.width);
    retouch::ImageTensor d_input;
    std::vector<double> d_params;
    retouch::op_backward(tape, upstream, d_input, d_params);

    OpFdWorst worst;
    for (size_t i = 0; i < p.values.size(); ++i) {
        auto f = [&](double v) {
            retouch::OpParams q = p;
            q.values[i] = v;
            return dot_upstream(upstream, retouch::apply_op(img, q));
        };
        const double fd = central_diff(f, p.values[i], 1e-5);
        worst.param = std::max(worst.param, rel_err(d_params[i], fd));
    }
    for (int s = 0; s < input_coords; ++s) {
        const size_t c = rng.index(img.size());
        auto f = [&](double v) {
            retouch::ImageTensor q = img;
            q.data[c] = v;
            return dot_upstream(upstream, retouch::apply_op(q, p));
        };
        const double fd = central_diff(f, img.data[c], 1e-5);
        worst.input = std::max(worst.input, rel_err(d_input.data[c], fd));
    }
    return worst;
}

}  // namespace testutil
