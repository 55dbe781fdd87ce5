#include "retouch/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace retouch {

namespace {

constexpr double kPi = M_PI;
constexpr double kBlurIdentityEps = 0.05;
constexpr double kLumEps = 1e-6;
// Rec.601-style luminance weights used by the contrast curve
constexpr double kLumR = 0.27, kLumG = 0.67, kLumB = 0.06;

const OpKindInfo kOpInfo[kNumOpKinds] = {
    {"exposure", 1, -3.5, 3.5, 0.0},
    {"white_balance", 3, 0.6, 1.67, 1.0},
    {"color_curve", 3 * kCurveSegments, 0.1, 3.0, 1.0},
    {"contrast", 1, -1.0, 1.0, 0.0},
    {"hue", 1, -kPi / 3.0, kPi / 3.0, 0.0},
    {"saturation", 1, 0.0, 2.0, 1.0},
    {"gaussian_blur", 1, 0.0, 2.0, 0.0},
};

void check_tape_shape(const OpTape& tape, const ImageTensor& upstream) {
    if (!tape.input.same_shape(upstream)) {
        throw std::invalid_argument("op_backward: upstream shape does not match tape");
    }
}

ImageTensor make_out(const ImageTensor& in) {
    ImageTensor out(in.height, in.width, in.state);
    return out;
}

void init_tape(OpTape* tape, const ImageTensor& img, OpKind kind, const double* vals, int dim) {
    if (!tape) return;
    tape->params.kind = kind;
    tape->params.values.assign(vals, vals + dim);
    tape->input = img;
    tape->identity = false;
}

}  // namespace

const OpKindInfo& op_kind_info(OpKind kind) { return kOpInfo[static_cast<int>(kind)]; }

OpKind op_kind_from_name(const std::string& name) {
    for (int n = 0; n < kNumOpKinds; ++n) {
        if (name == kOpInfo[n].name) return static_cast<OpKind>(n);
    }
    throw std::invalid_argument("unknown retouching operator: " + name);
}

OpParams OpParams::neutral(OpKind kind) {
    const auto& info = op_kind_info(kind);
    OpParams p;
    p.kind = kind;
    p.values.assign(info.param_dim, info.neutral);
    return p;
}

void project_params(OpParams& p) {
    const auto& info = op_kind_info(p.kind);
    for (double& v : p.values) v = std::clamp(v, info.lo, info.hi);
}

// ---------------------------------------------------------------------------
// exposure / white balance

ImageTensor apply_exposure(const ImageTensor& img, double stops, OpTape* tape) {
    init_tape(tape, img, OpKind::Exposure, &stops, 1);
    ImageTensor out = make_out(img);
    const double scale = std::exp2(stops);
    for (size_t i = 0; i < img.size(); ++i) out.data[i] = clamp01(img.data[i] * scale);
    return out;
}

ImageTensor apply_white_balance(const ImageTensor& img, const std::array<double, 3>& gains,
                                OpTape* tape) {
    init_tape(tape, img, OpKind::WhiteBalance, gains.data(), 3);
    ImageTensor out = make_out(img);
    for (size_t i = 0; i < img.size(); ++i) out.data[i] = clamp01(img.data[i] * gains[i % 3]);
    return out;
}

// ---------------------------------------------------------------------------
// color curve
//
// out_c = (1/T_c) * sum_j clip(L*x - j, 0, 1) * h_{c,j},  T_c = sum_j h_{c,j}
// With strictly positive h this is a monotone piecewise-linear map fixing
// 0 and 1. The active segment is floor(L*x), clamped to L-1 at x = 1.

namespace {

struct CurveEval {
    double out;
    int active;   // active segment index
    double frac;  // clip value inside the active segment
};

CurveEval eval_curve(double x, const double* h, const double* prefix, double total) {
    const int L = kCurveSegments;
    double lx = L * x;
    int j = static_cast<int>(lx);
    if (j >= L) j = L - 1;
    double frac = lx - j;
    double s = prefix[j] + frac * h[j];
    return {s / total, j, frac};
}

}  // namespace

double color_curve_value(double x, const double* h, int segments) {
    double total = 0.0;
    for (int j = 0; j < segments; ++j) total += h[j];
    const double lx = segments * x;
    int j = static_cast<int>(lx);
    if (j >= segments) j = segments - 1;
    double s = (lx - j) * h[j];
    for (int l = 0; l < j; ++l) s += h[l];
    return s / total;
}

ImageTensor apply_color_curve(const ImageTensor& img, const std::vector<double>& h_rgb,
                              OpTape* tape) {
    const int L = kCurveSegments;
    if (h_rgb.size() != static_cast<size_t>(3 * L)) {
        throw std::invalid_argument("apply_color_curve: expected 3*" + std::to_string(L) +
                                    " parameters");
    }
    init_tape(tape, img, OpKind::ColorCurve, h_rgb.data(), 3 * L);

    bool all_equal = true;
    for (double v : h_rgb) {
        if (v != h_rgb[0]) {
            all_equal = false;
            break;
        }
    }
    if (all_equal) return img;  // identity for any uniform h

    std::vector<double> prefix(3 * (L + 1), 0.0);
    double total[3];
    for (int c = 0; c < 3; ++c) {
        const double* h = h_rgb.data() + c * L;
        double* pre = prefix.data() + c * (L + 1);
        for (int j = 0; j < L; ++j) pre[j + 1] = pre[j] + h[j];
        total[c] = pre[L];
    }
    ImageTensor out = make_out(img);
    for (size_t i = 0; i < img.size(); ++i) {
        int c = static_cast<int>(i % 3);
        out.data[i] =
            eval_curve(img.data[i], h_rgb.data() + c * L, prefix.data() + c * (L + 1), total[c])
                .out;
    }
    return out;
}

// ---------------------------------------------------------------------------
// contrast

ImageTensor apply_contrast(const ImageTensor& img, double amount, OpTape* tape) {
    init_tape(tape, img, OpKind::Contrast, &amount, 1);
    ImageTensor out = make_out(img);
    for (size_t p = 0; p < img.pixel_count(); ++p) {
        const double* x = &img.data[p * 3];
        double lum = kLumR * x[0] + kLumG * x[1] + kLumB * x[2];
        double enl = 0.5 * (1.0 - std::cos(kPi * lum));
        double s = enl / std::max(lum, kLumEps);
        for (int c = 0; c < 3; ++c) {
            out.data[p * 3 + c] = clamp01(x[c] + amount * (x[c] * s - x[c]));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// hue / saturation

ImageTensor apply_hue(const ImageTensor& img, double shift_radians, OpTape* tape) {
    init_tape(tape, img, OpKind::Hue, &shift_radians, 1);
    if (shift_radians == 0.0) return img;
    ImageTensor out = make_out(img);
    for (size_t p = 0; p < img.pixel_count(); ++p) {
        const double* x = &img.data[p * 3];
        Hsv hsv = rgb_to_hsv(x[0], x[1], x[2]);
        double* o = &out.data[p * 3];
        hsv_to_rgb(hsv.h + shift_radians, hsv.s, hsv.v, o[0], o[1], o[2]);
    }
    return out;
}

ImageTensor apply_saturation(const ImageTensor& img, double factor, OpTape* tape) {
    init_tape(tape, img, OpKind::Saturation, &factor, 1);
    if (factor == 1.0) return img;
    ImageTensor out = make_out(img);
    for (size_t p = 0; p < img.pixel_count(); ++p) {
        const double* x = &img.data[p * 3];
        Hsv hsv = rgb_to_hsv(x[0], x[1], x[2]);
        double* o = &out.data[p * 3];
        hsv_to_rgb(hsv.h, clamp01(factor * hsv.s), hsv.v, o[0], o[1], o[2]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// gaussian blur

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double g = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[i + radius] = g;
        sum += g;
    }
    for (double& v : k) v /= sum;
    return k;
}

namespace {

// d/dsigma of the normalized kernel (sums to zero)
std::vector<double> gaussian_kernel_dsigma(double sigma) {
    std::vector<double> k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    double mean_i2 = 0.0;
    for (int i = -radius; i <= radius; ++i) mean_i2 += k[i + radius] * (i * i);
    std::vector<double> dk(k.size());
    for (int i = -radius; i <= radius; ++i) {
        dk[i + radius] = k[i + radius] * ((i * i) - mean_i2) / (sigma * sigma * sigma);
    }
    return dk;
}

enum class Axis { Horizontal, Vertical };

// Separable pass with clamp-to-edge replication. Kernel need not sum to 1.
void blur_pass(const ImageTensor& in, const std::vector<double>& kernel, Axis axis,
               ImageTensor& out) {
    const int radius = static_cast<int>(kernel.size() / 2);
    const int h = in.height, w = in.width;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc[3] = {0, 0, 0};
            for (int t = -radius; t <= radius; ++t) {
                int yy = y, xx = x;
                if (axis == Axis::Horizontal) {
                    xx = std::clamp(x + t, 0, w - 1);
                } else {
                    yy = std::clamp(y + t, 0, h - 1);
                }
                const double wk = kernel[t + radius];
                const double* px = &in.data[(static_cast<size_t>(yy) * w + xx) * 3];
                acc[0] += wk * px[0];
                acc[1] += wk * px[1];
                acc[2] += wk * px[2];
            }
            double* o = &out.data[(static_cast<size_t>(y) * w + x) * 3];
            o[0] = acc[0];
            o[1] = acc[1];
            o[2] = acc[2];
        }
    }
}

// Adjoint of blur_pass: scatter upstream back through the clamped taps.
void blur_pass_adjoint(const ImageTensor& upstream, const std::vector<double>& kernel, Axis axis,
                       ImageTensor& d_in) {
    const int radius = static_cast<int>(kernel.size() / 2);
    const int h = upstream.height, w = upstream.width;
    std::fill(d_in.data.begin(), d_in.data.end(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double* up = &upstream.data[(static_cast<size_t>(y) * w + x) * 3];
            for (int t = -radius; t <= radius; ++t) {
                int yy = y, xx = x;
                if (axis == Axis::Horizontal) {
                    xx = std::clamp(x + t, 0, w - 1);
                } else {
                    yy = std::clamp(y + t, 0, h - 1);
                }
                const double wk = kernel[t + radius];
                double* d = &d_in.data[(static_cast<size_t>(yy) * w + xx) * 3];
                d[0] += wk * up[0];
                d[1] += wk * up[1];
                d[2] += wk * up[2];
            }
        }
    }
}

}  // namespace

ImageTensor apply_gaussian_blur(const ImageTensor& img, double sigma, OpTape* tape) {
    init_tape(tape, img, OpKind::GaussianBlur, &sigma, 1);
    if (sigma < kBlurIdentityEps) {
        if (tape) tape->identity = true;
        return img;
    }
    std::vector<double> kernel = gaussian_kernel(sigma);
    ImageTensor mid = make_out(img);
    blur_pass(img, kernel, Axis::Horizontal, mid);
    ImageTensor out = make_out(img);
    blur_pass(mid, kernel, Axis::Vertical, out);
    if (tape) tape->blur_mid = std::move(mid);
    return out;
}

ImageTensor apply_op(const ImageTensor& img, const OpParams& params, OpTape* tape) {
    const auto& info = op_kind_info(params.kind);
    if (params.values.size() != static_cast<size_t>(info.param_dim)) {
        throw std::invalid_argument(std::string("apply_op: bad parameter count for ") + info.name);
    }
    switch (params.kind) {
        case OpKind::Exposure: return apply_exposure(img, params.values[0], tape);
        case OpKind::WhiteBalance:
            return apply_white_balance(img, {params.values[0], params.values[1], params.values[2]},
                                       tape);
        case OpKind::ColorCurve: return apply_color_curve(img, params.values, tape);
        case OpKind::Contrast: return apply_contrast(img, params.values[0], tape);
        case OpKind::Hue: return apply_hue(img, params.values[0], tape);
        case OpKind::Saturation: return apply_saturation(img, params.values[0], tape);
        case OpKind::GaussianBlur: return apply_gaussian_blur(img, params.values[0], tape);
    }
    throw std::logic_error("apply_op: unreachable");
}

// ---------------------------------------------------------------------------
// backward

namespace {

void backward_exposure(const OpTape& tape, const ImageTensor& up, ImageTensor& d_in,
                       std::vector<double>& d_params) {
    const double e = tape.params.values[0];
    const double scale = std::exp2(e);
    double d_e = 0.0;
    for (size_t i = 0; i < up.size(); ++i) {
        double pre = tape.input.data[i] * scale;
        double m = (pre <= 1.0) ? 1.0 : 0.0;  // pre >= 0 always
        d_in.data[i] = up.data[i] * scale * m;
        d_e += up.data[i] * pre * m;
    }
    d_params[0] = d_e * std::log(2.0);
}

void backward_white_balance(const OpTape& tape, const ImageTensor& up, ImageTensor& d_in,
                            std::vector<double>& d_params) {
    const double* g = tape.params.values.data();
    for (size_t i = 0; i < up.size(); ++i) {
        int c = static_cast<int>(i % 3);
        double pre = tape.input.data[i] * g[c];
        double m = (pre <= 1.0) ? 1.0 : 0.0;
        d_in.data[i] = up.data[i] * g[c] * m;
        d_params[c] += up.data[i] * tape.input.data[i] * m;
    }
}

void backward_color_curve(const OpTape& tape, const ImageTensor& up, ImageTensor& d_in,
                          std::vector<double>& d_params) {
    const int L = kCurveSegments;
    const double* h_rgb = tape.params.values.data();
    std::vector<double> prefix(3 * (L + 1), 0.0);
    double total[3];
    for (int c = 0; c < 3; ++c) {
        const double* h = h_rgb + c * L;
        double* pre = prefix.data() + c * (L + 1);
        for (int j = 0; j < L; ++j) pre[j + 1] = pre[j] + h[j];
        total[c] = pre[L];
    }
    // d out/d h_j = (clip_j - out)/T; accumulated per channel with a
    // difference array for the "clip_j = 1 for j < active" block.
    std::vector<double> full(3 * (L + 1), 0.0);   // difference array
    std::vector<double> fracsum(3 * L, 0.0);      // up * frac at the active segment
    double up_out_sum[3] = {0, 0, 0};             // sum of up * out
    for (size_t i = 0; i < up.size(); ++i) {
        int c = static_cast<int>(i % 3);
        const double* h = h_rgb + c * L;
        CurveEval ev = eval_curve(tape.input.data[i], h, prefix.data() + c * (L + 1), total[c]);
        double u = up.data[i];
        d_in.data[i] = u * L * h[ev.active] / total[c];
        full[c * (L + 1)] += u;
        full[c * (L + 1) + ev.active] -= u;
        fracsum[c * L + ev.active] += u * ev.frac;
        up_out_sum[c] += u * ev.out;
    }
    for (int c = 0; c < 3; ++c) {
        double run = 0.0;
        for (int j = 0; j < L; ++j) {
            run += full[c * (L + 1) + j];
            double up_clip = run + fracsum[c * L + j];
            d_params[c * L + j] = (up_clip - up_out_sum[c]) / total[c];
        }
    }
}

void backward_contrast(const OpTape& tape, const ImageTensor& up, ImageTensor& d_in,
                       std::vector<double>& d_params) {
    const double a = tape.params.values[0];
    const double w[3] = {kLumR, kLumG, kLumB};
    double d_a = 0.0;
    for (size_t p = 0; p < up.pixel_count(); ++p) {
        const double* x = &tape.input.data[p * 3];
        const double* u = &up.data[p * 3];
        double lum = w[0] * x[0] + w[1] * x[1] + w[2] * x[2];
        double enl = 0.5 * (1.0 - std::cos(kPi * lum));
        double denl = 0.5 * kPi * std::sin(kPi * lum);
        double s, ds_dlum;
        if (lum > kLumEps) {
            s = enl / lum;
            ds_dlum = (denl * lum - enl) / (lum * lum);
        } else {
            s = enl / kLumEps;
            ds_dlum = denl / kLumEps;
        }
        for (int c = 0; c < 3; ++c) {
            double pre = x[c] + a * (x[c] * s - x[c]);
            double m = (pre >= 0.0 && pre <= 1.0) ? 1.0 : 0.0;
            double um = u[c] * m;
            d_a += um * x[c] * (s - 1.0);
            // direct term + coupling through the shared luminance
            d_in.data[p * 3 + c] += um * (1.0 + a * (s - 1.0));
            double coup = um * a * x[c] * ds_dlum;
            d_in.data[p * 3 + 0] += coup * w[0];
            d_in.data[p * 3 + 1] += coup * w[1];
            d_in.data[p * 3 + 2] += coup * w[2];
        }
    }
    d_params[0] = d_a;
}

void backward_hue(const OpTape& tape, const ImageTensor& up, ImageTensor& d_in,
                  std::vector<double>& d_params) {
    const double u_shift = tape.params.values[0];
    double d_u = 0.0;
    Mat3 j_fwd, j_bwd;
    for (size_t p = 0; p < up.pixel_count(); ++p) {
        const double* x = &tape.input.data[p * 3];
        const double* u = &up.data[p * 3];
        Hsv hsv = rgb_to_hsv_jac(x[0], x[1], x[2], j_fwd);
        double r, g, b;
        hsv_to_rgb_jac(hsv.h + u_shift, hsv.s, hsv.v, r, g, b, j_bwd);
        // vjp through hsv_to_rgb
        double vh = u[0] * j_bwd(0, 0) + u[1] * j_bwd(1, 0) + u[2] * j_bwd(2, 0);
        double vs = u[0] * j_bwd(0, 1) + u[1] * j_bwd(1, 1) + u[2] * j_bwd(2, 1);
        double vv = u[0] * j_bwd(0, 2) + u[1] * j_bwd(1, 2) + u[2] * j_bwd(2, 2);
        d_u += vh;
        for (int c = 0; c < 3; ++c) {
            d_in.data[p * 3 + c] = vh * j_fwd(0, c) + vs * j_fwd(1, c) + vv * j_fwd(2, c);
        }
    }
    d_params[0] = d_u;
}

void backward_saturation(const OpTape& tape, const ImageTensor& up, ImageTensor& d_in,
                         std::vector<double>& d_params) {
    const double r_sat = tape.params.values[0];
    double d_r = 0.0;
    Mat3 j_fwd, j_bwd;
    for (size_t p = 0; p < up.pixel_count(); ++p) {
        const double* x = &tape.input.data[p * 3];
        const double* u = &up.data[p * 3];
        Hsv hsv = rgb_to_hsv_jac(x[0], x[1], x[2], j_fwd);
        double s_pre = r_sat * hsv.s;
        double m = (s_pre >= 0.0 && s_pre <= 1.0) ? 1.0 : 0.0;
        double r, g, b;
        hsv_to_rgb_jac(hsv.h, clamp01(s_pre), hsv.v, r, g, b, j_bwd);
        double vh = u[0] * j_bwd(0, 0) + u[1] * j_bwd(1, 0) + u[2] * j_bwd(2, 0);
        double vs = u[0] * j_bwd(0, 1) + u[1] * j_bwd(1, 1) + u[2] * j_bwd(2, 1);
        double vv = u[0] * j_bwd(0, 2) + u[1] * j_bwd(1, 2) + u[2] * j_bwd(2, 2);
        d_r += vs * m * hsv.s;
        double vs_in = vs * m * r_sat;
        for (int c = 0; c < 3; ++c) {
            d_in.data[p * 3 + c] = vh * j_fwd(0, c) + vs_in * j_fwd(1, c) + vv * j_fwd(2, c);
        }
    }
    d_params[0] = d_r;
}

void backward_blur(const OpTape& tape, const ImageTensor& up, ImageTensor& d_in,
                   std::vector<double>& d_params) {
    if (tape.identity) {
        d_in = up;
        d_params[0] = 0.0;
        return;
    }
    const double sigma = tape.params.values[0];
    std::vector<double> kernel = gaussian_kernel(sigma);
    std::vector<double> dkernel = gaussian_kernel_dsigma(sigma);

    // d_in: adjoint of vertical then horizontal pass
    ImageTensor tmp = make_out(up);
    blur_pass_adjoint(up, kernel, Axis::Vertical, tmp);
    blur_pass_adjoint(tmp, kernel, Axis::Horizontal, d_in);

    // d_sigma: both passes depend on sigma
    ImageTensor term = make_out(up);
    blur_pass(tape.blur_mid, dkernel, Axis::Vertical, term);  // dK_v applied to stored mid
    ImageTensor mid_d = make_out(up);
    blur_pass(tape.input, dkernel, Axis::Horizontal, mid_d);  // dK_h applied to input
    ImageTensor term2 = make_out(up);
    blur_pass(mid_d, kernel, Axis::Vertical, term2);
    double d_sigma = 0.0;
    for (size_t i = 0; i < up.size(); ++i) {
        d_sigma += up.data[i] * (term.data[i] + term2.data[i]);
    }
    d_params[0] = d_sigma;
}

}  // namespace

void op_backward(const OpTape& tape, const ImageTensor& upstream, ImageTensor& d_input,
                 std::vector<double>& d_params) {
    check_tape_shape(tape, upstream);
    d_input = ImageTensor(upstream.height, upstream.width, upstream.state);
    d_params.assign(tape.params.values.size(), 0.0);
    switch (tape.params.kind) {
        case OpKind::Exposure: backward_exposure(tape, upstream, d_input, d_params); break;
        case OpKind::WhiteBalance: backward_white_balance(tape, upstream, d_input, d_params); break;
        case OpKind::ColorCurve: backward_color_curve(tape, upstream, d_input, d_params); break;
        case OpKind::Contrast: backward_contrast(tape, upstream, d_input, d_params); break;
        case OpKind::Hue: backward_hue(tape, upstream, d_input, d_params); break;
        case OpKind::Saturation: backward_saturation(tape, upstream, d_input, d_params); break;
        case OpKind::GaussianBlur: backward_blur(tape, upstream, d_input, d_params); break;
    }
}

}  // namespace retouch
