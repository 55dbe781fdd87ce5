#include "retouch/image.hpp"

#include <cmath>
#include <stdexcept>

namespace retouch {

namespace {

constexpr double kDecodeThreshold = 0.04045;
constexpr double kEncodeThreshold = 0.0031308;

void require_state(const ImageTensor& img, ColorState want, const char* op) {
    if (img.state != want) {
        throw std::invalid_argument(std::string(op) + ": image is in the wrong color state");
    }
}

}  // namespace

double srgb_decode(double v) {
    return v <= kDecodeThreshold ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double srgb_encode(double v) {
    return v <= kEncodeThreshold ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double srgb_encode_derivative(double linear_v) {
    if (linear_v <= kEncodeThreshold) return 12.92;
    return 1.055 * (1.0 / 2.4) * std::pow(linear_v, 1.0 / 2.4 - 1.0);
}

ImageTensor srgb_to_linear(const ImageTensor& img) {
    require_state(img, ColorState::NonlinearSRGB, "srgb_to_linear");
    ImageTensor out = img;
    out.state = ColorState::LinearSRGB;
    for (double& v : out.data) v = clamp01(srgb_decode(v));
    return out;
}

ImageTensor linear_to_srgb(const ImageTensor& img) {
    require_state(img, ColorState::LinearSRGB, "linear_to_srgb");
    ImageTensor out = img;
    out.state = ColorState::NonlinearSRGB;
    for (double& v : out.data) v = clamp01(srgb_encode(v));
    return out;
}

Hsv rgb_to_hsv(double r, double g, double b) {
    Mat3 unused;
    return rgb_to_hsv_jac(r, g, b, unused);
}

Hsv rgb_to_hsv_jac(double r, double g, double b, Mat3& jac) {
    r = clamp01(r);
    g = clamp01(g);
    b = clamp01(b);
    constexpr double kSixth = M_PI / 3.0;
    jac = Mat3{};

    // argmax/argmin with r-then-g-then-b tie break
    int imax = 0;
    double v = r;
    if (g > v) { v = g; imax = 1; }
    if (b > v) { v = b; imax = 2; }
    int imin = 0;
    double mn = r;
    if (g < mn) { mn = g; imin = 1; }
    if (b < mn) { mn = b; imin = 2; }

    double c = v - mn;
    Hsv out{0.0, 0.0, v};
    jac(2, imax) = 1.0;  // dv

    if (v > 0.0 && c > 0.0) {
        out.s = c / v;
        // ds/dx = (dc*v - c*dv)/v^2 with dc = dmax - dmin
        double inv_v2 = 1.0 / (v * v);
        double dc[3] = {0, 0, 0};
        dc[imax] += 1.0;
        dc[imin] -= 1.0;
        for (int i = 0; i < 3; ++i) {
            double dv = (i == imax) ? 1.0 : 0.0;
            jac(1, i) = (dc[i] * v - c * dv) * inv_v2;
        }

        // hue sector by channel of the max
        double h6, dh6[3] = {0, 0, 0};
        double inv_c = 1.0 / c;
        double inv_c2 = inv_c * inv_c;
        auto ratio_grad = [&](double num, int ip, int im) {
            // d((x_ip - x_im)/c)/dx
            for (int i = 0; i < 3; ++i) {
                double dnum = (i == ip ? 1.0 : 0.0) - (i == im ? 1.0 : 0.0);
                dh6[i] = (dnum * c - num * dc[i]) * inv_c2;
            }
        };
        if (imax == 0) {
            double num = g - b;
            h6 = std::fmod(num * inv_c, 6.0);
            if (h6 < 0) h6 += 6.0;
            ratio_grad(num, 1, 2);
        } else if (imax == 1) {
            double num = b - r;
            h6 = num * inv_c + 2.0;
            ratio_grad(num, 2, 0);
        } else {
            double num = r - g;
            h6 = num * inv_c + 4.0;
            ratio_grad(num, 0, 1);
        }
        out.h = h6 * kSixth;
        if (out.h >= 2.0 * M_PI) out.h -= 2.0 * M_PI;
        for (int i = 0; i < 3; ++i) jac(0, i) = dh6[i] * kSixth;
    }
    // gray or black: s = 0, h defined as 0, zero hue/saturation gradient
    // (imax == imin at an exact tie, so the subgradients cancel anyway)
    return out;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    Mat3 unused;
    hsv_to_rgb_jac(h, s, v, r, g, b, unused);
}

void hsv_to_rgb_jac(double h, double s, double v, double& r, double& g, double& b, Mat3& jac) {
    s = clamp01(s);
    v = clamp01(v);
    h = std::fmod(h, 2.0 * M_PI);
    if (h < 0) h += 2.0 * M_PI;

    double h6 = h * (3.0 / M_PI);  // [0, 6)
    int sector = static_cast<int>(std::floor(h6));
    if (sector > 5) sector = 5;
    double f = h6 - sector;
    // left-sector derivative at exact sector edges
    if (f == 0.0 && sector > 0) {
        sector -= 1;
        f = 1.0;
    }

    double p = v * (1.0 - s);
    double q = v * (1.0 - f * s);
    double t = v * (1.0 - (1.0 - f) * s);

    // value and partials of each of p,q,t and v w.r.t. (f, s, v)
    struct Term {
        double val, df, ds, dv;
    };
    Term V{v, 0.0, 0.0, 1.0};
    Term P{p, 0.0, -v, 1.0 - s};
    Term Q{q, -v * s, -v * f, 1.0 - f * s};
    Term T{t, v * s, -v * (1.0 - f), 1.0 - (1.0 - f) * s};

    Term rt{}, gt{}, bt{};
    switch (sector) {
        case 0: rt = V; gt = T; bt = P; break;
        case 1: rt = Q; gt = V; bt = P; break;
        case 2: rt = P; gt = V; bt = T; break;
        case 3: rt = P; gt = Q; bt = V; break;
        case 4: rt = T; gt = P; bt = V; break;
        default: rt = V; gt = P; bt = Q; break;
    }
    r = rt.val;
    g = gt.val;
    b = bt.val;

    double df_dh = 3.0 / M_PI;
    const Term* terms[3] = {&rt, &gt, &bt};
    for (int i = 0; i < 3; ++i) {
        jac(i, 0) = terms[i]->df * df_dh;
        jac(i, 1) = terms[i]->ds;
        jac(i, 2) = terms[i]->dv;
    }
}

namespace {

// Linear sRGB -> XYZ (IEC 61966-2-1 / ITU-R BT.709 primaries, D65)
constexpr double kRgbToXyz[9] = {
    0.4124564, 0.3575761, 0.1805375,
    0.2126729, 0.7151522, 0.0721750,
    0.0193339, 0.1191920, 0.9503041,
};
// White point = row sums, so (1,1,1) -> (100,0,0) exactly
constexpr double kWhite[3] = {
    kRgbToXyz[0] + kRgbToXyz[1] + kRgbToXyz[2],
    kRgbToXyz[3] + kRgbToXyz[4] + kRgbToXyz[5],
    kRgbToXyz[6] + kRgbToXyz[7] + kRgbToXyz[8],
};
constexpr double kLabDelta = 6.0 / 29.0;
constexpr double kLabDelta3 = kLabDelta * kLabDelta * kLabDelta;

double lab_f(double t) {
    return t > kLabDelta3 ? std::cbrt(t) : t / (3.0 * kLabDelta * kLabDelta) + 4.0 / 29.0;
}

double lab_f_derivative(double t) {
    if (t > kLabDelta3) {
        double c = std::cbrt(t);
        return 1.0 / (3.0 * c * c);
    }
    return 1.0 / (3.0 * kLabDelta * kLabDelta);
}

}  // namespace

Lab rgb_to_lab(double r, double g, double b) {
    Mat3 unused;
    return rgb_to_lab_jac(r, g, b, unused);
}

Lab rgb_to_lab_jac(double r, double g, double b, Mat3& jac) {
    double xyz[3], fxyz[3], dfxyz[3];
    for (int i = 0; i < 3; ++i) {
        xyz[i] = (kRgbToXyz[i * 3] * r + kRgbToXyz[i * 3 + 1] * g + kRgbToXyz[i * 3 + 2] * b) /
                 kWhite[i];
        fxyz[i] = lab_f(xyz[i]);
        dfxyz[i] = lab_f_derivative(xyz[i]);
    }
    Lab out;
    out.L = 116.0 * fxyz[1] - 16.0;
    out.a = 500.0 * (fxyz[0] - fxyz[1]);
    out.b = 200.0 * (fxyz[1] - fxyz[2]);

    // chain: d lab / d rgb = d lab / d fxyz * diag(dfxyz) * d xyz_norm / d rgb
    for (int c = 0; c < 3; ++c) {
        double dx = kRgbToXyz[c] / kWhite[0] * dfxyz[0];
        double dy = kRgbToXyz[3 + c] / kWhite[1] * dfxyz[1];
        double dz = kRgbToXyz[6 + c] / kWhite[2] * dfxyz[2];
        jac(0, c) = 116.0 * dy;
        jac(1, c) = 500.0 * (dx - dy);
        jac(2, c) = 200.0 * (dy - dz);
    }
    return out;
}

}  // namespace retouch
