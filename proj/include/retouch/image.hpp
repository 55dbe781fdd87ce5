#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace retouch {

// Color state of an ImageTensor. Retouching operates on LinearSRGB;
// files and the victim classifier see NonlinearSRGB.
enum class ColorState { NonlinearSRGB, LinearSRGB };

// H x W x 3 row-major interleaved image, values in [0,1], 64-bit.
struct ImageTensor {
    int height = 0;
    int width = 0;
    ColorState state = ColorState::NonlinearSRGB;
    std::vector<double> data;  // size = height * width * 3

    ImageTensor() = default;
    ImageTensor(int h, int w, ColorState s, double fill = 0.0)
        : height(h), width(w), state(s), data(static_cast<size_t>(h) * w * 3, fill) {}

    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
    size_t size() const { return data.size(); }

    double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    bool same_shape(const ImageTensor& o) const { return height == o.height && width == o.width; }
};

// sRGB gamma (standard IEC 61966-2-1 constants; see README for the
// threshold choice). Input state is checked.
ImageTensor srgb_to_linear(const ImageTensor& img);
ImageTensor linear_to_srgb(const ImageTensor& img);

// Scalar transfer curves and their derivatives, exposed for gradient code.
double srgb_decode(double v);
double srgb_encode(double v);
double srgb_encode_derivative(double linear_v);

// Hexcone HSV. h in [0, 2pi), s and v in [0,1]. Gray pixels get h = 0.
struct Hsv {
    double h, s, v;
};
Hsv rgb_to_hsv(double r, double g, double b);
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

// Jacobians for the HSV conversions, used by the hue/saturation operators.
// Rows index (h,s,v) or (r,g,b) outputs, columns index inputs. Boundary
// convention: ties resolve r-then-g-then-b; sector edges take the left
// sector's derivative; gray pixels have zero hue derivative.
struct Mat3 {
    std::array<double, 9> m{};  // row-major
    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }
};
Hsv rgb_to_hsv_jac(double r, double g, double b, Mat3& d_hsv_d_rgb);
void hsv_to_rgb_jac(double h, double s, double v, double& r, double& g, double& b,
                    Mat3& d_rgb_d_hsv);

// D65 CIE Lab from linear sRGB values. White point taken as the row sums
// of the RGB->XYZ matrix so (1,1,1) maps to exactly (100,0,0).
struct Lab {
    double L, a, b;
};
Lab rgb_to_lab(double r, double g, double b);
Lab rgb_to_lab_jac(double r, double g, double b, Mat3& d_lab_d_rgb);

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace retouch
