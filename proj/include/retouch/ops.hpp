#pragma once

#include <array>
#include <string>
#include <vector>

#include "retouch/image.hpp"

namespace retouch {

// The differentiable retouching operator set. Order is the operator index
// n used by decision tables and plans.
enum class OpKind : int {
    Exposure = 0,
    WhiteBalance,
    ColorCurve,
    Contrast,
    Hue,
    Saturation,
    GaussianBlur,
};
constexpr int kNumOpKinds = 7;

// Piecewise-linear color curve resolution (values per channel).
constexpr int kCurveSegments = 64;

struct OpKindInfo {
    const char* name;
    int param_dim;
    double lo, hi, neutral;  // per-component bounds and identity value
};

const OpKindInfo& op_kind_info(OpKind kind);
OpKind op_kind_from_name(const std::string& name);

struct OpParams {
    OpKind kind = OpKind::Exposure;
    std::vector<double> values;

    static OpParams neutral(OpKind kind);
};

// Clamp every component into its kind's [lo,hi] range.
void project_params(OpParams& p);

// Everything the backward pass needs for one forward application. A tape
// is valid for exactly the shapes of the forward call that produced it.
struct OpTape {
    OpParams params;
    ImageTensor input;
    ImageTensor blur_mid;   // after the horizontal blur pass
    bool identity = false;  // blur epsilon rule short-circuit
};

// Forward evaluation. Inputs are LinearSRGB-state tensors in [0,1]; outputs
// stay in [0,1]. Passing a neutral parameter returns the input unchanged
// (bit-exact; blur via its sigma < 0.05 rule). Tape may be null when no
// backward pass is needed.
ImageTensor apply_exposure(const ImageTensor& img, double stops, OpTape* tape = nullptr);
ImageTensor apply_white_balance(const ImageTensor& img, const std::array<double, 3>& gains,
                                OpTape* tape = nullptr);
ImageTensor apply_color_curve(const ImageTensor& img, const std::vector<double>& h_rgb,
                              OpTape* tape = nullptr);
ImageTensor apply_contrast(const ImageTensor& img, double amount, OpTape* tape = nullptr);
ImageTensor apply_hue(const ImageTensor& img, double shift_radians, OpTape* tape = nullptr);
ImageTensor apply_saturation(const ImageTensor& img, double factor, OpTape* tape = nullptr);
ImageTensor apply_gaussian_blur(const ImageTensor& img, double sigma, OpTape* tape = nullptr);

ImageTensor apply_op(const ImageTensor& img, const OpParams& params, OpTape* tape = nullptr);

// Exact VJP of the forward application the tape came from. d_input gets the
// gradient w.r.t. the input image, d_params (resized to the kind's dimension)
// the gradient w.r.t. the parameter vector. Subgradient conventions: zero
// outside clamp ranges, left-sector derivatives at HSV boundaries.
void op_backward(const OpTape& tape, const ImageTensor& upstream, ImageTensor& d_input,
                 std::vector<double>& d_params);

// Discrete 1D Gaussian kernel, radius ceil(3*sigma), normalized to sum 1.
std::vector<double> gaussian_kernel(double sigma);

// Scalar piecewise-linear curve map for an arbitrary segment count:
// (1/T) * sum_j clip(segments*x - j, 0, 1) * h[j] with T = sum_j h[j].
double color_curve_value(double x, const double* h, int segments);

}  // namespace retouch
