#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "retouch/drm.hpp"
#include "retouch/image.hpp"
#include "retouch/net.hpp"
#include "retouch/palette.hpp"
#include "retouch/style.hpp"

namespace retouch {

struct AttackConfig {
    int regions = 5;             // K: palette masks
    int actions = 30;            // M: operator slots per region
    int num_ops = kNumOpKinds;   // N
    int persistent_iters = 30;   // I: extra iterations after first success
    double lambda_drm = 50.0;
    double lr_logits = 1.0;      // base learning rate for the probability table
    double lr_params = 0.0005;   // base learning rate for the operator parameters
    int max_iters = 1000;        // linear-ramp horizon and failure cutoff
    double tau = 1.0;            // Gumbel-Softmax temperature
    uint64_t seed = 0;
    StyleLossKind style_kind = StyleLossKind::Statistic;
    bool enable_style = true;    // ablations only; losses are always recorded
    bool enable_drm = true;

    void validate() const;
};

struct IterationRecord {
    int iter = 0;
    double task_loss = 0.0;   // J
    double style_loss = 0.0;  // L_style
    double drm_loss = 0.0;    // L_DRM
    bool success = false;
};

struct AttackResult {
    ImageTensor adversarial;  // NonlinearSRGB, always a valid [0,1] image
    bool success = false;
    int total_iters = 0;
    int first_success_iter = -1;  // -1 when the attack never succeeded
    int chosen_iter = 0;
    std::vector<IterationRecord> history;
    RetouchPlan chosen_plan;
    uint64_t seed = 0;
    int pred_before = -1;
    int pred_after = -1;
};

// Tape for one full retouch pass: K regions of M operator applications, each
// region composited through its soft mask, then de-linearized.
struct PipelineTape {
    struct Region {
        ImageTensor input;  // x_k
        std::vector<OpTape> ops;
        CompositeTape comp;
    };
    std::vector<Region> regions;
    ImageTensor linear_out;  // x_K before gamma re-encoding
};

// Chained masked retouching (LinearSRGB in), de-linearized for the victim.
ImageTensor retouch_forward(const ImageTensor& clean_linear, const SoftMaskSet& masks,
                            const RetouchPlan& plan, PipelineTape* tape = nullptr);

// VJP of retouch_forward into the decision tables. d_out_nonlinear is the
// gradient w.r.t. the de-linearized output; d_linear_extra (optional) adds a
// gradient w.r.t. the linear composite (the style loss hook). Logit gradients
// flow through the straight-through estimator of each sampled decision.
void retouch_backward(const PipelineTape& tape, const RetouchPlan& plan,
                      const DecisionTables& tables, const SoftMaskSet& masks,
                      const ImageTensor& d_out_nonlinear, const ImageTensor* d_linear_extra,
                      TableGrads& grads);

// lambda_i = |J| / (|L_i| + 1e-8); constants per iteration (no gradient).
std::pair<double, double> dynamic_weights(double task_loss, double style_loss, double drm_loss);

// lr = base * (1 + 9 * min(iter, max_iters) / max_iters)
std::pair<double, double> lr_schedule(int iter, double base_logits, double base_params,
                                      int max_iters);

int victim_predict(const Network<double>& victim, const ImageTensor& nonlinear_img);
bool check_success(const Network<double>& victim, const ImageTensor& nonlinear_img, int label);

// One evaluation of the maximization objective J - l1*L_style - lDRM*l2*L_DRM
// and its gradients w.r.t. the tables.
struct ObjectiveEval {
    double value = 0.0;
    double task_loss = 0.0;
    double style_loss = 0.0;
    double drm_loss = 0.0;
    double lambda1 = 0.0, lambda2 = 0.0;
    int prediction = -1;
    TableGrads grads;
};
ObjectiveEval evaluate_objective(const ImageTensor& clean_linear, const SoftMaskSet& masks,
                                 const RetouchPlan& plan, const DecisionTables& tables,
                                 const Network<double>& victim, int label,
                                 const StyleGuide& style, const AttackConfig& config,
                                 bool want_grads = true);

// The full optimization loop: fresh plan each iteration, Adam ascent on
// theta = [P, Z] with the linear learning-rate ramp and range projection,
// then the persistent phase after the first misclassification. Returns the
// successful iterate with the smallest style loss, or the maximal-J iterate
// (success = false) if max_iters passes without a misclassification.
AttackResult run_attack(const ImageTensor& clean_nonlinear, int label,
                        const Network<double>& victim, const StyleGuide& style,
                        const AttackConfig& config);

}  // namespace retouch
