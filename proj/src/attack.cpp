#include "retouch/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "retouch/optim.hpp"

namespace retouch {

void AttackConfig::validate() const {
    if (regions < 1 || actions < 1 || num_ops != kNumOpKinds || persistent_iters < 1 ||
        max_iters < 1) {
        throw std::invalid_argument("AttackConfig: counts must be >= 1 (and N fixed at 7)");
    }
    if (lr_logits <= 0.0 || lr_params <= 0.0 || tau <= 0.0 || lambda_drm < 0.0) {
        throw std::invalid_argument("AttackConfig: rates must be positive");
    }
}

ImageTensor retouch_forward(const ImageTensor& clean_linear, const SoftMaskSet& masks,
                            const RetouchPlan& plan, PipelineTape* tape) {
    if (clean_linear.state != ColorState::LinearSRGB) {
        throw std::invalid_argument("retouch_forward: input must be LinearSRGB");
    }
    if (masks.size() != plan.regions) {
        throw std::invalid_argument("retouch_forward: mask count does not match plan");
    }
    if (tape) {
        tape->regions.clear();
        tape->regions.resize(plan.regions);
    }
    ImageTensor current = clean_linear;
    for (int k = 0; k < plan.regions; ++k) {
        PipelineTape::Region* region = tape ? &tape->regions[k] : nullptr;
        if (region) {
            region->input = current;
            region->ops.resize(plan.actions);
        }
        ImageTensor retouched = current;
        for (int m = 0; m < plan.actions; ++m) {
            retouched = apply_op(retouched, plan.selected_params(k, m),
                                 region ? &region->ops[m] : nullptr);
        }
        CompositeTape comp;
        ImageTensor next = composite(current, retouched, masks.masks[k], &comp);
        if (region) region->comp = comp;
        current = std::move(next);
    }
    if (tape) tape->linear_out = current;
    return linear_to_srgb(current);
}

void retouch_backward(const PipelineTape& tape, const RetouchPlan& plan,
                      const DecisionTables& tables, const SoftMaskSet& masks,
                      const ImageTensor& d_out_nonlinear, const ImageTensor* d_linear_extra,
                      TableGrads& grads) {
    if (static_cast<int>(tape.regions.size()) != plan.regions) {
        throw std::invalid_argument("retouch_backward: tape does not match plan");
    }
    // gamma re-encoding chain rule
    ImageTensor upstream = d_out_nonlinear;
    for (size_t i = 0; i < upstream.size(); ++i) {
        upstream.data[i] *= srgb_encode_derivative(tape.linear_out.data[i]);
    }
    if (d_linear_extra) {
        for (size_t i = 0; i < upstream.size(); ++i) upstream.data[i] += d_linear_extra->data[i];
    }

    std::vector<double> d_params;
    ImageTensor d_op_in, d_base, d_retouched;
    std::vector<double> d_soft(tables.num_ops);
    for (int k = plan.regions - 1; k >= 0; --k) {
        const PipelineTape::Region& region = tape.regions[k];
        composite_backward(region.comp, upstream, d_base, d_retouched);
        ImageTensor g = std::move(d_retouched);
        for (int m = plan.actions - 1; m >= 0; --m) {
            op_backward(region.ops[m], g, d_op_in, d_params);
            const Decision& dec = plan.decision(k, m);
            const size_t slot = tables.row_offset(k, m) + dec.choice;
            // dG/dZ[n*] — the hard decision multiplies the slot by 1
            std::vector<double>& zg = grads.params[slot];
            for (size_t i = 0; i < d_params.size(); ++i) zg[i] += d_params[i];
            // straight-through: dG/dD[n*] = <dG/dZhat, Z[n*]>, routed through soft
            const std::vector<double>& zvals = tables.params[slot].values;
            double d_choice = 0.0;
            for (size_t i = 0; i < d_params.size(); ++i) d_choice += d_params[i] * zvals[i];
            std::fill(d_soft.begin(), d_soft.end(), 0.0);
            d_soft[dec.choice] = d_choice;
            std::vector<double> d_logits =
                gumbel_softmax_backward(dec.soft, plan.temperature, d_soft);
            double* lg = grads.logits.data() + tables.row_offset(k, m);
            for (int n = 0; n < tables.num_ops; ++n) lg[n] += d_logits[n];
            g = std::move(d_op_in);
        }
        // region input feeds both the op chain and the composite base
        upstream = std::move(d_base);
        for (size_t i = 0; i < upstream.size(); ++i) upstream.data[i] += g.data[i];
    }
    (void)masks;  // masks are constants w.r.t. theta
}

std::pair<double, double> dynamic_weights(double task_loss, double style_loss, double drm_loss) {
    const double j = std::abs(task_loss);
    return {j / (std::abs(style_loss) + 1e-8), j / (std::abs(drm_loss) + 1e-8)};
}

std::pair<double, double> lr_schedule(int iter, double base_logits, double base_params,
                                      int max_iters) {
    const double frac =
        static_cast<double>(std::min(iter, max_iters)) / static_cast<double>(max_iters);
    const double ramp = 1.0 + 9.0 * frac;
    return {base_logits * ramp, base_params * ramp};
}

int victim_predict(const Network<double>& victim, const ImageTensor& nonlinear_img) {
    NetCache<double> cache = victim.forward(image_to_tensor<double>(nonlinear_img));
    return argmax_index(victim.output(cache).data);
}

bool check_success(const Network<double>& victim, const ImageTensor& nonlinear_img, int label) {
    return victim_predict(victim, nonlinear_img) != label;
}

namespace {

struct ForwardEval {
    ImageTensor nonlinear;
    PipelineTape tape;
    NetCache<double> victim_cache;
    CeResult<double> ce;
    int prediction = -1;
    double style_loss = 0.0;
    ImageTensor d_style_linear;  // gradient of L_style w.r.t. the linear composite
    SampledOpDistribution dist;
    double drm_loss = 0.0;
    std::vector<double> d_drm_probs;
};

ForwardEval forward_losses(const ImageTensor& clean_linear, const SoftMaskSet& masks,
                           const RetouchPlan& plan, const Network<double>& victim, int label,
                           const StyleGuide& style, bool want_grads) {
    ForwardEval ev;
    ev.nonlinear = retouch_forward(clean_linear, masks, plan, &ev.tape);
    ev.victim_cache = victim.forward(image_to_tensor<double>(ev.nonlinear));
    ev.ce = softmax_cross_entropy(victim.output(ev.victim_cache).data, label);
    ev.prediction = argmax_index(ev.ce.probs);
    ev.style_loss = style.evaluate(ev.tape.linear_out, want_grads ? &ev.d_style_linear : nullptr);
    ev.dist = plan_distribution(plan);
    ev.drm_loss = drm_regularization(ev.dist, want_grads ? &ev.d_drm_probs : nullptr);
    return ev;
}

void objective_grads(const ForwardEval& ev, const RetouchPlan& plan, const DecisionTables& tables,
                     const SoftMaskSet& masks, const Network<double>& victim,
                     const AttackConfig& config, double lambda1, double lambda2,
                     TableGrads& grads) {
    // dJ/dx through the victim (CE seed is the gradient w.r.t. logits)
    Tensor<double> seed(static_cast<int>(ev.ce.d_logits.size()), 1, 1);
    seed.data = ev.ce.d_logits;
    NetGrads<double> vg = victim.backward(ev.victim_cache, seed, /*want_weight_grads=*/false);
    ImageTensor d_nonlinear = tensor_to_image_grad(vg.d_input);

    // -lambda1 * dL_style/dx_linear
    ImageTensor d_linear;
    const ImageTensor* d_linear_ptr = nullptr;
    if (config.enable_style) {
        d_linear = ev.d_style_linear;
        for (double& v : d_linear.data) v *= -lambda1;
        d_linear_ptr = &d_linear;
    }
    retouch_backward(ev.tape, plan, tables, masks, d_nonlinear, d_linear_ptr, grads);

    // -lambda_drm * lambda2 * dL_DRM/dlogits
    if (config.enable_drm) {
        std::vector<double> d_probs = ev.d_drm_probs;
        for (double& v : d_probs) v *= -config.lambda_drm * lambda2;
        distribution_backward(plan, d_probs, grads);
    }
}

}  // namespace

ObjectiveEval evaluate_objective(const ImageTensor& clean_linear, const SoftMaskSet& masks,
                                 const RetouchPlan& plan, const DecisionTables& tables,
                                 const Network<double>& victim, int label,
                                 const StyleGuide& style, const AttackConfig& config,
                                 bool want_grads) {
    ForwardEval ev = forward_losses(clean_linear, masks, plan, victim, label, style, want_grads);
    ObjectiveEval out;
    out.task_loss = ev.ce.loss;
    out.style_loss = ev.style_loss;
    out.drm_loss = ev.drm_loss;
    out.prediction = ev.prediction;
    auto [l1, l2] = dynamic_weights(ev.ce.loss, ev.style_loss, ev.drm_loss);
    out.lambda1 = config.enable_style ? l1 : 0.0;
    out.lambda2 = config.enable_drm ? l2 : 0.0;
    out.value = ev.ce.loss - out.lambda1 * ev.style_loss -
                config.lambda_drm * out.lambda2 * ev.drm_loss;
    if (want_grads) {
        out.grads = TableGrads::zeros_like(tables);
        objective_grads(ev, plan, tables, masks, victim, config, out.lambda1, out.lambda2,
                        out.grads);
    }
    return out;
}

AttackResult run_attack(const ImageTensor& clean_nonlinear, int label,
                        const Network<double>& victim, const StyleGuide& style,
                        const AttackConfig& config) {
    config.validate();
    if (label < 0) throw std::invalid_argument("run_attack: label must be >= 0");

    const ImageTensor clean_linear = srgb_to_linear(clean_nonlinear);
    const Palette palette = extract_palette(clean_linear, config.regions, config.seed);
    const SoftMaskSet masks = compute_masks(clean_linear, palette);

    DecisionTables tables = DecisionTables::neutral(config.regions, config.actions);
    Rng rng(config.seed);
    AdamState adam_logits, adam_params;

    AttackResult result;
    result.seed = config.seed;
    result.pred_before = victim_predict(victim, clean_nonlinear);

    double best_style = std::numeric_limits<double>::infinity();
    double best_task = -std::numeric_limits<double>::infinity();

    for (int iter = 0;; ++iter) {
        RetouchPlan plan = sample_plan(tables, config.tau, rng);
        ForwardEval ev = forward_losses(clean_linear, masks, plan, victim, label, style,
                                        /*want_grads=*/true);
        const bool success_now = ev.prediction != label;
        result.history.push_back({iter, ev.ce.loss, ev.style_loss, ev.drm_loss, success_now});

        if (success_now) {
            if (result.first_success_iter < 0) result.first_success_iter = iter;
            if (ev.style_loss < best_style) {
                best_style = ev.style_loss;
                result.success = true;
                result.chosen_iter = iter;
                result.adversarial = ev.nonlinear;
                result.chosen_plan = plan;
                result.pred_after = ev.prediction;
            }
        } else if (!result.success && ev.ce.loss > best_task) {
            // failure fallback: strongest iterate by task loss
            best_task = ev.ce.loss;
            result.chosen_iter = iter;
            result.adversarial = ev.nonlinear;
            result.chosen_plan = plan;
            result.pred_after = ev.prediction;
        }

        const bool persistent_done =
            result.first_success_iter >= 0 &&
            iter >= result.first_success_iter + config.persistent_iters;
        const bool failed_out = result.first_success_iter < 0 && iter + 1 >= config.max_iters;
        if (persistent_done || failed_out) break;

        auto [l1, l2] = dynamic_weights(ev.ce.loss, ev.style_loss, ev.drm_loss);
        if (!config.enable_style) l1 = 0.0;
        if (!config.enable_drm) l2 = 0.0;
        TableGrads grads = TableGrads::zeros_like(tables);
        objective_grads(ev, plan, tables, masks, victim, config, l1, l2, grads);

        auto [lr_p, lr_z] = lr_schedule(iter, config.lr_logits, config.lr_params,
                                        config.max_iters);
        adam_logits.begin_step();
        adam_logits.update(0, tables.logits.data(), grads.logits.data(), tables.logits.size(),
                           lr_p, /*maximize=*/true);
        adam_params.begin_step();
        for (size_t slot = 0; slot < tables.params.size(); ++slot) {
            adam_params.update(slot, tables.params[slot].values.data(), grads.params[slot].data(),
                               grads.params[slot].size(), lr_z, /*maximize=*/true);
        }
        tables.project();
    }

    result.total_iters = static_cast<int>(result.history.size());
    return result;
}

}  // namespace retouch
