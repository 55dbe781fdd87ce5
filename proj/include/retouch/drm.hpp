#pragma once

#include <vector>

#include "retouch/ops.hpp"
#include "retouch/rng.hpp"

namespace retouch {

// The optimizable attack state theta = [P, Z]: one unconstrained logit row
// per (mask region, action slot) parameterizing the action probabilities,
// and one parameter slot per candidate operator.
struct DecisionTables {
    int regions = 0;  // K
    int actions = 0;  // M
    int num_ops = kNumOpKinds;
    std::vector<double> logits;          // K*M*N, row-major (k, m, n)
    std::vector<OpParams> params;        // K*M*N slots, kind = n

    static DecisionTables neutral(int regions, int actions);

    size_t row_offset(int k, int m) const {
        return (static_cast<size_t>(k) * actions + m) * num_ops;
    }
    OpParams& param_slot(int k, int m, int n) { return params[row_offset(k, m) + n]; }
    const OpParams& param_slot(int k, int m, int n) const { return params[row_offset(k, m) + n]; }

    // PGD projection: clamp every parameter slot into its operator range.
    void project();

    // softmax over each logit row (no Gumbel noise)
    std::vector<double> row_probabilities(int k, int m) const;
};

// Gradients w.r.t. the tables, same layout.
struct TableGrads {
    std::vector<double> logits;
    std::vector<std::vector<double>> params;  // per slot

    static TableGrads zeros_like(const DecisionTables& t);
};

// One sampled decision: a hard one-hot (stored as its index) plus the soft
// probabilities it was drawn through.
struct Decision {
    int choice = 0;
    std::vector<double> soft;  // length N, sums to 1
};

// Per-(k,m) sampled decisions and the selected parameters Z (.) D.
struct RetouchPlan {
    int regions = 0, actions = 0;
    double temperature = 1.0;
    std::vector<Decision> decisions;       // K*M
    std::vector<OpParams> selected;        // K*M, copy of the chosen slot

    const Decision& decision(int k, int m) const {
        return decisions[static_cast<size_t>(k) * actions + m];
    }
    const OpParams& selected_params(int k, int m) const {
        return selected[static_cast<size_t>(k) * actions + m];
    }
};

// Draw one Gumbel-Softmax sample from a logit row: soft = softmax((logit+g)/tau),
// hard = one-hot argmax(soft) (ties to the lowest index). Gradients flow
// through soft (straight-through).
Decision gumbel_softmax(const std::vector<double>& logits, double tau, Rng& rng);

// VJP of the straight-through estimator: maps a gradient w.r.t. the hard
// one-hot (treated as the soft sample) back to the logit row.
std::vector<double> gumbel_softmax_backward(const std::vector<double>& soft, double tau,
                                            const std::vector<double>& d_hard);

// Fresh plan: one gumbel_softmax draw per (k,m) plus the matching parameter
// selection. Called once per attack iteration.
RetouchPlan sample_plan(const DecisionTables& tables, double tau, Rng& rng);

// Mean of the plan's soft rows (smoothed): the sampled-operation distribution
// S_p of the diversity regularizer. eps = 0 disables smoothing.
struct SampledOpDistribution {
    std::vector<double> probs;  // S_p, length N
    double eps = 0.0;
};
constexpr double kDistributionEps = 1e-6;
SampledOpDistribution plan_distribution(const RetouchPlan& plan, double eps = kDistributionEps);
SampledOpDistribution tables_distribution(const DecisionTables& tables,
                                          double eps = kDistributionEps);

// KL(S_p || uniform): zero iff S_p is uniform. d_probs, when non-null,
// receives the gradient w.r.t. the (pre-smoothing) S_p entries.
double drm_regularization(const SampledOpDistribution& dist, std::vector<double>* d_probs = nullptr);

// Backpropagate a gradient w.r.t. S_p through the plan's soft rows into
// logit gradients (accumulated into grads.logits).
void distribution_backward(const RetouchPlan& plan, const std::vector<double>& d_probs,
                           TableGrads& grads);

}  // namespace retouch
