#include "retouch/drm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace retouch {

DecisionTables DecisionTables::neutral(int regions, int actions) {
    if (regions < 1 || actions < 1) {
        throw std::invalid_argument("DecisionTables: regions and actions must be >= 1");
    }
    DecisionTables t;
    t.regions = regions;
    t.actions = actions;
    t.logits.assign(static_cast<size_t>(regions) * actions * t.num_ops, 0.0);
    t.params.reserve(t.logits.size());
    for (int k = 0; k < regions; ++k) {
        for (int m = 0; m < actions; ++m) {
            for (int n = 0; n < t.num_ops; ++n) {
                t.params.push_back(OpParams::neutral(static_cast<OpKind>(n)));
            }
        }
    }
    return t;
}

void DecisionTables::project() {
    for (OpParams& p : params) project_params(p);
}

std::vector<double> DecisionTables::row_probabilities(int k, int m) const {
    const double* row = logits.data() + row_offset(k, m);
    std::vector<double> probs(num_ops);
    double mx = row[0];
    for (int n = 1; n < num_ops; ++n) mx = std::max(mx, row[n]);
    double sum = 0.0;
    for (int n = 0; n < num_ops; ++n) {
        probs[n] = std::exp(row[n] - mx);
        sum += probs[n];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

TableGrads TableGrads::zeros_like(const DecisionTables& t) {
    TableGrads g;
    g.logits.assign(t.logits.size(), 0.0);
    g.params.resize(t.params.size());
    for (size_t i = 0; i < t.params.size(); ++i) {
        g.params[i].assign(t.params[i].values.size(), 0.0);
    }
    return g;
}

Decision gumbel_softmax(const std::vector<double>& logits, double tau, Rng& rng) {
    if (logits.empty()) throw std::invalid_argument("gumbel_softmax: empty logit row");
    if (tau <= 0.0) throw std::invalid_argument("gumbel_softmax: tau must be > 0");
    const int n = static_cast<int>(logits.size());
    Decision d;
    d.soft.resize(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        d.soft[i] = (logits[i] + rng.gumbel()) / tau;
        mx = std::max(mx, d.soft[i]);
    }
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        d.soft[i] = std::exp(d.soft[i] - mx);
        sum += d.soft[i];
    }
    int arg = 0;
    for (int i = 0; i < n; ++i) {
        d.soft[i] /= sum;
        if (d.soft[i] > d.soft[arg]) arg = i;  // ties keep the lowest index
    }
    d.choice = arg;
    return d;
}

std::vector<double> gumbel_softmax_backward(const std::vector<double>& soft, double tau,
                                            const std::vector<double>& d_hard) {
    if (soft.size() != d_hard.size()) {
        throw std::invalid_argument("gumbel_softmax_backward: size mismatch");
    }
    const int n = static_cast<int>(soft.size());
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += d_hard[i] * soft[i];
    std::vector<double> d_logits(n);
    for (int j = 0; j < n; ++j) d_logits[j] = soft[j] * (d_hard[j] - dot) / tau;
    return d_logits;
}

RetouchPlan sample_plan(const DecisionTables& tables, double tau, Rng& rng) {
    RetouchPlan plan;
    plan.regions = tables.regions;
    plan.actions = tables.actions;
    plan.temperature = tau;
    plan.decisions.reserve(static_cast<size_t>(tables.regions) * tables.actions);
    plan.selected.reserve(plan.decisions.capacity());
    std::vector<double> row(tables.num_ops);
    for (int k = 0; k < tables.regions; ++k) {
        for (int m = 0; m < tables.actions; ++m) {
            const double* src = tables.logits.data() + tables.row_offset(k, m);
            row.assign(src, src + tables.num_ops);
            Decision d = gumbel_softmax(row, tau, rng);
            plan.selected.push_back(tables.param_slot(k, m, d.choice));
            plan.decisions.push_back(std::move(d));
        }
    }
    return plan;
}

namespace {

SampledOpDistribution smooth(std::vector<double> mean, double eps) {
    SampledOpDistribution dist;
    dist.eps = eps;
    const double n = static_cast<double>(mean.size());
    if (eps > 0.0) {
        for (double& p : mean) p = (1.0 - n * eps) * p + eps;
    }
    dist.probs = std::move(mean);
    return dist;
}

}  // namespace

SampledOpDistribution plan_distribution(const RetouchPlan& plan, double eps) {
    if (plan.decisions.empty()) throw std::invalid_argument("plan_distribution: empty plan");
    const size_t n = plan.decisions[0].soft.size();
    std::vector<double> mean(n, 0.0);
    for (const Decision& d : plan.decisions) {
        for (size_t i = 0; i < n; ++i) mean[i] += d.soft[i];
    }
    for (double& p : mean) p /= static_cast<double>(plan.decisions.size());
    return smooth(std::move(mean), eps);
}

SampledOpDistribution tables_distribution(const DecisionTables& tables, double eps) {
    std::vector<double> mean(tables.num_ops, 0.0);
    for (int k = 0; k < tables.regions; ++k) {
        for (int m = 0; m < tables.actions; ++m) {
            std::vector<double> probs = tables.row_probabilities(k, m);
            for (int n = 0; n < tables.num_ops; ++n) mean[n] += probs[n];
        }
    }
    const double rows = static_cast<double>(tables.regions) * tables.actions;
    for (double& p : mean) p /= rows;
    return smooth(std::move(mean), eps);
}

double drm_regularization(const SampledOpDistribution& dist, std::vector<double>* d_probs) {
    const size_t n = dist.probs.size();
    const double q = 1.0 / static_cast<double>(n);
    double kl = 0.0;
    for (double p : dist.probs) {
        if (p > 0.0) kl += p * std::log(p / q);
    }
    if (d_probs) {
        // chain through the smoothing p' = (1 - n*eps) p + eps
        const double scale = 1.0 - static_cast<double>(n) * dist.eps;
        d_probs->assign(n, 0.0);
        for (size_t i = 0; i < n; ++i) {
            double p = dist.probs[i];
            (*d_probs)[i] = p > 0.0 ? scale * (std::log(p / q) + 1.0) : 0.0;
        }
    }
    return std::max(kl, 0.0);
}

void distribution_backward(const RetouchPlan& plan, const std::vector<double>& d_probs,
                           TableGrads& grads) {
    const double inv_rows = 1.0 / static_cast<double>(plan.decisions.size());
    const size_t n = d_probs.size();
    std::vector<double> d_soft(n);
    for (size_t r = 0; r < plan.decisions.size(); ++r) {
        const Decision& d = plan.decisions[r];
        for (size_t i = 0; i < n; ++i) d_soft[i] = d_probs[i] * inv_rows;
        std::vector<double> d_logits = gumbel_softmax_backward(d.soft, plan.temperature, d_soft);
        double* dst = grads.logits.data() + r * n;
        for (size_t i = 0; i < n; ++i) dst[i] += d_logits[i];
    }
}

}  // namespace retouch
