#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "retouch/drm.hpp"

using namespace retouch;
using testutil::rel_err;

TEST_CASE("gumbel softmax with one option is forced") {
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        Decision d = gumbel_softmax({3.7}, 1.0, rng);
        CHECK(d.choice == 0);
        CHECK(d.soft.size() == 1);
        CHECK(d.soft[0] == 1.0);
    }
}

TEST_CASE("gumbel softmax sampling frequencies") {
    Rng rng(99);
    // dominant logit: index 0 nearly always
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
        if (gumbel_softmax({20.0, 0.0, 0.0}, 1.0, rng).choice == 0) ++hits;
    }
    CHECK(hits >= 9990);

    // uniform logits over 7 ops: frequencies within 1/7 +- 0.015 (3 sigma)
    std::vector<double> uniform(7, 0.0);
    std::array<int, 7> counts{};
    for (int i = 0; i < 50000; ++i) counts[gumbel_softmax(uniform, 1.0, rng).choice] += 1;
    for (int n = 0; n < 7; ++n) {
        CHECK(std::abs(counts[n] / 50000.0 - 1.0 / 7.0) <= 0.015);
    }
}

TEST_CASE("gumbel softmax frequencies match softmax(logits) by chi-squared") {
    Rng rng(4242);
    const std::vector<double> logits = {0.5, -0.3, 1.1, 0.0, -0.9, 0.4, 0.2};
    std::vector<double> probs(7);
    double sum = 0.0;
    for (int i = 0; i < 7; ++i) sum += std::exp(logits[i]);
    for (int i = 0; i < 7; ++i) probs[i] = std::exp(logits[i]) / sum;

    const int draws = 50000;
    std::array<int, 7> counts{};
    for (int i = 0; i < draws; ++i) {
        Decision d = gumbel_softmax(logits, 1.0, rng);
        // hard sample is a valid one-hot aligned with the soft argmax
        int soft_arg = 0;
        double soft_sum = 0.0;
        for (int n = 0; n < 7; ++n) {
            soft_sum += d.soft[n];
            if (d.soft[n] > d.soft[soft_arg]) soft_arg = n;
        }
        REQUIRE(d.choice == soft_arg);
        REQUIRE(std::abs(soft_sum - 1.0) <= 1e-9);
        counts[d.choice] += 1;
    }
    double chi2 = 0.0;
    for (int n = 0; n < 7; ++n) {
        const double expected = probs[n] * draws;
        chi2 += (counts[n] - expected) * (counts[n] - expected) / expected;
    }
    // 0.999 quantile of chi-squared with 6 dof
    CHECK(chi2 < 22.457744484825323);
}

TEST_CASE("sampling a plan selects matching parameters") {
    DecisionTables tables = DecisionTables::neutral(1, 1);
    tables.logits[3] = 25.0;  // force op index 3 (contrast)
    tables.param_slot(0, 0, 3).values[0] = 0.33;
    Rng rng(5);
    RetouchPlan plan = sample_plan(tables, 1.0, rng);
    REQUIRE(plan.decisions.size() == 1);
    CHECK(plan.decision(0, 0).choice == 3);
    CHECK(plan.selected_params(0, 0).kind == OpKind::Contrast);
    CHECK(plan.selected_params(0, 0).values[0] == 0.33);

    // default-scale plan: 5 regions x 30 actions
    DecisionTables big = DecisionTables::neutral(5, 30);
    Rng rng2(6);
    RetouchPlan bigplan = sample_plan(big, 1.0, rng2);
    CHECK(bigplan.decisions.size() == 150);
    CHECK(bigplan.selected.size() == 150);

    // determinism under an identical seed
    Rng ra(777), rb(777);
    RetouchPlan pa = sample_plan(big, 1.0, ra);
    RetouchPlan pb = sample_plan(big, 1.0, rb);
    for (size_t i = 0; i < pa.decisions.size(); ++i) {
        CHECK(pa.decisions[i].choice == pb.decisions[i].choice);
        for (int n = 0; n < 7; ++n) CHECK(pa.decisions[i].soft[n] == pb.decisions[i].soft[n]);
    }
}

TEST_CASE("plan distribution aggregates soft rows") {
    // neutral tables: every row uniform, so S_p is uniform
    DecisionTables tables = DecisionTables::neutral(2, 3);
    SampledOpDistribution dist = tables_distribution(tables, 0.0);
    for (double p : dist.probs) CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-12));

    // hand-built plan: one-hot rows on op 2
    RetouchPlan plan;
    plan.regions = 1;
    plan.actions = 2;
    plan.temperature = 1.0;
    Decision d;
    d.choice = 2;
    d.soft = {0, 0, 1, 0, 0, 0, 0};
    plan.decisions = {d, d};
    SampledOpDistribution onehot = plan_distribution(plan, 0.0);
    for (int n = 0; n < 7; ++n) CHECK(onehot.probs[n] == (n == 2 ? 1.0 : 0.0));

    // two rows (1,0) and (0,1) average to (0.5, 0.5)
    RetouchPlan two;
    two.regions = 1;
    two.actions = 2;
    two.temperature = 1.0;
    Decision a, b;
    a.choice = 0;
    a.soft = {1.0, 0.0};
    b.choice = 1;
    b.soft = {0.0, 1.0};
    two.decisions = {a, b};
    SampledOpDistribution mean = plan_distribution(two, 0.0);
    CHECK(mean.probs[0] == doctest::Approx(0.5));
    CHECK(mean.probs[1] == doctest::Approx(0.5));

    // smoothing keeps entries positive and normalized
    SampledOpDistribution smoothed = plan_distribution(plan);
    double total = 0.0;
    for (double p : smoothed.probs) {
        CHECK(p >= kDistributionEps * 0.999);
        total += p;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
}

TEST_CASE("drm regularization closed forms") {
    SampledOpDistribution uniform;
    uniform.probs.assign(7, 1.0 / 7.0);
    uniform.eps = 0.0;
    CHECK(drm_regularization(uniform) == doctest::Approx(0.0).epsilon(1e-15));

    SampledOpDistribution onehot;
    onehot.probs = {1, 0, 0, 0, 0, 0, 0};
    onehot.eps = 0.0;
    CHECK(std::abs(drm_regularization(onehot) - std::log(7.0)) <= 1e-9);

    SampledOpDistribution half;
    half.probs = {0.5, 0.5, 0, 0, 0, 0, 0};
    half.eps = 0.0;
    // direct summation: 2 * 0.5 * ln(0.5 / (1/7)) = ln(3.5)
    CHECK(drm_regularization(half) == doctest::Approx(1.252762968495368).epsilon(1e-12));

    // non-negativity on random distributions
    Rng rng(12);
    for (int t = 0; t < 50; ++t) {
        SampledOpDistribution d;
        d.probs.resize(7);
        double s = 0.0;
        for (double& p : d.probs) {
            p = rng.uniform(1e-4, 1.0);
            s += p;
        }
        for (double& p : d.probs) p /= s;
        d.eps = 0.0;
        CHECK(drm_regularization(d) >= 0.0);
    }
}

TEST_CASE("drm regularization gradient matches finite differences") {
    DecisionTables tables = DecisionTables::neutral(2, 2);
    Rng init(3);
    for (double& l : tables.logits) l = init.uniform(-1.0, 1.0);

    const uint64_t noise_seed = 2718;
    auto loss_at = [&](const DecisionTables& t) {
        Rng rng(noise_seed);
        RetouchPlan plan = sample_plan(t, 1.0, rng);
        return drm_regularization(plan_distribution(plan));
    };

    Rng rng(noise_seed);
    RetouchPlan plan = sample_plan(tables, 1.0, rng);
    SampledOpDistribution dist = plan_distribution(plan);
    std::vector<double> d_probs;
    drm_regularization(dist, &d_probs);
    TableGrads grads = TableGrads::zeros_like(tables);
    distribution_backward(plan, d_probs, grads);

    double worst = 0.0;
    for (size_t i = 0; i < tables.logits.size(); ++i) {
        auto f = [&](double v) {
            DecisionTables t = tables;
            t.logits[i] = v;
            return loss_at(t);
        };
        const double fd = testutil::central_diff(f, tables.logits[i]);
        worst = std::max(worst, rel_err(grads.logits[i], fd, 1e-3));
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("straight-through gradient flows through the soft sample") {
    const std::vector<double> logits = {0.2, -0.4, 0.9, 0.0, 0.3, -1.2, 0.6};
    const double tau = 1.0;
    const uint64_t seed = 31;
    Rng rng(seed);
    Decision d = gumbel_softmax(logits, tau, rng);

    // scalar of the hard sample: phi = sum_i c_i * hard_i; its straight-through
    // gradient must equal the gradient of sum_i c_i * soft_i
    std::vector<double> c = {0.3, -0.7, 1.4, 0.2, -0.1, 0.5, 0.9};
    std::vector<double> st = gumbel_softmax_backward(d.soft, tau, c);

    double worst = 0.0;
    for (size_t j = 0; j < logits.size(); ++j) {
        auto f = [&](double v) {
            std::vector<double> l2 = logits;
            l2[j] = v;
            Rng r2(seed);  // same gumbel noise
            Decision d2 = gumbel_softmax(l2, tau, r2);
            double acc = 0.0;
            for (size_t i = 0; i < c.size(); ++i) acc += c[i] * d2.soft[i];
            return acc;
        };
        const double fd = testutil::central_diff(f, logits[j]);
        worst = std::max(worst, rel_err(st[j], fd, 1e-3));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("projection clamps every parameter slot into range") {
    DecisionTables tables = DecisionTables::neutral(2, 2);
    Rng rng(88);
    for (OpParams& p : tables.params) {
        for (double& v : p.values) v = rng.uniform(-50.0, 50.0);
    }
    tables.project();
    for (const OpParams& p : tables.params) {
        const OpKindInfo& info = op_kind_info(p.kind);
        REQUIRE(p.values.size() == static_cast<size_t>(info.param_dim));
        for (double v : p.values) {
            CHECK(v >= info.lo);
            CHECK(v <= info.hi);
        }
    }

    // softmax rows stay normalized
    for (double& l : tables.logits) l = rng.uniform(-3.0, 3.0);
    for (int k = 0; k < 2; ++k) {
        for (int m = 0; m < 2; ++m) {
            std::vector<double> row = tables.row_probabilities(k, m);
            double sum = 0.0;
            for (double p : row) sum += p;
            CHECK(std::abs(sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("gumbel softmax input validation") {
    Rng rng(1);
    CHECK_THROWS_AS(gumbel_softmax({}, 1.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(gumbel_softmax({0.0}, 0.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(DecisionTables::neutral(0, 5), std::invalid_argument);
}
