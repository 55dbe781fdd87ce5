#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace retouch {

// Adam with bias correction (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
// Set maximize = true for gradient ascent. Step count is per-state; call
// begin_step() once per optimizer step before updating the arrays it owns.
struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long t = 0;
    std::vector<std::vector<double>> m, v;  // one slot per registered array

    void begin_step() { ++t; }

    template <typename T>
    void update(size_t slot, T* w, const T* g, size_t n, double lr, bool maximize = false) {
        if (m.size() <= slot) {
            m.resize(slot + 1);
            v.resize(slot + 1);
        }
        if (m[slot].empty()) {
            m[slot].assign(n, 0.0);
            v[slot].assign(n, 0.0);
        }
        if (m[slot].size() != n) throw std::invalid_argument("AdamState: slot size changed");
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t i = 0; i < n; ++i) {
            const double gi = static_cast<double>(g[i]);
            m[slot][i] = beta1 * m[slot][i] + (1.0 - beta1) * gi;
            v[slot][i] = beta2 * v[slot][i] + (1.0 - beta2) * gi * gi;
            const double mhat = m[slot][i] / c1;
            const double vhat = v[slot][i] / c2;
            const double step = lr * mhat / (std::sqrt(vhat) + eps);
            w[i] = static_cast<T>(static_cast<double>(w[i]) + (maximize ? step : -step));
        }
    }
};

}  // namespace retouch
