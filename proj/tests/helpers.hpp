#pragma once

// Shared test utilities. The finite-difference side only calls forward
// evaluations, so it stays independent of the backward passes it checks.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "retouch/image.hpp"
#include "retouch/rng.hpp"

namespace testutil {

inline double rel_err(double analytic, double numeric, double scale_floor = 1e-2) {
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), scale_floor});
    return std::abs(analytic - numeric) / denom;
}

template <typename F>
double central_diff(F&& f, double x, double step = 1e-5) {
    return (f(x + step) - f(x - step)) / (2.0 * step);
}

inline retouch::ImageTensor random_image(retouch::Rng& rng, int h, int w,
                                         retouch::ColorState state, double lo = 0.05,
                                         double hi = 0.95) {
    retouch::ImageTensor img(h, w, state);
    for (double& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

inline double max_abs_diff(const retouch::ImageTensor& a, const retouch::ImageTensor& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

// unique scratch directory, removed on destruction
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("retouch_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testutil
