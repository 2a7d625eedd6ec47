#pragma once

// Central finite-difference checks of the linear-model objectives, shared
// by the unit and acceptance tests.

#include "kdfe/ml/models.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace testing::gradcheck {

struct Problem {
    kdfe::ml::Matrix x;
    std::vector<std::uint8_t> y;
    std::vector<double> w;
};

inline Problem random_problem(std::mt19937 &rng, std::size_t rows = 30, std::size_t cols = 4) {
    std::normal_distribution<> n01;
    Problem p;
    p.x = kdfe::ml::Matrix(rows, cols);
    for (auto &v : p.x.data) {
        v = n01(rng);
    }
    for (std::size_t r = 0; r < rows; ++r) {
        p.y.push_back(static_cast<std::uint8_t>(rng() % 2));
    }
    p.w.resize(cols + 1);
    for (auto &v : p.w) {
        v = n01(rng);
    }
    return p;
}

/// ||g - fd|| / max(||g|| + ||fd||, 1e-12) with step h.
template <class F, class G>
double relative_error(F objective, G gradient, std::vector<double> w, double h = 1e-6) {
    const auto g = gradient(w);
    double num = 0, den_g = 0, den_fd = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double keep = w[i];
        w[i] = keep + h;
        const double up = objective(w);
        w[i] = keep - h;
        const double down = objective(w);
        w[i] = keep;
        const double fd = (up - down) / (2 * h);
        num += (g[i] - fd) * (g[i] - fd);
        den_g += g[i] * g[i];
        den_fd += fd * fd;
    }
    return std::sqrt(num) / std::max(std::sqrt(den_g) + std::sqrt(den_fd), 1e-12);
}

inline double logistic_error(const Problem &p, double lambda) {
    return relative_error(
        [&](const std::vector<double> &w) { return kdfe::ml::logistic_objective(p.x, p.y, w, lambda); },
        [&](const std::vector<double> &w) { return kdfe::ml::logistic_gradient(p.x, p.y, w, lambda); }, p.w);
}

inline double svm_error(const Problem &p, double c, bool squared) {
    return relative_error(
        [&](const std::vector<double> &w) { return kdfe::ml::svm_objective(p.x, p.y, w, c, squared); },
        [&](const std::vector<double> &w) { return kdfe::ml::svm_subgradient(p.x, p.y, w, c, squared); }, p.w);
}

} // namespace testing::gradcheck
