#pragma once

#include <memory>
#include <random>
#include <vector>

#include "cvxboost/dataset.hpp"

namespace testing {

inline std::shared_ptr<const cvxboost::Dataset> make_data(std::vector<double> x, std::vector<double> y,
                                                          std::size_t d = 1,
                                                          cvxboost::Task task = cvxboost::Task::Regression) {
    return std::make_shared<const cvxboost::Dataset>(std::move(x), std::move(y), d, task);
}

// n points, features on a lattice of `levels` values per dimension, noisy additive sine
// target; labels are its sign when classification is requested.
inline std::shared_ptr<const cvxboost::Dataset> lattice_data(std::size_t n, std::size_t d, int levels,
                                                             std::uint64_t seed, bool classification = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = levels > 0 ? std::floor(u(rng) * levels) / levels : u(rng);
            x.push_back(v);
            s += std::sin(6.283185307179586 * v);
        }
        const double t = s + 0.3 * noise(rng);
        y.push_back(classification ? (t > 0.0 ? 1.0 : -1.0) : t);
    }
    return make_data(std::move(x), std::move(y), d,
                     classification ? cvxboost::Task::Classification : cvxboost::Task::Regression);
}

}  // namespace testing
