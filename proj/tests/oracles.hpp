#pragma once

#include <algorithm>
#include <limits>
#include <set>
#include <span>
#include <vector>

#include "cvxboost/dataset.hpp"

namespace testing {

// Every stump x[d] < t with t a midpoint of consecutive distinct values, both
// sign patterns, plus the two constant trees. Returns max of sum_i w_i r_i f(X_i)
// summed in index order, and 0 for the zero tree.
inline double exhaustive_sign_stump_max(const cvxboost::Measure& m, std::span<const double> r) {
    const auto& data = m.data();
    auto score = [&](auto&& f) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) acc += m.weight(i) * r[i] * f(i);
        return acc;
    };
    double best = 0.0;
    for (double s : {-1.0, 1.0}) best = std::max(best, score([&](std::size_t) { return s; }));
    for (std::size_t d = 0; d < data.dim(); ++d) {
        std::set<double> values;
        for (std::size_t i = 0; i < m.size(); ++i) values.insert(data.x(i)[d]);
        std::vector<double> v(values.begin(), values.end());
        for (std::size_t k = 0; k + 1 < v.size(); ++k) {
            const double t = 0.5 * (v[k] + v[k + 1]);
            for (double sl : {-1.0, 1.0})
                for (double sr : {-1.0, 1.0})
                    best = std::max(best, score([&](std::size_t i) { return data.x(i)[d] < t ? sl : sr; }));
        }
    }
    return best;
}

// Smallest weighted SSE sum_i w_i (r_i - f(X_i))^2 over constants and all
// free-leaf stumps (leaf values are the weighted means).
inline double exhaustive_ls_stump_min(const cvxboost::Measure& m, std::span<const double> r) {
    const auto& data = m.data();
    auto sse_split = [&](auto&& left) {
        double wl = 0, wr = 0, al = 0, ar = 0;
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (left(i)) {
                wl += m.weight(i);
                al += m.weight(i) * r[i];
            } else {
                wr += m.weight(i);
                ar += m.weight(i) * r[i];
            }
        }
        const double ml = wl > 0 ? al / wl : 0.0;
        const double mr = wr > 0 ? ar / wr : 0.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double f = left(i) ? ml : mr;
            acc += m.weight(i) * (r[i] - f) * (r[i] - f);
        }
        return acc;
    };
    double best = sse_split([](std::size_t) { return true; });
    for (std::size_t d = 0; d < data.dim(); ++d) {
        std::set<double> values;
        for (std::size_t i = 0; i < m.size(); ++i) values.insert(data.x(i)[d]);
        std::vector<double> v(values.begin(), values.end());
        for (std::size_t k = 0; k + 1 < v.size(); ++k) {
            const double t = 0.5 * (v[k] + v[k + 1]);
            best = std::min(best, sse_split([&](std::size_t i) { return data.x(i)[d] < t; }));
        }
    }
    return best;
}

}  // namespace testing
