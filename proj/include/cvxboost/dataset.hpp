#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvxboost/error.hpp"

namespace cvxboost {

enum class Task { Regression, Classification };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

/// Samples (X_i, Y_i) with a fixed feature dimension d. Immutable once built.
class Dataset {
public:
    /// `features` is row-major, n * d values. Throws EmptyDataset when y is empty,
    /// SchemaError on shape mismatch, non-finite values or labels outside {-1, +1}
    /// for classification.
    Dataset(std::vector<double> features, std::vector<double> targets, std::size_t dim,
            Task task = Task::Regression);

    std::size_t size() const noexcept { return targets_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    Task task() const noexcept { return task_; }

    std::span<const double> x(std::size_t i) const {
        return {features_.data() + i * dim_, dim_};
    }
    double y(std::size_t i) const { return targets_[i]; }
    std::span<const double> targets() const noexcept { return targets_; }
    std::span<const double> features() const noexcept { return features_; }

    std::vector<std::string> feature_names;
    std::string target_name;

private:
    std::vector<double> features_;
    std::vector<double> targets_;
    std::size_t dim_;
    Task task_;
};

struct CsvSchema {
    /// Column names or zero-based indices (as strings). Empty means every column
    /// except the target.
    std::vector<std::string> feature_columns;
    /// Name or index of the target column. Empty means the last column.
    std::string target_column;
    Task task = Task::Regression;
};

/// Comma separated, '.' decimal, optional header row, no missing values.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
Dataset parse_csv(const std::string& text, const CsvSchema& schema = {});

/// {n, d, task, target: {min, max, mean, sd}}
nlohmann::json summary_json(const Dataset& data);

enum class MeasureKind { Empirical, SmoothedY };

/// 16-point Gauss-Legendre rule on [-1, 1].
struct QuadratureRule {
    std::array<double, 16> nodes;
    std::array<double, 16> weights;
};
const QuadratureRule& gauss_legendre16();

/// Weighted empirical measure over a dataset, optionally with each Y_i replaced
/// by Y_i + h U, U uniform on [-1, 1]. The smoothed conditional density of Y is
/// bounded by 1 / (2h).
class Measure {
public:
    static Measure empirical(std::shared_ptr<const Dataset> data);
    static Measure empirical(std::shared_ptr<const Dataset> data, std::vector<double> weights);
    static Measure smoothed_y(std::shared_ptr<const Dataset> data, double halfwidth);
    static Measure smoothed_y(std::shared_ptr<const Dataset> data, double halfwidth,
                              std::vector<double> weights);

    MeasureKind kind() const noexcept { return kind_; }
    double halfwidth() const noexcept { return halfwidth_; }
    /// Bound B on the conditional density of Y; infinite for the empirical measure.
    double density_bound() const noexcept;

    const Dataset& data() const noexcept { return *data_; }
    std::shared_ptr<const Dataset> data_ptr() const noexcept { return data_; }
    std::size_t size() const noexcept { return data_->size(); }
    double weight(std::size_t i) const { return weights_[i]; }
    std::span<const double> weights() const noexcept { return weights_; }

    /// E[g(Y) | X = X_i] under this measure's Y-kernel. Smoothed expectations
    /// integrate each half of [Y_i - h, Y_i + h] with the 16-point rule so that a
    /// kink at Y_i is integrated exactly.
    template <class G>
    double y_kernel(std::size_t i, G&& g) const {
        const double yi = data_->y(i);
        if (kind_ == MeasureKind::Empirical) return g(yi);
        const auto& rule = gauss_legendre16();
        double acc = 0.0;
        for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
            const double u = 0.5 * rule.nodes[k];
            acc += rule.weights[k] * (g(yi + halfwidth_ * (u - 0.5)) + g(yi + halfwidth_ * (u + 0.5)));
        }
        return 0.25 * acc;
    }

private:
    Measure(std::shared_ptr<const Dataset> data, std::vector<double> weights, MeasureKind kind,
            double halfwidth);

    std::shared_ptr<const Dataset> data_;
    std::vector<double> weights_;
    MeasureKind kind_;
    double halfwidth_;
};

/// sum_i w_i E[h(X_i, Y) | X = X_i]. Throws NumericalError naming the first sample
/// whose contribution is not finite.
template <class H>
double expect(const Measure& m, H&& h) {
    double total = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto xi = m.data().x(i);
        const double v = m.y_kernel(i, [&](double y) { return h(xi, y); });
        if (!std::isfinite(v)) throw NumericalError("non-finite expectation term", i);
        total += m.weight(i) * v;
    }
    if (!std::isfinite(total)) throw NumericalError("non-finite expectation", m.size() - 1);
    return total;
}

/// ||F||_{mu_X} from the values of F at the sample points.
double norm_mu_x(const Measure& m, std::span<const double> values);

/// sum_i w_i a_i b_i.
double inner_mu_x(const Measure& m, std::span<const double> a, std::span<const double> b);

/// ||F||_{mu_X} for a callable F(x).
template <class F>
double norm_mu_x_of(const Measure& m, F&& f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double v = f(m.data().x(i));
        acc += m.weight(i) * v * v;
    }
    return std::sqrt(acc);
}

}  // namespace cvxboost
