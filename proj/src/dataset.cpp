#include "cvxboost/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

namespace cvxboost {

std::string to_string(Task task) {
    return task == Task::Regression ? "regression" : "classification";
}

Task task_from_string(const std::string& name) {
    if (name == "regression") return Task::Regression;
    if (name == "classification") return Task::Classification;
    throw ConfigError("unknown task '" + name + "'");
}

Dataset::Dataset(std::vector<double> features, std::vector<double> targets, std::size_t dim,
                 Task task)
    : features_(std::move(features)), targets_(std::move(targets)), dim_(dim), task_(task) {
    if (targets_.empty()) throw EmptyDataset();
    if (dim_ == 0) throw SchemaError("feature dimension must be at least 1");
    if (features_.size() != targets_.size() * dim_)
        throw SchemaError("feature matrix has " + std::to_string(features_.size()) +
                          " values, expected " + std::to_string(targets_.size() * dim_));
    for (std::size_t k = 0; k < features_.size(); ++k)
        if (!std::isfinite(features_[k]))
            throw SchemaError("non-finite feature at row " + std::to_string(k / dim_));
    for (std::size_t i = 0; i < targets_.size(); ++i) {
        if (!std::isfinite(targets_[i]))
            throw SchemaError("non-finite target at row " + std::to_string(i));
        if (task_ == Task::Classification && targets_[i] != 1.0 && targets_[i] != -1.0)
            throw SchemaError("classification target must be -1 or +1, got " +
                              std::to_string(targets_[i]) + " at row " + std::to_string(i));
    }
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::size_t resolve_column(const std::string& spec, const std::vector<std::string>& header,
                           std::size_t ncols) {
    const auto it = std::find(header.begin(), header.end(), spec);
    if (it != header.end()) return static_cast<std::size_t>(it - header.begin());
    std::size_t idx = 0;
    const auto [ptr, ec] = std::from_chars(spec.data(), spec.data() + spec.size(), idx);
    if (ec == std::errc() && ptr == spec.data() + spec.size() && idx < ncols) return idx;
    throw SchemaError("unknown column '" + spec + "'");
}

}  // namespace

Dataset parse_csv(const std::string& text, const CsvSchema& schema) {
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::size_t ncols = 0;

    while (std::getline(in, raw)) {
        ++lineno;
        const auto line = trim(raw);
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (ncols == 0) {
            ncols = fields.size();
            const bool numeric = std::all_of(fields.begin(), fields.end(),
                                             [](auto f) { return parse_number(f).has_value(); });
            if (!numeric) {
                for (auto f : fields) header.emplace_back(trim(f));
                continue;
            }
        }
        if (fields.size() != ncols)
            throw ParseError("expected " + std::to_string(ncols) + " fields, got " +
                                 std::to_string(fields.size()),
                             lineno);
        std::vector<double> row;
        row.reserve(ncols);
        for (auto f : fields) {
            const auto v = parse_number(f);
            if (!v) {
                if (trim(f).empty()) throw ParseError("missing value", lineno);
                throw ParseError("not a number: '" + std::string(trim(f)) + "'", lineno);
            }
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw EmptyDataset();
    if (ncols < 2) throw SchemaError("need at least one feature and a target column");

    const std::size_t target = schema.target_column.empty()
                                   ? ncols - 1
                                   : resolve_column(schema.target_column, header, ncols);
    std::vector<std::size_t> feature_idx;
    if (schema.feature_columns.empty()) {
        for (std::size_t c = 0; c < ncols; ++c)
            if (c != target) feature_idx.push_back(c);
    } else {
        for (const auto& spec : schema.feature_columns) {
            const auto c = resolve_column(spec, header, ncols);
            if (c == target) throw SchemaError("column '" + spec + "' is the target");
            feature_idx.push_back(c);
        }
    }

    std::vector<double> features;
    std::vector<double> targets;
    features.reserve(rows.size() * feature_idx.size());
    targets.reserve(rows.size());
    for (const auto& row : rows) {
        for (auto c : feature_idx) features.push_back(row[c]);
        targets.push_back(row[target]);
    }
    Dataset data(std::move(features), std::move(targets), feature_idx.size(), schema.task);
    for (auto c : feature_idx)
        data.feature_names.push_back(header.empty() ? "x" + std::to_string(c) : header[c]);
    data.target_name = header.empty() ? "y" : header[target];
    return data;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), schema);
}

nlohmann::json summary_json(const Dataset& data) {
    const auto ys = data.targets();
    double lo = ys[0];
    double hi = ys[0];
    double mean = 0.0;
    for (double y : ys) {
        lo = std::min(lo, y);
        hi = std::max(hi, y);
        mean += y;
    }
    mean /= static_cast<double>(ys.size());
    double var = 0.0;
    for (double y : ys) var += (y - mean) * (y - mean);
    var /= static_cast<double>(ys.size());
    return {{"schema", "cvxboost.dataset/1"},
            {"n", data.size()},
            {"d", data.dim()},
            {"task", to_string(data.task())},
            {"target", {{"min", lo}, {"max", hi}, {"mean", mean}, {"sd", std::sqrt(var)}}}};
}

const QuadratureRule& gauss_legendre16() {
    static const QuadratureRule rule = [] {
        QuadratureRule r{};
        constexpr int n = 16;
        for (int k = 0; k < n; ++k) {
            // Newton on P_n starting from the Chebyshev-like guess.
            double x = std::cos(std::numbers::pi * (k + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0;
                double p1 = x;
                for (int j = 2; j <= n; ++j) {
                    const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            r.nodes[k] = x;
            r.weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        return r;
    }();
    return rule;
}

Measure::Measure(std::shared_ptr<const Dataset> data, std::vector<double> weights, MeasureKind kind,
                 double halfwidth)
    : data_(std::move(data)), weights_(std::move(weights)), kind_(kind), halfwidth_(halfwidth) {
    if (!data_) throw ConfigError("measure needs a dataset");
    if (weights_.size() != data_->size())
        throw ConfigError("weight vector length does not match dataset");
    // Neumaier summation so that uniform weights over large n pass the 1e-12 check.
    double sum = 0.0;
    double comp = 0.0;
    for (double w : weights_) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("weights must be nonnegative");
        const double t = sum + w;
        comp += std::abs(sum) >= std::abs(w) ? (sum - t) + w : (w - t) + sum;
        sum = t;
    }
    if (std::abs(sum + comp - 1.0) > 1e-12) throw ConfigError("weights must sum to 1");
    if (kind_ == MeasureKind::SmoothedY && !(halfwidth_ > 0.0 && std::isfinite(halfwidth_)))
        throw ConfigError("smoothing halfwidth must be positive");
}

namespace {
std::vector<double> uniform_weights(std::size_t n) {
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
}
}  // namespace

Measure Measure::empirical(std::shared_ptr<const Dataset> data) {
    const auto n = data ? data->size() : 0;
    return Measure(std::move(data), uniform_weights(n), MeasureKind::Empirical, 0.0);
}

Measure Measure::empirical(std::shared_ptr<const Dataset> data, std::vector<double> weights) {
    return Measure(std::move(data), std::move(weights), MeasureKind::Empirical, 0.0);
}

Measure Measure::smoothed_y(std::shared_ptr<const Dataset> data, double halfwidth) {
    const auto n = data ? data->size() : 0;
    return Measure(std::move(data), uniform_weights(n), MeasureKind::SmoothedY, halfwidth);
}

Measure Measure::smoothed_y(std::shared_ptr<const Dataset> data, double halfwidth,
                            std::vector<double> weights) {
    return Measure(std::move(data), std::move(weights), MeasureKind::SmoothedY, halfwidth);
}

double Measure::density_bound() const noexcept {
    if (kind_ == MeasureKind::SmoothedY) return 1.0 / (2.0 * halfwidth_);
    return std::numeric_limits<double>::infinity();
}

double norm_mu_x(const Measure& m, std::span<const double> values) {
    return std::sqrt(inner_mu_x(m, values, values));
}

double inner_mu_x(const Measure& m, std::span<const double> a, std::span<const double> b) {
    if (a.size() != m.size() || b.size() != m.size())
        throw DimensionError("vector length does not match the measure");
    // Neumaier summation: unit-leaf trees must come out with norm exactly 1
    double acc = 0.0, carry = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double term = m.weight(i) * a[i] * b[i];
        const double t = acc + term;
        carry += std::abs(acc) >= std::abs(term) ? (acc - t) + term : (term - t) + acc;
        acc = t;
    }
    return acc + carry;
}

}  // namespace cvxboost
