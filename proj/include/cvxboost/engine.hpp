#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvxboost/dataset.hpp"
#include "cvxboost/learners.hpp"
#include "cvxboost/losses.hpp"

namespace cvxboost {

enum class Algorithm {
    /// F_{t+1} = F_t + w_{t+1} f_{t+1} over sign trees, w_{t+1} = min(w_t, -E xi f / (2L)).
    AdaptiveStep = 1,
    /// F_{t+1} = F_t + nu f_{t+1} with f_{t+1} a least-squares tree fit of -xi.
    FixedStep = 2,
};

struct Term {
    double weight = 0.0;
    Tree tree;
};

/// F = F_0 + sum_k w_k f_k.
class AdditiveModel {
public:
    AdditiveModel(std::size_t dim, Algorithm algo, Tree f0 = Tree::zero());

    double predict(std::span<const double> x) const;
    /// +1 iff predict(x) > 0.
    int classify(std::span<const double> x) const;
    std::vector<double> predict(const Dataset& data) const;

    void add_term(double weight, Tree tree);

    std::size_t dim() const noexcept { return dim_; }
    Algorithm algorithm() const noexcept { return algo_; }
    const Tree& f0() const noexcept { return f0_; }
    const std::vector<Term>& terms() const noexcept { return terms_; }

    std::string loss_spec;

    nlohmann::json to_json() const;
    static AdditiveModel from_json(const nlohmann::json& j);

private:
    std::size_t dim_;
    Algorithm algo_;
    Tree f0_;
    std::vector<Term> terms_;
};

struct TraceRow {
    std::size_t t = 0;
    double risk = 0.0;        ///< C(F_t)
    double step = 0.0;        ///< w_t (adaptive) or nu (fixed)
    double f_norm = 0.0;      ///< ||f_t||
    double inner_prod = 0.0;  ///< E xi(F_{t-1}(X), Y) f_t(X)
    double margin = 0.0;      ///< decrease minus its guaranteed lower bound
    // Monitored during the run but not serialized.
    double descent_margin = 0.0;  ///< slack in the one-step descent inequality
    double iterate_norm = 0.0;    ///< ||F_t||
    double norm_bound = 0.0;      ///< norm bound from strong convexity, or +inf when alpha = 0
};

/// Row 0 holds the initial state (step = w0 for the adaptive loop). Row t >= 1
/// records the iterate after t productive steps.
struct BoostTrace {
    Algorithm algo = Algorithm::AdaptiveStep;
    std::string loss;
    double lipschitz = 0.0;
    double alpha = 0.0;
    double w0 = 0.0;
    double nu = 0.0;
    std::size_t max_iters = 0;
    double step_floor = 0.0;
    double norm_floor = 0.0;
    std::string learner;
    std::string search;
    std::string stop_reason;
    std::vector<std::string> warnings;
    std::vector<TraceRow> rows;

    /// `# key=value` header lines, then t,risk,step,f_norm,inner_prod,margin31|margin32.
    std::string to_csv() const;
    static BoostTrace from_csv(const std::string& text);
};

struct RunConfig {
    std::size_t max_iters = 10000;
    double w0 = 1.0;
    double nu = 0.0;
    double step_floor = 1e-12;
    double norm_floor = 1e-12;
    /// Abort with CertificateError when a per-iteration inequality fails.
    bool enforce_certificates = true;
    std::optional<Tree> f0;
};

struct RunResult {
    AdditiveModel model;
    BoostTrace trace;
    /// F_T at the sample points, bit-identical to model.predict on the samples.
    std::vector<double> fitted;
};

/// Adaptive-step boosting over SignLeaf trees. Stops when the selected direction
/// is zero (the iterate is optimal over the span), when the step falls below
/// step_floor, or after max_iters.
RunResult run_algorithm1(const Loss& loss, const Measure& m, const WeakClassConfig& cfg, const RunConfig& rc);

/// Fixed-step boosting with least-squares tree fits. Requires 0 < nu < 1/(2L).
RunResult run_algorithm2(const Loss& loss, const Measure& m, const WeakClassConfig& cfg, const RunConfig& rc);

}  // namespace cvxboost
