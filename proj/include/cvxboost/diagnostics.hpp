#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvxboost/dataset.hpp"
#include "cvxboost/engine.hpp"
#include "cvxboost/losses.hpp"

namespace cvxboost {

/// Slack allowed in every certificate inequality: 1e-9 (1 + |C|).
inline double certificate_tolerance(double risk) { return 1e-9 * (1.0 + std::abs(risk)); }

/// (E xi(0, Y)^2)^{1/2} under the measure.
double xi_zero_norm(const Loss& loss, const Measure& m);

/// (2/alpha) (E xi(0, Y)^2)^{1/2} + sqrt(2 C / alpha); +inf when alpha <= 0.
double iterate_norm_bound(double alpha, double xi0_norm, double risk);

struct CertificateCheck {
    std::string name;
    bool pass = true;
    double worst_margin = 0.0;
    /// 1-based trace row of the first failure, or of the worst margin when passing
    /// (0 when the check had nothing to inspect).
    std::size_t row = 0;
};

struct CertificateReport {
    std::vector<CertificateCheck> checks;

    bool all_pass() const;
    const CertificateCheck* find(const std::string& name) const;
    nlohmann::json to_json() const;
};

/// Re-checks risk monotonicity, the step rule and the per-step decrease bound
/// from the trace columns alone. The Lipschitz constant comes from the loss,
/// falling back to the trace header when the loss has none.
CertificateReport verify_trace(const BoostTrace& trace, const Loss& loss);

struct PartitionSolution {
    /// Minimizer per cell; 0 for cells without samples.
    std::vector<double> values;
    std::vector<double> cell_weight;
    double risk = 0.0;

    /// F-bar at the sample points.
    std::vector<double> at_samples(std::span<const std::size_t> cell_of_sample) const;
};

/// Minimizes sum_{i in cell} w_i E[psi(a, Y) | X_i] over a for every cell.
/// Throws UnboundedError when a cell problem has no minimizer.
PartitionSolution exact_partition_minimizer(const Loss& loss, const Measure& m,
                                            std::span<const std::size_t> cell_of_sample,
                                            std::size_t cell_count);

/// argmin over a of the cell objective given by sample indices.
double minimize_cell(const Loss& loss, const Measure& m, std::span<const std::size_t> samples);

struct StepSummary {
    double sum_squares = 0.0;
    double last_step = 0.0;
    std::size_t count = 0;
};

/// sum_{t >= 1} w_t^2 over the step column (row 0 holds w_0 and is skipped).
StepSummary sum_square_steps(const BoostTrace& trace);
/// Plain partial sum of the given steps.
StepSummary sum_square_steps(std::span<const double> steps);

}  // namespace cvxboost
