#include "cvxboost/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cvxboost/format.hpp"

namespace cvxboost {

double xi_zero_norm(const Loss& loss, const Measure& m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        acc += m.weight(i) * m.y_kernel(i, [&](double y) {
            const double v = loss.xi(0.0, y);
            return v * v;
        });
    }
    return std::sqrt(acc);
}

double iterate_norm_bound(double alpha, double xi0_norm, double risk) {
    if (!(alpha > 0.0)) return std::numeric_limits<double>::infinity();
    return 2.0 / alpha * xi0_norm + std::sqrt(std::max(0.0, 2.0 * risk / alpha));
}

bool CertificateReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

const CertificateCheck* CertificateReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

nlohmann::json CertificateReport::to_json() const {
    nlohmann::json j;
    j["schema"] = "cvxboost.certificates/1";
    j["pass"] = all_pass();
    auto arr = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json e{{"name", c.name}, {"pass", c.pass}, {"row", c.row}};
        if (std::isfinite(c.worst_margin))
            e["worst_margin"] = c.worst_margin;
        else
            e["worst_margin"] = nullptr;
        arr.push_back(std::move(e));
    }
    j["checks"] = std::move(arr);
    return j;
}

namespace {

// Tracks the worst margin and the first failing row of one check.
struct Tally {
    CertificateCheck check;
    bool any = false;

    explicit Tally(std::string name) { check.name = std::move(name); }

    void add(std::size_t row, double margin, double tol) {
        const bool ok = margin >= -tol;
        if (!any || margin < check.worst_margin) {
            check.worst_margin = margin;
            if (check.pass) check.row = row;
        }
        if (!ok && check.pass) {
            check.pass = false;
            check.row = row;
        }
        any = true;
    }
};

}  // namespace

CertificateReport verify_trace(const BoostTrace& trace, const Loss& loss) {
    if (trace.rows.empty()) throw SchemaError("trace has no rows");
    for (std::size_t j = 0; j < trace.rows.size(); ++j) {
        const auto& r = trace.rows[j];
        if (!std::isfinite(r.risk) || !std::isfinite(r.step) || !std::isfinite(r.f_norm))
            throw SchemaError("trace row " + std::to_string(j + 1) + " has non-finite values");
    }
    double L = loss.lipschitz();
    if (!std::isfinite(L)) L = trace.lipschitz;
    if (!(std::isfinite(L) && L > 0.0)) throw AssumptionError("no Lipschitz constant available for " + loss.spec());

    const auto& rows = trace.rows;
    CertificateReport report;
    Tally risk_mono("risk_nonincreasing");
    for (std::size_t j = 1; j < rows.size(); ++j)
        risk_mono.add(j + 1, rows[j - 1].risk - rows[j].risk, certificate_tolerance(rows[j - 1].risk));

    if (trace.algo == Algorithm::AdaptiveStep) {
        Tally nonneg("step_nonnegative");
        Tally mono("step_nonincreasing");
        Tally decrease_check("step_decrease");
        for (std::size_t j = 0; j < rows.size(); ++j) nonneg.add(j + 1, rows[j].step, 0.0);
        for (std::size_t j = 1; j < rows.size(); ++j) {
            mono.add(j + 1, rows[j - 1].step - rows[j].step, 0.0);
            const double decrease = rows[j - 1].risk - rows[j].risk;
            decrease_check.add(j + 1, decrease - L * rows[j].step * rows[j].step, certificate_tolerance(rows[j - 1].risk));
        }
        report.checks = {risk_mono.check, nonneg.check, mono.check, decrease_check.check};
    } else {
        const double nu = trace.nu != 0.0 ? trace.nu : (rows.size() > 1 ? rows[1].step : 0.0);
        Tally range("nu_range");
        const double nu_max = 1.0 / (2.0 * L);
        range.add(1, std::min(nu, nu_max - nu), 0.0);
        if (!(nu > 0.0 && nu < nu_max)) {
            range.check.pass = false;
            range.check.row = 1;
        }
        Tally constant("step_constant");
        Tally decrease_check("fixed_step_decrease");
        for (std::size_t j = 1; j < rows.size(); ++j) {
            constant.add(j + 1, rows[j].step == nu ? 0.0 : -std::abs(rows[j].step - nu), 0.0);
            if (rows[j].step != nu && constant.check.pass) {
                constant.check.pass = false;
                constant.check.row = j + 1;
            }
            const double decrease = rows[j - 1].risk - rows[j].risk;
            const double bound = 0.5 * nu * (1.0 - 2.0 * nu * L) * rows[j].f_norm * rows[j].f_norm;
            decrease_check.add(j + 1, decrease - bound, certificate_tolerance(rows[j - 1].risk));
        }
        report.checks = {risk_mono.check, range.check, constant.check, decrease_check.check};
    }
    return report;
}

std::vector<double> PartitionSolution::at_samples(std::span<const std::size_t> cell_of_sample) const {
    std::vector<double> out(cell_of_sample.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = values.at(cell_of_sample[i]);
    return out;
}

namespace {

struct CellObjective {
    const Loss& loss;
    const Measure& m;
    std::span<const std::size_t> samples;

    double value(double a) const {
        double acc = 0.0;
        for (auto i : samples) acc += m.weight(i) * loss.sample_psi(m, i, a);
        return acc;
    }
    double slope(double a) const {
        double acc = 0.0;
        for (auto i : samples) acc += m.weight(i) * loss.sample_xi(m, i, a);
        return acc;
    }
};

}  // namespace

double minimize_cell(const Loss& loss, const Measure& m, std::span<const std::size_t> samples) {
    if (samples.empty()) return 0.0;
    const CellObjective obj{loss, m, samples};
    double weight = 0.0;
    double xi0_sq = 0.0;
    for (auto i : samples) {
        weight += m.weight(i);
        xi0_sq += m.weight(i) * m.y_kernel(i, [&](double y) {
            const double v = loss.xi(0.0, y);
            return v * v;
        });
    }
    if (!(weight > 0.0)) return 0.0;

    // Bracket [-R, R] with s(-R) <= 0 <= s(R).
    const double alpha = loss.alpha();
    double R = 1.0;
    if (alpha > 0.0) R = 1.5 * iterate_norm_bound(alpha, std::sqrt(xi0_sq / weight), obj.value(0.0) / weight) + 1e-9;
    // Past the domain cap the slope of exponential-type losses underflows to a
    // spurious zero, so growth stops there.
    const auto cap = loss.domain_cap();
    while (!(obj.slope(-R) <= 0.0 && obj.slope(R) >= 0.0)) {
        if (cap && R >= *cap)
            throw UnboundedError("cell objective has no minimizer within the domain cap |a| <= " + format_double(*cap) +
                                 " (loss " + loss.spec() + ")");
        R *= 2.0;
        if (R > 1e8) throw UnboundedError("cell objective has no minimizer within |a| <= 1e8 (loss " + loss.spec() + ")");
    }

    double lo = -R;
    double hi = R;
    // Golden-section until the bracket is small, then bisection on the slope sign.
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo;
    double b = hi;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = obj.value(c);
    double fd = obj.value(d);
    while (b - a > 1e-6 * (1.0 + std::abs(a) + std::abs(b))) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = obj.value(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = obj.value(d);
        }
    }
    if (obj.slope(a) <= 0.0) lo = a;
    if (obj.slope(b) >= 0.0) hi = b;

    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (hi - lo <= 1e-12 * std::max(1.0, std::abs(mid)) || mid == lo || mid == hi) break;
        const double s = obj.slope(mid);
        if (s == 0.0) return mid;
        if (s < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

PartitionSolution exact_partition_minimizer(const Loss& loss, const Measure& m,
                                            std::span<const std::size_t> cell_of_sample, std::size_t cell_count) {
    if (cell_of_sample.size() != m.size())
        throw DimensionError("cell assignment has " + std::to_string(cell_of_sample.size()) + " entries for " +
                             std::to_string(m.size()) + " samples");
    std::vector<std::vector<std::size_t>> members(cell_count);
    for (std::size_t i = 0; i < cell_of_sample.size(); ++i) {
        if (cell_of_sample[i] >= cell_count)
            throw DimensionError("sample " + std::to_string(i) + " assigned to cell " +
                                 std::to_string(cell_of_sample[i]) + " of " + std::to_string(cell_count));
        members[cell_of_sample[i]].push_back(i);
    }
    PartitionSolution sol;
    sol.values.assign(cell_count, 0.0);
    sol.cell_weight.assign(cell_count, 0.0);
    for (std::size_t j = 0; j < cell_count; ++j) {
        for (auto i : members[j]) sol.cell_weight[j] += m.weight(i);
        sol.values[j] = minimize_cell(loss, m, members[j]);
    }
    sol.risk = risk(loss, m, sol.at_samples(cell_of_sample));
    return sol;
}

StepSummary sum_square_steps(std::span<const double> steps) {
    StepSummary s;
    for (double w : steps) s.sum_squares += w * w;
    s.count = steps.size();
    s.last_step = steps.empty() ? 0.0 : steps.back();
    return s;
}

StepSummary sum_square_steps(const BoostTrace& trace) {
    std::vector<double> steps;
    for (std::size_t j = 1; j < trace.rows.size(); ++j) steps.push_back(trace.rows[j].step);
    auto s = sum_square_steps(steps);
    if (steps.empty() && !trace.rows.empty()) s.last_step = trace.rows[0].step;
    return s;
}

}  // namespace cvxboost
