#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvxboost/dataset.hpp"

namespace cvxboost {

enum class LossKind {
    Squared,
    AbsolutePenalized,
    LogitPenalized,
    ExponentialPenalized,
    HingePenalized,
    SigmoidPenalized,
    PiecewiseExpPenalized,
};

/// A convex loss psi(x, y) = phi(x, y) + gamma x^2 together with a subgradient
/// xi(x, y) and the constants the convergence results consume: strong convexity
/// alpha, Lipschitz constant L of the conditional subgradient, the local modulus
/// zeta(p) and phi_bar = sup_y phi(0, y).
///
/// Classification losses assume labels in {-1, +1}; their constants are only
/// valid there. The sampled checks in check_assumptions are the runtime source
/// of truth for every constant reported here.
class Loss {
public:
    static Loss squared(double gamma = 0.0);
    /// |y - x| + gamma x^2. The Lipschitz constant 2(B + gamma) needs a bound B
    /// on the conditional density of Y; leave it unset for an empirical measure.
    static Loss absolute_penalized(double gamma,
                                   double density_bound = std::numeric_limits<double>::infinity());
    static Loss logit_penalized(double gamma);
    /// e^{-yx} + gamma x^2 with L = e^M + 2 gamma valid on |x| <= M.
    static Loss exponential_penalized(double gamma, double cap = 30.0);
    static Loss hinge_penalized(double gamma,
                                double lipschitz = std::numeric_limits<double>::infinity());
    static Loss sigmoid_penalized(double beta, double gamma);
    static Loss piecewise_exp_penalized(double gamma);

    LossKind kind() const noexcept { return kind_; }
    std::string name() const;
    /// Canonical `name:param=value,...` form accepted by parse_loss.
    std::string spec() const;

    double psi(double x, double y) const;
    double xi(double x, double y) const;
    /// The unpenalized part phi(x, y) = psi(x, y) - gamma x^2.
    double phi(double x, double y) const;

    double alpha() const noexcept { return alpha_; }
    /// Infinite when the constant is not available (non-smooth loss without a
    /// density bound).
    double lipschitz() const noexcept { return lipschitz_; }
    double gamma() const noexcept { return gamma_; }
    double beta() const noexcept { return beta_; }
    double cap() const noexcept { return cap_; }
    double density_bound() const noexcept { return density_bound_; }
    bool smooth() const noexcept { return smooth_; }
    bool requires_density_bound() const noexcept;
    bool classification() const noexcept;

    /// Local Lipschitz modulus of psi(., y) on [-p, p] given |y| <= y_sup.
    double zeta(double p, double y_sup = 1.0) const;
    /// sup over |y| <= y_sup of phi(0, y).
    double phi_bar(double y_sup = 1.0) const;
    /// sup over |y| <= y_sup of |xi(0, y)|.
    double xi0_sup(double y_sup = 1.0) const;

    /// Iterates must stay in [-M, M] for the reported L to hold (exponential loss).
    std::optional<double> domain_cap() const;

    Loss with_gamma(double gamma) const;
    /// Copy whose density bound (and hence L) is taken from a smoothed measure.
    Loss bound_to(const Measure& m) const;

    /// Y-smoothing halfwidth requested through `h=` in a parsed spec.
    std::optional<double> smoothing() const noexcept { return smoothing_; }

    /// E[psi(a, Y) | X = X_i] and E[xi(a, Y) | X = X_i] under the measure.
    double sample_psi(const Measure& m, std::size_t i, double a) const;
    double sample_xi(const Measure& m, std::size_t i, double a) const;

private:
    friend Loss parse_loss(const std::string& text);
    Loss(LossKind kind, double gamma);
    void refresh_constants();

    LossKind kind_;
    double gamma_ = 0.0;
    double beta_ = 1.0;
    double cap_ = 30.0;
    double density_bound_ = std::numeric_limits<double>::infinity();
    double user_lipschitz_ = std::numeric_limits<double>::infinity();
    double alpha_ = 0.0;
    double lipschitz_ = std::numeric_limits<double>::infinity();
    bool smooth_ = true;
    std::optional<double> smoothing_;
};

/// Parses `name[:param=value,...]`. Names: squared, absolute, logit, exponential,
/// hinge, sigmoid, piecewise_exp. Params: gamma, beta, cap, B, h (Y-smoothing
/// halfwidth, sets B = 1/(2h)), L (hinge only).
Loss parse_loss(const std::string& text);

/// C(F) = E psi(F(X), Y) given the values of F at the sample points.
double risk(const Loss& loss, const Measure& m, std::span<const double> values);

template <class F>
double risk_of(const Loss& loss, const Measure& m, F&& f) {
    std::vector<double> values(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) values[i] = f(m.data().x(i));
    return risk(loss, m, values);
}

/// [E(xi(F(X_i), Y) | X_i)]_i aligned with the sample order.
std::vector<double> subgrad_values(const Loss& loss, const Measure& m,
                                   std::span<const double> values);

struct SamplingPlan {
    double x_lo = -5.0;
    double x_hi = 5.0;
    std::size_t pairs = 2000;
    std::uint64_t seed = 7;
    double fd_step = 1e-4;
    std::size_t max_labels = 64;
};

struct AssumptionCheck {
    std::string name;
    bool pass = false;
    /// Smallest slack observed; negative means violated.
    double worst_margin = 0.0;
    std::string note;
};

struct AssumptionReport {
    std::string loss;
    std::vector<AssumptionCheck> checks;

    bool all_pass() const;
    const AssumptionCheck* find(const std::string& name) const;
    nlohmann::json to_json() const;
};

/// Sampled checks of convexity, the subgradient inequality and bracket, strong
/// convexity with the cataloged alpha, the Lipschitz condition with the cataloged
/// L, and (smooth losses) a central finite-difference gradient check.
AssumptionReport check_assumptions(const Loss& loss, const Measure& m, const SamplingPlan& plan = {});

/// Largest alpha such that psi(x1) >= psi(x2) + xi(x2)(x1 - x2) + alpha/2 (x1 - x2)^2
/// on the sampled pairs with labels `ys`.
double sampled_alpha(const Loss& loss, std::span<const double> ys, const SamplingPlan& plan = {});

}  // namespace cvxboost
