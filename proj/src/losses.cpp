#include "cvxboost/losses.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "cvxboost/format.hpp"

namespace cvxboost {

namespace {

constexpr double kLn2 = std::numbers::ln2;
constexpr double kInf = std::numeric_limits<double>::infinity();
// max of tanh(u) sech^2(u), attained at tanh(u) = 1/sqrt(3)
const double kTanhSech2Max = 2.0 / (3.0 * std::sqrt(3.0));

double softplus(double z) { return std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0); }

// 1 / (1 + e^u)
double logistic_neg(double u) {
    if (u >= 0.0) {
        const double e = std::exp(-u);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(u));
}

double sgn0(double u) { return u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0); }

}  // namespace

Loss::Loss(LossKind kind, double gamma) : kind_(kind), gamma_(gamma) {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be >= 0");
}

void Loss::refresh_constants() {
    const double g2 = 2.0 * gamma_;
    switch (kind_) {
        case LossKind::Squared:
            alpha_ = 2.0 + g2;
            lipschitz_ = 2.0 + g2;
            smooth_ = true;
            break;
        case LossKind::AbsolutePenalized:
            alpha_ = g2;
            lipschitz_ = std::isfinite(density_bound_) ? 2.0 * (density_bound_ + gamma_) : kInf;
            smooth_ = false;
            break;
        case LossKind::LogitPenalized:
            alpha_ = g2;
            lipschitz_ = 1.0 / (4.0 * kLn2) + g2;
            smooth_ = true;
            break;
        case LossKind::ExponentialPenalized:
            alpha_ = g2;
            lipschitz_ = std::exp(cap_) + g2;
            smooth_ = true;
            break;
        case LossKind::HingePenalized:
            alpha_ = g2;
            lipschitz_ = user_lipschitz_;
            smooth_ = false;
            break;
        case LossKind::SigmoidPenalized:
            alpha_ = std::max(0.0, 2.0 * (gamma_ - beta_ * beta_));
            lipschitz_ = g2 + 2.0 * kTanhSech2Max * beta_ * beta_;
            smooth_ = true;
            break;
        case LossKind::PiecewiseExpPenalized:
            alpha_ = g2;
            lipschitz_ = 1.0 + g2;
            smooth_ = true;
            break;
    }
}

Loss Loss::squared(double gamma) {
    Loss l(LossKind::Squared, gamma);
    l.refresh_constants();
    return l;
}

Loss Loss::absolute_penalized(double gamma, double density_bound) {
    Loss l(LossKind::AbsolutePenalized, gamma);
    if (!(density_bound > 0.0)) throw ConfigError("density bound must be positive");
    l.density_bound_ = density_bound;
    l.refresh_constants();
    return l;
}

Loss Loss::logit_penalized(double gamma) {
    Loss l(LossKind::LogitPenalized, gamma);
    l.refresh_constants();
    return l;
}

Loss Loss::exponential_penalized(double gamma, double cap) {
    Loss l(LossKind::ExponentialPenalized, gamma);
    if (!(cap > 0.0) || !std::isfinite(cap)) throw ConfigError("exponential cap must be positive");
    l.cap_ = cap;
    l.refresh_constants();
    return l;
}

Loss Loss::hinge_penalized(double gamma, double lipschitz) {
    Loss l(LossKind::HingePenalized, gamma);
    if (!(lipschitz > 0.0)) throw ConfigError("hinge Lipschitz constant must be positive");
    l.user_lipschitz_ = lipschitz;
    l.refresh_constants();
    return l;
}

Loss Loss::sigmoid_penalized(double beta, double gamma) {
    Loss l(LossKind::SigmoidPenalized, gamma);
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("sigmoid beta must be positive");
    l.beta_ = beta;
    l.refresh_constants();
    return l;
}

Loss Loss::piecewise_exp_penalized(double gamma) {
    Loss l(LossKind::PiecewiseExpPenalized, gamma);
    l.refresh_constants();
    return l;
}

std::string Loss::name() const {
    switch (kind_) {
        case LossKind::Squared: return "squared";
        case LossKind::AbsolutePenalized: return "absolute";
        case LossKind::LogitPenalized: return "logit";
        case LossKind::ExponentialPenalized: return "exponential";
        case LossKind::HingePenalized: return "hinge";
        case LossKind::SigmoidPenalized: return "sigmoid";
        case LossKind::PiecewiseExpPenalized: return "piecewise_exp";
    }
    return "unknown";
}

std::string Loss::spec() const {
    std::string out = name() + ":gamma=" + format_double(gamma_);
    switch (kind_) {
        case LossKind::AbsolutePenalized:
            if (smoothing_) out += ",h=" + format_double(*smoothing_);
            else if (std::isfinite(density_bound_)) out += ",B=" + format_double(density_bound_);
            break;
        case LossKind::ExponentialPenalized: out += ",cap=" + format_double(cap_); break;
        case LossKind::HingePenalized:
            if (std::isfinite(user_lipschitz_)) out += ",L=" + format_double(user_lipschitz_);
            break;
        case LossKind::SigmoidPenalized: out += ",beta=" + format_double(beta_); break;
        default: break;
    }
    return out;
}

double Loss::phi(double x, double y) const {
    const double u = y * x;
    switch (kind_) {
        case LossKind::Squared: return (y - x) * (y - x);
        case LossKind::AbsolutePenalized: return std::abs(y - x);
        case LossKind::LogitPenalized: return softplus(-u) / kLn2;
        case LossKind::ExponentialPenalized: return std::exp(-u);
        case LossKind::HingePenalized: return std::max(1.0 - u, 0.0);
        case LossKind::SigmoidPenalized: return 1.0 - std::tanh(beta_ * u);
        case LossKind::PiecewiseExpPenalized: return u <= 0.0 ? 1.0 - u : std::exp(-u);
    }
    return 0.0;
}

double Loss::psi(double x, double y) const { return phi(x, y) + gamma_ * x * x; }

double Loss::xi(double x, double y) const {
    const double u = y * x;
    const double pen = 2.0 * gamma_ * x;
    switch (kind_) {
        case LossKind::Squared: return 2.0 * (x - y) + pen;
        case LossKind::AbsolutePenalized: return sgn0(x - y) + pen;
        case LossKind::LogitPenalized: return -y * logistic_neg(u) / kLn2 + pen;
        case LossKind::ExponentialPenalized: return -y * std::exp(-u) + pen;
        case LossKind::HingePenalized: return (u < 1.0 ? -y : 0.0) + pen;
        case LossKind::SigmoidPenalized: {
            const double t = std::tanh(beta_ * u);
            return -beta_ * y * (1.0 - t * t) + pen;
        }
        case LossKind::PiecewiseExpPenalized: return y * (u <= 0.0 ? -1.0 : -std::exp(-u)) + pen;
    }
    return 0.0;
}

bool Loss::requires_density_bound() const noexcept {
    return kind_ == LossKind::AbsolutePenalized || kind_ == LossKind::HingePenalized;
}

bool Loss::classification() const noexcept {
    return kind_ != LossKind::Squared && kind_ != LossKind::AbsolutePenalized;
}

double Loss::zeta(double p, double y_sup) const {
    const double pen = 2.0 * gamma_ * p;
    switch (kind_) {
        case LossKind::Squared: return 2.0 * p + 2.0 * y_sup + pen;
        case LossKind::AbsolutePenalized: return 1.0 + pen;
        case LossKind::LogitPenalized: return 1.0 / kLn2 + pen;
        case LossKind::ExponentialPenalized: return std::exp(p) + pen;
        case LossKind::HingePenalized: return 1.0 + pen;
        case LossKind::SigmoidPenalized: return beta_ + pen;
        case LossKind::PiecewiseExpPenalized: return 1.0 + pen;
    }
    return kInf;
}

double Loss::phi_bar(double y_sup) const {
    switch (kind_) {
        case LossKind::Squared: return y_sup * y_sup;
        case LossKind::AbsolutePenalized: return y_sup;
        default: return 1.0;
    }
}

double Loss::xi0_sup(double y_sup) const {
    switch (kind_) {
        case LossKind::Squared: return 2.0 * y_sup;
        case LossKind::LogitPenalized: return 1.0 / (2.0 * kLn2);
        case LossKind::SigmoidPenalized: return beta_;
        default: return 1.0;
    }
}

std::optional<double> Loss::domain_cap() const {
    if (kind_ == LossKind::ExponentialPenalized) return cap_;
    return std::nullopt;
}

Loss Loss::with_gamma(double gamma) const {
    Loss l = *this;
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be >= 0");
    l.gamma_ = gamma;
    l.refresh_constants();
    return l;
}

Loss Loss::bound_to(const Measure& m) const {
    Loss l = *this;
    if (kind_ == LossKind::AbsolutePenalized && m.kind() == MeasureKind::SmoothedY) {
        l.density_bound_ = m.density_bound();
        l.refresh_constants();
    }
    return l;
}

double Loss::sample_psi(const Measure& m, std::size_t i, double a) const {
    if (kind_ == LossKind::AbsolutePenalized && m.kind() == MeasureKind::SmoothedY) {
        // E|Y_i + hU - a| for U uniform on [-1, 1]
        const double h = m.halfwidth();
        const double c = a - m.data().y(i);
        const double ac = std::abs(c);
        const double abs_part = ac >= h ? ac : (h * h + c * c) / (2.0 * h);
        return abs_part + gamma_ * a * a;
    }
    return m.y_kernel(i, [&](double y) { return psi(a, y); });
}

double Loss::sample_xi(const Measure& m, std::size_t i, double a) const {
    if (kind_ == LossKind::AbsolutePenalized && m.kind() == MeasureKind::SmoothedY) {
        const double h = m.halfwidth();
        const double c = a - m.data().y(i);
        return std::clamp(c / h, -1.0, 1.0) + 2.0 * gamma_ * a;
    }
    return m.y_kernel(i, [&](double y) { return xi(a, y); });
}

namespace {

double parse_param(const std::string& key, const std::string& value) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(v))
        throw ConfigError("bad value for loss parameter " + key + ": '" + value + "'");
    return v;
}

}  // namespace

Loss parse_loss(const std::string& text) {
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    std::vector<std::pair<std::string, double>> params;
    if (colon != std::string::npos) {
        std::string rest = text.substr(colon + 1);
        std::size_t start = 0;
        while (start <= rest.size()) {
            const auto comma = rest.find(',', start);
            const std::string item = rest.substr(start, comma == std::string::npos ? comma : comma - start);
            if (!item.empty()) {
                const auto eq = item.find('=');
                if (eq == std::string::npos) throw ConfigError("loss parameter without value: '" + item + "'");
                const auto key = item.substr(0, eq);
                params.emplace_back(key, parse_param(key, item.substr(eq + 1)));
            }
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }

    double gamma = 0.0;
    double beta = 1.0;
    double cap = 30.0;
    double bound = kInf;
    double lip = kInf;
    std::optional<double> h;
    std::set<std::string> allowed{"gamma"};
    if (name == "absolute") allowed = {"gamma", "B", "h"};
    else if (name == "exponential") allowed = {"gamma", "cap"};
    else if (name == "sigmoid") allowed = {"gamma", "beta"};
    else if (name == "hinge") allowed = {"gamma", "L"};
    for (const auto& [key, value] : params) {
        if (!allowed.count(key)) throw ConfigError("loss '" + name + "' has no parameter '" + key + "'");
        if (key == "gamma") gamma = value;
        else if (key == "beta") beta = value;
        else if (key == "cap") cap = value;
        else if (key == "B") bound = value;
        else if (key == "L") lip = value;
        else if (key == "h") {
            if (!(value > 0.0)) throw ConfigError("smoothing halfwidth h must be positive");
            h = value;
            bound = 1.0 / (2.0 * value);
        }
    }

    Loss loss = [&] {
        if (name == "squared") return Loss::squared(gamma);
        if (name == "absolute") return Loss::absolute_penalized(gamma, bound);
        if (name == "logit") return Loss::logit_penalized(gamma);
        if (name == "exponential") return Loss::exponential_penalized(gamma, cap);
        if (name == "hinge") return Loss::hinge_penalized(gamma, lip);
        if (name == "sigmoid") return Loss::sigmoid_penalized(beta, gamma);
        if (name == "piecewise_exp" || name == "piecewise") return Loss::piecewise_exp_penalized(gamma);
        throw ConfigError("unknown loss '" + name + "'");
    }();
    loss.smoothing_ = h;
    return loss;
}

double risk(const Loss& loss, const Measure& m, std::span<const double> values) {
    if (values.size() != m.size()) throw DimensionError("value vector length does not match the measure");
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = loss.sample_psi(m, i, values[i]);
        if (!std::isfinite(v)) throw NumericalError("loss overflow in " + loss.name(), i);
        total += m.weight(i) * v;
    }
    if (!std::isfinite(total)) throw NumericalError("risk overflow in " + loss.name(), 0);
    return total;
}

std::vector<double> subgrad_values(const Loss& loss, const Measure& m, std::span<const double> values) {
    if (values.size() != m.size()) throw DimensionError("value vector length does not match the measure");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = loss.sample_xi(m, i, values[i]);
        if (!std::isfinite(out[i])) throw NumericalError("non-finite subgradient in " + loss.name(), i);
    }
    return out;
}

bool AssumptionReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

const AssumptionCheck* AssumptionReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

nlohmann::json AssumptionReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json j{{"name", c.name}, {"pass", c.pass}, {"note", c.note}};
        if (std::isfinite(c.worst_margin)) j["worst_margin"] = c.worst_margin;
        else j["worst_margin"] = nullptr;
        arr.push_back(std::move(j));
    }
    return {{"schema", "cvxboost.assumptions/1"}, {"loss", loss}, {"pass", all_pass()}, {"checks", arr}};
}

namespace {

struct PairSampler {
    std::vector<double> xs1, xs2, ys;
};

std::vector<double> distinct_labels(const Measure& m, std::size_t max_labels) {
    std::set<double> seen(m.data().targets().begin(), m.data().targets().end());
    std::vector<double> out(seen.begin(), seen.end());
    if (out.size() > max_labels) {
        std::vector<double> thinned;
        const double step = static_cast<double>(out.size() - 1) / static_cast<double>(max_labels - 1);
        for (std::size_t k = 0; k < max_labels; ++k)
            thinned.push_back(out[static_cast<std::size_t>(std::llround(k * step))]);
        out = std::move(thinned);
    }
    return out;
}

PairSampler sample_pairs(std::span<const double> ys, const SamplingPlan& plan, double lo, double hi) {
    PairSampler s;
    std::mt19937_64 rng(plan.seed);
    std::uniform_real_distribution<double> ux(lo, hi);
    std::uniform_int_distribution<std::size_t> uy(0, ys.size() - 1);
    for (std::size_t k = 0; k < plan.pairs; ++k) {
        s.xs1.push_back(ux(rng));
        s.xs2.push_back(ux(rng));
        s.ys.push_back(ys[uy(rng)]);
    }
    return s;
}

std::pair<double, double> x_range(const Loss& loss, const SamplingPlan& plan) {
    double lo = plan.x_lo;
    double hi = plan.x_hi;
    if (const auto cap = loss.domain_cap()) {
        lo = std::max(lo, -*cap);
        hi = std::min(hi, *cap);
    }
    return {lo, hi};
}

double tol(double scale) { return 1e-9 * (1.0 + std::abs(scale)); }

}  // namespace

double sampled_alpha(const Loss& loss, std::span<const double> ys, const SamplingPlan& plan) {
    if (ys.empty()) throw ConfigError("sampled_alpha needs at least one label");
    const auto [lo, hi] = x_range(loss, plan);
    const auto s = sample_pairs(ys, plan, lo, hi);
    double best = kInf;
    for (std::size_t k = 0; k < s.xs1.size(); ++k) {
        const double d = s.xs1[k] - s.xs2[k];
        if (std::abs(d) < 1e-3) continue;
        const double y = s.ys[k];
        const double gap = loss.psi(s.xs1[k], y) - loss.psi(s.xs2[k], y) - loss.xi(s.xs2[k], y) * d;
        best = std::min(best, 2.0 * gap / (d * d));
    }
    return best;
}

AssumptionReport check_assumptions(const Loss& loss, const Measure& m, const SamplingPlan& plan) {
    if (plan.pairs == 0) throw ConfigError("sampling plan must have at least one pair");
    AssumptionReport report;
    report.loss = loss.spec();
    const auto ys = distinct_labels(m, std::max<std::size_t>(plan.max_labels, 2));
    const auto [lo, hi] = x_range(loss, plan);
    const auto s = sample_pairs(ys, plan, lo, hi);
    const double alpha = loss.alpha();
    const double lip = loss.lipschitz();

    {
        AssumptionCheck c{"A1", true, kInf, ""};
        double c0 = 0.0;
        double xi2 = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
            c0 += m.weight(i) * loss.sample_psi(m, i, 0.0);
            const double g = loss.sample_xi(m, i, 0.0);
            xi2 += m.weight(i) * g * g;
        }
        c.pass = std::isfinite(c0) && std::isfinite(xi2);
        c.worst_margin = 0.0;
        c.note = "E psi(0,Y) = " + format_double(c0) + ", E xi(0,Y)^2 = " + format_double(xi2);
        report.checks.push_back(c);
    }

    AssumptionCheck convex{"convexity", true, kInf, "midpoint convexity"};
    AssumptionCheck eq1{"subgradient_inequality", true, kInf, "psi(x1) >= psi(x2) + xi(x2)(x1-x2)"};
    AssumptionCheck bracket{"subgradient_bracket", true, kInf, "left quotient <= xi <= right quotient"};
    AssumptionCheck a2{"A2", alpha > 0.0, kInf, ""};
    AssumptionCheck a3{loss.smooth() ? "A3'" : "A3", std::isfinite(lip), kInf, ""};
    AssumptionCheck fd{"gradient_check", true, kInf, "central difference at h = " + format_double(plan.fd_step)};

    if (alpha <= 0.0) a2.note = "no positive strong convexity constant";
    else a2.note = "alpha = " + format_double(alpha);
    if (!std::isfinite(lip)) a3.note = loss.requires_density_bound() ? "requires density bound" : "Lipschitz constant unavailable";
    else a3.note = "L = " + format_double(lip);

    const double h = plan.fd_step;
    for (std::size_t k = 0; k < s.xs1.size(); ++k) {
        const double x1 = s.xs1[k];
        const double x2 = s.xs2[k];
        const double y = s.ys[k];
        const double p1 = loss.psi(x1, y);
        const double p2 = loss.psi(x2, y);
        const double g2 = loss.xi(x2, y);
        const double d = x1 - x2;

        const double pm = loss.psi(0.5 * (x1 + x2), y);
        const double cm = 0.5 * (p1 + p2) - pm + tol(pm);
        convex.worst_margin = std::min(convex.worst_margin, cm);

        const double lin = p1 - p2 - g2 * d;
        eq1.worst_margin = std::min(eq1.worst_margin, lin + tol(p1));

        if (alpha > 0.0)
            a2.worst_margin = std::min(a2.worst_margin, lin - 0.5 * alpha * d * d + tol(p1));

        const double right = (loss.psi(x2 + h, y) - p2) / h;
        const double left = (p2 - loss.psi(x2 - h, y)) / h;
        const double slack = 1e-7 * (1.0 + std::abs(p2));
        bracket.worst_margin = std::min(bracket.worst_margin, std::min(right - g2, g2 - left) + slack);

        if (loss.smooth()) {
            const double central = (loss.psi(x2 + h, y) - loss.psi(x2 - h, y)) / (2.0 * h);
            fd.worst_margin = std::min(fd.worst_margin, 1e-6 - std::abs(central - g2));
            if (std::isfinite(lip)) {
                const double g1 = loss.xi(x1, y);
                a3.worst_margin = std::min(a3.worst_margin, lip * std::abs(d) - std::abs(g1 - g2) + tol(g1));
            }
        }
    }

    if (!loss.smooth() && std::isfinite(lip)) {
        if (m.kind() == MeasureKind::Empirical && loss.requires_density_bound()) {
            // The conditional law of Y under an empirical measure has atoms.
            a3.pass = false;
            a3.note = "requires density bound: empirical measure has no density in y";
        } else {
            std::mt19937_64 rng(plan.seed + 1);
            std::uniform_real_distribution<double> ux(lo, hi);
            std::uniform_int_distribution<std::size_t> ui(0, m.size() - 1);
            for (std::size_t k = 0; k < plan.pairs; ++k) {
                const std::size_t i = ui(rng);
                const double x1 = ux(rng);
                const double x2 = ux(rng);
                const double g1 = loss.sample_xi(m, i, x1);
                const double g2 = loss.sample_xi(m, i, x2);
                a3.worst_margin = std::min(a3.worst_margin, lip * std::abs(x1 - x2) - std::abs(g1 - g2) + tol(g1));
            }
            a3.note += " (conditional subgradient under smoothed measure)";
        }
    }

    convex.pass = convex.worst_margin >= 0.0;
    eq1.pass = eq1.worst_margin >= 0.0;
    bracket.pass = bracket.worst_margin >= 0.0;
    if (a2.pass) a2.pass = a2.worst_margin >= 0.0;
    if (a3.pass) a3.pass = a3.worst_margin >= 0.0;
    fd.pass = fd.worst_margin >= 0.0;

    report.checks.push_back(convex);
    report.checks.push_back(eq1);
    report.checks.push_back(bracket);
    report.checks.push_back(a2);
    report.checks.push_back(a3);
    if (loss.smooth()) report.checks.push_back(fd);
    return report;
}

}  // namespace cvxboost
