#include "cvxboost/engine.hpp"

#include <cmath>
#include <sstream>

#include "cvxboost/diagnostics.hpp"
#include "cvxboost/format.hpp"

namespace cvxboost {

AdditiveModel::AdditiveModel(std::size_t dim, Algorithm algo, Tree f0)
    : dim_(dim), algo_(algo), f0_(std::move(f0)) {}

double AdditiveModel::predict(std::span<const double> x) const {
    if (x.size() != dim_)
        throw DimensionError("model expects " + std::to_string(dim_) + " features, got " +
                             std::to_string(x.size()));
    double v = f0_.is_zero() ? 0.0 : f0_(x);
    for (const auto& term : terms_) v += term.weight * term.tree(x);
    return v;
}

int AdditiveModel::classify(std::span<const double> x) const { return predict(x) > 0.0 ? 1 : -1; }

std::vector<double> AdditiveModel::predict(const Dataset& data) const {
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = predict(data.x(i));
    return out;
}

void AdditiveModel::add_term(double weight, Tree tree) { terms_.push_back({weight, std::move(tree)}); }

nlohmann::json AdditiveModel::to_json() const {
    nlohmann::json j;
    j["schema"] = "cvxboost.model/1";
    j["algo"] = static_cast<int>(algo_);
    j["d"] = dim_;
    j["loss"] = loss_spec;
    j["f0"] = f0_.to_json();
    auto terms = nlohmann::json::array();
    for (const auto& t : terms_) terms.push_back({{"w", t.weight}, {"tree", t.tree.to_json()}});
    j["terms"] = std::move(terms);
    return j;
}

AdditiveModel AdditiveModel::from_json(const nlohmann::json& j) {
    try {
        if (j.at("schema").get<std::string>() != "cvxboost.model/1")
            throw SchemaError("unsupported model schema " + j.at("schema").dump());
        const int algo = j.at("algo").get<int>();
        if (algo != 1 && algo != 2) throw SchemaError("model algo must be 1 or 2");
        AdditiveModel model(j.at("d").get<std::size_t>(), static_cast<Algorithm>(algo),
                            Tree::from_json(j.at("f0")));
        if (j.contains("loss")) model.loss_spec = j.at("loss").get<std::string>();
        for (const auto& t : j.at("terms")) model.add_term(t.at("w").get<double>(), Tree::from_json(t.at("tree")));
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed model: ") + e.what());
    }
}

namespace {

std::string margin_column(Algorithm algo) {
    return algo == Algorithm::AdaptiveStep ? "margin31" : "margin32";
}

double parse_number(const std::string& text, std::size_t line) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw ParseError("bad number '" + text + "'", line);
        return v;
    } catch (const std::invalid_argument&) {
        throw ParseError("bad number '" + text + "'", line);
    } catch (const std::out_of_range&) {
        if (text.find("inf") != std::string::npos) return std::stod(text);
        throw ParseError("number out of range '" + text + "'", line);
    }
}

}  // namespace

std::string BoostTrace::to_csv() const {
    std::ostringstream out;
    out << "# schema=cvxboost.trace/1\n";
    out << "# algo=" << static_cast<int>(algo) << "\n";
    out << "# loss=" << loss << "\n";
    out << "# L=" << format_double(lipschitz) << "\n";
    out << "# alpha=" << format_double(alpha) << "\n";
    if (algo == Algorithm::AdaptiveStep)
        out << "# w0=" << format_double(w0) << "\n";
    else
        out << "# nu=" << format_double(nu) << "\n";
    out << "# max_iters=" << max_iters << "\n";
    out << "# step_floor=" << format_double(step_floor) << "\n";
    out << "# norm_floor=" << format_double(norm_floor) << "\n";
    out << "# class=" << learner << "\n";
    out << "# search=" << search << "\n";
    out << "# stop=" << stop_reason << "\n";
    for (const auto& w : warnings) out << "# warning=" << w << "\n";
    out << "t,risk,step,f_norm,inner_prod," << margin_column(algo) << "\n";
    for (const auto& r : rows) {
        out << r.t << ',' << format_double(r.risk) << ',' << format_double(r.step) << ','
            << format_double(r.f_norm) << ',' << format_double(r.inner_prod) << ','
            << format_double(r.margin) << '\n';
    }
    return out.str();
}

BoostTrace BoostTrace::from_csv(const std::string& text) {
    BoostTrace trace;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    bool algo_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto body = line.substr(line.find_first_not_of("# "));
            const auto eq = body.find('=');
            if (eq == std::string::npos) continue;
            const auto key = body.substr(0, eq);
            const auto value = body.substr(eq + 1);
            if (key == "schema" && value != "cvxboost.trace/1")
                throw SchemaError("unsupported trace schema " + value);
            if (key == "algo") {
                if (value != "1" && value != "2") throw SchemaError("trace algo must be 1 or 2");
                trace.algo = static_cast<Algorithm>(value[0] - '0');
                algo_seen = true;
            } else if (key == "loss") {
                trace.loss = value;
            } else if (key == "L") {
                trace.lipschitz = parse_number(value, lineno);
            } else if (key == "alpha") {
                trace.alpha = parse_number(value, lineno);
            } else if (key == "w0") {
                trace.w0 = parse_number(value, lineno);
            } else if (key == "nu") {
                trace.nu = parse_number(value, lineno);
            } else if (key == "max_iters") {
                trace.max_iters = static_cast<std::size_t>(parse_number(value, lineno));
            } else if (key == "step_floor") {
                trace.step_floor = parse_number(value, lineno);
            } else if (key == "norm_floor") {
                trace.norm_floor = parse_number(value, lineno);
            } else if (key == "class") {
                trace.learner = value;
            } else if (key == "search") {
                trace.search = value;
            } else if (key == "stop") {
                trace.stop_reason = value;
            } else if (key == "warning") {
                trace.warnings.push_back(value);
            }
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("t,risk,step,f_norm,inner_prod,margin3", 0) != 0)
                throw SchemaError("trace column header expected, got '" + line + "'");
            if (!algo_seen) trace.algo = line.back() == '2' ? Algorithm::FixedStep : Algorithm::AdaptiveStep;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6)
            throw SchemaError("trace line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                              " fields, expected 6");
        TraceRow row;
        row.t = static_cast<std::size_t>(parse_number(cells[0], lineno));
        row.risk = parse_number(cells[1], lineno);
        row.step = parse_number(cells[2], lineno);
        row.f_norm = parse_number(cells[3], lineno);
        row.inner_prod = parse_number(cells[4], lineno);
        row.margin = parse_number(cells[5], lineno);
        trace.rows.push_back(row);
    }
    if (!header_seen) throw SchemaError("trace has no column header");
    if (trace.algo == Algorithm::FixedStep && trace.nu == 0.0 && trace.rows.size() > 1)
        trace.nu = trace.rows[1].step;
    if (trace.algo == Algorithm::AdaptiveStep && trace.w0 == 0.0 && !trace.rows.empty())
        trace.w0 = trace.rows[0].step;
    return trace;
}

namespace {

struct Setup {
    Loss loss;
    double L;
    double xi0_norm;
    std::optional<double> cap;
};

Setup prepare(const Loss& given, const Measure& m) {
    Loss loss = m.kind() == MeasureKind::SmoothedY ? given.bound_to(m) : given;
    const double L = loss.lipschitz();
    if (!std::isfinite(L) || L <= 0.0) {
        std::string msg = "loss " + loss.spec() + " has no finite Lipschitz constant L";
        if (loss.requires_density_bound() && !loss.smooth())
            msg += "; supply a Y-smoothing halfwidth (h=) or a density bound (B=)";
        throw AssumptionError(msg);
    }
    if (loss.classification()) {
        for (std::size_t i = 0; i < m.size(); ++i)
            if (std::abs(m.data().y(i)) > 1.0)
                throw AssumptionError("loss " + loss.name() + " needs labels in [-1, 1]; sample " +
                                      std::to_string(i) + " has y = " + format_double(m.data().y(i)));
    }
    return {loss, L, xi_zero_norm(loss, m), loss.domain_cap()};
}

std::vector<double> initial_values(const Measure& m, const std::optional<Tree>& f0) {
    std::vector<double> values(m.size(), 0.0);
    if (f0 && !f0->is_zero())
        for (std::size_t i = 0; i < m.size(); ++i) values[i] = (*f0)(m.data().x(i));
    return values;
}

void check_domain(const Setup& s, std::span<const double> values, std::size_t t) {
    if (!s.cap) return;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (std::abs(values[i]) > *s.cap)
            throw AssumptionError("iterate left [-" + format_double(*s.cap) + ", " + format_double(*s.cap) +
                                  "] at iteration " + std::to_string(t) + " (sample " + std::to_string(i) +
                                  "); the Lipschitz constant no longer holds");
}

[[noreturn]] void violation(const std::string& what, std::size_t t, double lhs, double rhs, double tol) {
    throw CertificateError(what + " violated at iteration " + std::to_string(t) + ": lhs=" + format_double(lhs) +
                           " rhs=" + format_double(rhs) + " tol=" + format_double(tol));
}

// Shared per-iteration checks: monotone risk, the one-step descent inequality
// and the strong-convexity norm bound.
void fill_common(TraceRow& row, const Setup& s, const Measure& m, double risk_before, double step,
                 std::span<const double> values, bool enforce) {
    const double tol = certificate_tolerance(risk_before);
    const double decrease = risk_before - row.risk;
    const double descent_rhs = -step * step * s.L * row.f_norm * row.f_norm - step * row.inner_prod;
    row.descent_margin = decrease - descent_rhs;
    row.iterate_norm = norm_mu_x(m, values);
    row.norm_bound = iterate_norm_bound(s.loss.alpha(), s.xi0_norm, row.risk);
    if (!enforce) return;
    if (decrease < -tol) violation("risk monotonicity", row.t, risk_before, row.risk, tol);
    if (row.descent_margin < -tol) violation("descent inequality", row.t, decrease, descent_rhs, tol);
    if (row.iterate_norm > row.norm_bound + certificate_tolerance(row.risk))
        violation("iterate norm bound", row.t, row.iterate_norm, row.norm_bound, certificate_tolerance(row.risk));
}

BoostTrace make_trace(Algorithm algo, const Setup& s, const WeakClassConfig& cfg, const WeakLearner& learner,
                      const RunConfig& rc) {
    BoostTrace trace;
    trace.algo = algo;
    trace.loss = s.loss.spec();
    trace.lipschitz = s.L;
    trace.alpha = s.loss.alpha();
    trace.max_iters = rc.max_iters;
    trace.step_floor = rc.step_floor;
    trace.norm_floor = rc.norm_floor;
    trace.learner = cfg.describe();
    trace.search = learner.search();
    return trace;
}

TraceRow initial_row(const Setup& s, const Measure& m, double risk, double step, std::span<const double> values) {
    TraceRow row;
    row.t = 0;
    row.risk = risk;
    row.step = step;
    row.iterate_norm = norm_mu_x(m, values);
    row.norm_bound = iterate_norm_bound(s.loss.alpha(), s.xi0_norm, risk);
    return row;
}

}  // namespace

RunResult run_algorithm1(const Loss& given, const Measure& m, const WeakClassConfig& cfg_in, const RunConfig& rc) {
    if (!(rc.w0 > 0.0) || !std::isfinite(rc.w0)) throw ConfigError("w0 must be positive, got " + format_double(rc.w0));
    const Setup s = prepare(given, m);
    WeakClassConfig cfg = cfg_in;
    cfg.flavor = TreeFlavor::SignLeaf;
    const WeakLearner learner(cfg, m);

    std::vector<double> values = initial_values(m, rc.f0);
    check_domain(s, values, 0);
    double C = risk(s.loss, m, values);

    AdditiveModel model(m.data().dim(), Algorithm::AdaptiveStep, rc.f0.value_or(Tree::zero()));
    model.loss_spec = s.loss.spec();
    BoostTrace trace = make_trace(Algorithm::AdaptiveStep, s, cfg, learner, rc);
    trace.w0 = rc.w0;
    trace.rows.push_back(initial_row(s, m, C, rc.w0, values));

    double w = rc.w0;
    trace.stop_reason = "max_iters";
    std::vector<double> next(values.size());
    for (std::size_t t = 0; t < rc.max_iters; ++t) {
        const auto xi = subgrad_values(s.loss, m, values);
        std::vector<double> residual(xi.size());
        for (std::size_t i = 0; i < xi.size(); ++i) residual[i] = -xi[i];
        Selection sel = learner.select_direction(residual);
        if (sel.tree.is_zero()) {
            trace.stop_reason = "stationary";
            break;
        }
        const auto f = sel.tree.evaluate(m.data());
        const double inner = inner_mu_x(m, xi, f);
        const double w_next = std::min(w, -inner / (2.0 * s.L));
        if (!(w_next >= rc.step_floor)) {
            trace.stop_reason = "step_floor";
            break;
        }
        for (std::size_t i = 0; i < values.size(); ++i) next[i] = values[i] + w_next * f[i];
        check_domain(s, next, t + 1);
        const double C_next = risk(s.loss, m, next);

        TraceRow row;
        row.t = t + 1;
        row.risk = C_next;
        row.step = w_next;
        row.f_norm = norm_mu_x(m, f);
        row.inner_prod = inner;
        const double bound = s.L * w_next * w_next;
        row.margin = (C - C_next) - bound;
        fill_common(row, s, m, C, w_next, next, rc.enforce_certificates);
        if (rc.enforce_certificates && row.margin < -certificate_tolerance(C))
            violation("decrease bound L w^2", row.t, C - C_next, bound, certificate_tolerance(C));

        trace.rows.push_back(row);
        model.add_term(w_next, std::move(sel.tree));
        values.swap(next);
        C = C_next;
        w = w_next;
    }
    return {std::move(model), std::move(trace), std::move(values)};
}

RunResult run_algorithm2(const Loss& given, const Measure& m, const WeakClassConfig& cfg_in, const RunConfig& rc) {
    const Setup s = prepare(given, m);
    const double nu_max = 1.0 / (2.0 * s.L);
    if (!(rc.nu > 0.0 && rc.nu < nu_max))
        throw ConfigError("fixed step requires nu < " + format_double(nu_max) + " (1/(2L) with L = " +
                          format_double(s.L) + ") and nu > 0, got " + format_double(rc.nu));
    WeakClassConfig cfg = cfg_in;
    cfg.flavor = TreeFlavor::FreeLeaf;
    const WeakLearner learner(cfg, m);

    std::vector<double> values = initial_values(m, rc.f0);
    check_domain(s, values, 0);
    double C = risk(s.loss, m, values);

    AdditiveModel model(m.data().dim(), Algorithm::FixedStep, rc.f0.value_or(Tree::zero()));
    model.loss_spec = s.loss.spec();
    BoostTrace trace = make_trace(Algorithm::FixedStep, s, cfg, learner, rc);
    trace.nu = rc.nu;
    if (!(s.loss.alpha() > 0.0)) trace.warnings.push_back("alpha_zero: strong convexity hypothesis unmet");
    trace.rows.push_back(initial_row(s, m, C, rc.nu, values));

    const double nu = rc.nu;
    trace.stop_reason = "max_iters";
    std::vector<double> next(values.size());
    for (std::size_t t = 0; t < rc.max_iters; ++t) {
        const auto xi = subgrad_values(s.loss, m, values);
        std::vector<double> residual(xi.size());
        for (std::size_t i = 0; i < xi.size(); ++i) residual[i] = -xi[i];
        Selection sel = learner.fit_least_squares(residual);
        if (sel.tree.is_zero()) {
            trace.stop_reason = "stationary";
            break;
        }
        const auto f = sel.tree.evaluate(m.data());
        const double f_norm = norm_mu_x(m, f);
        if (!(f_norm >= rc.norm_floor)) {
            trace.stop_reason = "norm_floor";
            break;
        }
        const double inner = inner_mu_x(m, xi, f);
        for (std::size_t i = 0; i < values.size(); ++i) next[i] = values[i] + nu * f[i];
        check_domain(s, next, t + 1);
        const double C_next = risk(s.loss, m, next);

        TraceRow row;
        row.t = t + 1;
        row.risk = C_next;
        row.step = nu;
        row.f_norm = f_norm;
        row.inner_prod = inner;
        const double bound = 0.5 * nu * (1.0 - 2.0 * nu * s.L) * f_norm * f_norm;
        row.margin = (C - C_next) - bound;
        fill_common(row, s, m, C, nu, next, rc.enforce_certificates);
        if (rc.enforce_certificates && row.margin < -certificate_tolerance(C))
            violation("decrease bound (nu/2)(1-2 nu L)||f||^2", row.t, C - C_next, bound,
                      certificate_tolerance(C));

        trace.rows.push_back(row);
        model.add_term(nu, std::move(sel.tree));
        values.swap(next);
        C = C_next;
    }
    return {std::move(model), std::move(trace), std::move(values)};
}

}  // namespace cvxboost
