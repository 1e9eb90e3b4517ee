#include "cvxboost/lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

#include "cvxboost/engine.hpp"
#include "cvxboost/format.hpp"
#include "cvxboost/learners.hpp"

namespace cvxboost {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::pair<std::string, std::string> split_spec(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) return {text, ""};
    return {text.substr(0, colon), text.substr(colon + 1)};
}

double parse_real(const std::string& text, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos == text.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("bad value '" + text + "' for " + what);
}

// key=value pairs separated by commas
std::vector<std::pair<std::string, std::string>> parse_params(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + item + "'");
        out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    return out;
}

double logistic_eta(double x1) { return 1.0 / (1.0 + std::exp(-2.0 * std::sin(kTwoPi * x1))); }

}  // namespace

GeneratorSpec GeneratorSpec::parse(const std::string& text) {
    const auto [name, rest] = split_spec(text);
    GeneratorSpec g;
    if (name == "sine")
        g.kind = GeneratorKind::Sine;
    else if (name == "sine_noiseless")
        g.kind = GeneratorKind::NoiselessSine;
    else if (name == "logit_const")
        g.kind = GeneratorKind::LogitConst;
    else if (name == "logistic")
        g.kind = GeneratorKind::Logistic;
    else
        throw UnsupportedGenerator("unknown generator '" + name + "'");
    for (const auto& [key, value] : parse_params(rest)) {
        if (key == "sigma" && g.kind == GeneratorKind::Sine) {
            g.sigma = parse_real(value, "sigma");
            if (g.sigma < 0.0) throw ConfigError("sigma must be nonnegative");
        } else if (key == "eta" && g.kind == GeneratorKind::LogitConst) {
            g.eta = parse_real(value, "eta");
            if (!(g.eta > 0.0 && g.eta < 1.0)) throw ConfigError("eta must lie in (0, 1)");
        } else {
            throw ConfigError("unknown parameter '" + key + "' for generator " + name);
        }
    }
    if (g.kind == GeneratorKind::NoiselessSine) g.sigma = 0.0;
    return g;
}

std::string GeneratorSpec::describe() const {
    switch (kind) {
        case GeneratorKind::Sine: return "sine:sigma=" + format_double(sigma);
        case GeneratorKind::NoiselessSine: return "sine_noiseless";
        case GeneratorKind::LogitConst: return "logit_const:eta=" + format_double(eta);
        case GeneratorKind::Logistic: return "logistic";
    }
    return "";
}

Task GeneratorSpec::task() const {
    return kind == GeneratorKind::Sine || kind == GeneratorKind::NoiselessSine ? Task::Regression
                                                                                : Task::Classification;
}

bool GeneratorSpec::bounded() const { return kind != GeneratorKind::Sine || sigma == 0.0; }

double GeneratorSpec::conditional(std::span<const double> x) const {
    switch (kind) {
        case GeneratorKind::Sine:
        case GeneratorKind::NoiselessSine: return std::sin(kTwoPi * x[0]);
        case GeneratorKind::LogitConst: return eta;
        case GeneratorKind::Logistic: return logistic_eta(x[0]);
    }
    return 0.0;
}

Dataset GeneratorSpec::draw(std::size_t dim, std::size_t n, std::mt19937_64& rng) const {
    if (dim == 0) throw ConfigError("generator dimension must be positive");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> features(n * dim);
    std::vector<double> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dim; ++j) features[i * dim + j] = unif(rng);
        const std::span<const double> x(features.data() + i * dim, dim);
        const double c = conditional(x);
        switch (kind) {
            case GeneratorKind::Sine: targets[i] = c + sigma * normal(rng); break;
            case GeneratorKind::NoiselessSine: targets[i] = c; break;
            case GeneratorKind::LogitConst:
            case GeneratorKind::Logistic: targets[i] = unif(rng) < c ? 1.0 : -1.0; break;
        }
    }
    return Dataset(std::move(features), std::move(targets), dim, task());
}

double bayes_function(const GeneratorSpec& gen, const Loss& loss, std::span<const double> x) {
    const bool regression = gen.task() == Task::Regression;
    if (loss.kind() == LossKind::Squared && regression) return gen.conditional(x);
    if (loss.kind() == LossKind::LogitPenalized && !regression) {
        const double eta = gen.conditional(x);
        return std::log(eta / (1.0 - eta));
    }
    throw UnsupportedGenerator("no closed-form minimizer for generator " + gen.describe() + " with loss " +
                               loss.name());
}

double bayes_reference(const GeneratorSpec& gen, const Loss& loss_in) {
    const Loss loss = loss_in.with_gamma(0.0);
    const auto& rule = gauss_legendre16();
    constexpr int panels = 256;
    double total = 0.0;
    std::vector<double> x(1);
    for (int p = 0; p < panels; ++p) {
        const double a = static_cast<double>(p) / panels;
        const double half = 0.5 / panels;
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            x[0] = a + half * (1.0 + rule.nodes[q]);
            const double f = bayes_function(gen, loss, x);
            const double c = gen.conditional(x);
            double value = 0.0;
            if (gen.task() == Task::Regression)
                value = (c - f) * (c - f) + gen.sigma * gen.sigma;
            else
                value = c * loss.phi(f, 1.0) + (1.0 - c) * loss.phi(f, -1.0);
            total += rule.weights[q] * half * value;
        }
    }
    return total;
}

KRule KRule::parse(const std::string& text) {
    const auto [name, rest] = split_spec(text);
    KRule r;
    if (name == "loglog" && rest.empty()) {
        r.kind = Kind::LogLog;
    } else if (name == "logfrac") {
        r.kind = Kind::LogFrac;
        r.param = rest.empty() ? 1.0 : parse_real(rest, "logfrac divisor");
        if (!(r.param > 0.0)) throw ConfigError("logfrac divisor must be positive");
    } else if (name == "const") {
        r.kind = Kind::Const;
        r.param = parse_real(rest, "const k");
        if (r.param < 0.0 || r.param != std::floor(r.param)) throw ConfigError("const k must be a nonnegative integer");
    } else if (name == "linear" && rest.empty()) {
        r.kind = Kind::Linear;
    } else {
        throw ConfigError("unknown k_n rule '" + text + "'");
    }
    return r;
}

std::string KRule::describe() const {
    switch (kind) {
        case Kind::LogLog: return "loglog";
        case Kind::LogFrac: return "logfrac:" + format_double(param);
        case Kind::Const: return "const:" + format_double(param);
        case Kind::Linear: return "linear";
    }
    return "";
}

long long KRule::operator()(std::size_t n) const {
    const double dn = static_cast<double>(n);
    switch (kind) {
        case Kind::LogLog:
            if (n < 4) return 0;
            return static_cast<long long>(std::floor(std::log2(std::log2(dn))));
        case Kind::LogFrac:
            if (n < 2) return 0;
            return static_cast<long long>(std::floor(std::log2(dn) / param));
        case Kind::Const: return static_cast<long long>(param);
        case Kind::Linear: return static_cast<long long>(n);
    }
    return 0;
}

GammaRule GammaRule::parse(const std::string& text) {
    const auto [name, rest] = split_spec(text);
    GammaRule r;
    if (name == "auto" && rest.empty())
        r.kind = Kind::Auto;
    else if (name == "zero" && rest.empty())
        r.kind = Kind::Zero;
    else if (name == "inv_log" && rest.empty())
        r.kind = Kind::InvLog;
    else if (name == "const") {
        r.kind = Kind::Const;
        r.param = parse_real(rest, "const gamma");
        if (r.param < 0.0) throw ConfigError("gamma must be nonnegative");
    } else
        throw ConfigError("unknown gamma_n rule '" + text + "'");
    return r;
}

std::string GammaRule::describe() const {
    switch (kind) {
        case Kind::Auto: return "auto";
        case Kind::Zero: return "zero";
        case Kind::InvLog: return "inv_log";
        case Kind::Const: return "const:" + format_double(param);
    }
    return "";
}

double GammaRule::operator()(std::size_t n, const Loss& phi) const {
    const double inv_log = 1.0 / std::log(static_cast<double>(n) + std::numbers::e);
    switch (kind) {
        case Kind::Auto: return phi.with_gamma(0.0).alpha() > 0.0 ? 0.0 : inv_log;
        case Kind::Zero: return 0.0;
        case Kind::InvLog: return inv_log;
        case Kind::Const: return param;
    }
    return 0.0;
}

ConsistencyConfig ConsistencyConfig::from_json(const nlohmann::json& j) {
    ConsistencyConfig c;
    try {
        if (j.contains("schema") && j.at("schema").get<std::string>() != "cvxboost.lab/1")
            throw SchemaError("unsupported lab config schema " + j.at("schema").dump());
        static const std::vector<std::string> known = {"schema", "d", "generator", "loss", "n", "k_rule",
                                                       "gamma_rule", "replications", "seed", "test_size",
                                                       "max_iters", "w0", "threads", "force"};
        for (const auto& [key, _] : j.items())
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw ConfigError("unknown lab config key '" + key + "'");
        if (j.contains("d")) c.dim = j.at("d").get<std::size_t>();
        if (j.contains("generator")) c.generator = GeneratorSpec::parse(j.at("generator").get<std::string>());
        if (j.contains("loss")) c.loss = j.at("loss").get<std::string>();
        c.n_schedule = j.at("n").get<std::vector<std::size_t>>();
        if (j.contains("k_rule")) c.k_rule = KRule::parse(j.at("k_rule").get<std::string>());
        if (j.contains("gamma_rule")) c.gamma_rule = GammaRule::parse(j.at("gamma_rule").get<std::string>());
        if (j.contains("replications")) c.replications = j.at("replications").get<std::size_t>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("test_size")) c.test_size = j.at("test_size").get<std::size_t>();
        if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<std::size_t>();
        if (j.contains("w0")) c.w0 = j.at("w0").get<double>();
        if (j.contains("threads")) c.threads = j.at("threads").get<std::size_t>();
        if (j.contains("force")) c.force = j.at("force").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed lab config: ") + e.what());
    }
    return c;
}

nlohmann::json ConsistencyConfig::to_json() const {
    return {{"schema", "cvxboost.lab/1"},
            {"d", dim},
            {"generator", generator.describe()},
            {"loss", loss},
            {"n", n_schedule},
            {"k_rule", k_rule.describe()},
            {"gamma_rule", gamma_rule.describe()},
            {"replications", replications},
            {"seed", seed},
            {"test_size", test_size},
            {"max_iters", max_iters},
            {"w0", w0},
            {"threads", threads},
            {"force", force}};
}

bool ScheduleReport::all_pass() const {
    return !conditions.empty() &&
           std::all_of(conditions.begin(), conditions.end(), [](const auto& c) { return !c.evaluated || c.pass; });
}

bool ScheduleReport::squared_triple_pass() const {
    for (const char* name : {"k_n -> inf", "k_n 2^(d k_n) / n -> 0", "2^(d k_n) / sqrt(n) -> 0"}) {
        const auto* c = find(name);
        if (!c || !c->pass) return false;
    }
    return true;
}

const ScheduleCondition* ScheduleReport::find(const std::string& name) const {
    for (const auto& c : conditions)
        if (c.name == name) return &c;
    return nullptr;
}

nlohmann::json ScheduleReport::to_json() const {
    nlohmann::json j;
    j["schema"] = "cvxboost.schedule/1";
    j["n"] = n;
    j["k"] = k;
    j["gamma"] = gamma;
    j["pass"] = all_pass();
    auto arr = nlohmann::json::array();
    for (const auto& c : conditions) {
        auto vals = nlohmann::json::array();
        for (double v : c.values) {
            if (std::isfinite(v))
                vals.push_back(v);
            else
                vals.push_back(nullptr);
        }
        arr.push_back({{"name", c.name},
                       {"evaluated", c.evaluated},
                       {"pass", c.pass},
                       {"monotone", c.monotone},
                       {"values", vals},
                       {"note", c.note}});
    }
    j["conditions"] = std::move(arr);
    return j;
}

namespace {

// Tends to zero along the schedule: terminal <= every earlier value and < first.
ScheduleCondition to_zero(std::string name, std::vector<double> values) {
    ScheduleCondition c;
    c.name = std::move(name);
    c.values = std::move(values);
    const double last = c.values.back();
    c.pass = std::isfinite(last) && last < c.values.front();
    c.monotone = true;
    for (std::size_t i = 0; i + 1 < c.values.size(); ++i) {
        if (!(last <= c.values[i])) c.pass = false;
        if (!(c.values[i + 1] <= c.values[i])) c.monotone = false;
    }
    if (!c.pass) c.note = "violated";
    else if (!c.monotone) c.note = "not monotone along the schedule";
    return c;
}

}  // namespace

ScheduleReport check_schedule(const ConsistencyConfig& cfg) {
    ScheduleReport rep;
    rep.n = cfg.n_schedule;
    const Loss phi = parse_loss(cfg.loss).with_gamma(0.0);
    const double d = static_cast<double>(cfg.dim);
    for (auto n : cfg.n_schedule) {
        rep.k.push_back(cfg.k_rule(n));
        rep.gamma.push_back(cfg.gamma_rule(n, phi));
    }
    if (cfg.n_schedule.size() < 3) {
        ScheduleCondition c;
        c.name = "schedule";
        c.pass = false;
        c.note = "schedule needs at least 3 sample sizes";
        rep.conditions.push_back(c);
        return rep;
    }
    const std::size_t m = cfg.n_schedule.size();
    std::vector<double> inv_k(m), k2n(m), k2sqrt(m), logn(m), gam(m), zeta_seq(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double n = static_cast<double>(cfg.n_schedule[i]);
        const double k = static_cast<double>(rep.k[i]);
        const double cells = std::exp2(d * k);  // N = 2^{dk}, v_n = 1/N
        inv_k[i] = k > 0.0 ? 1.0 / k : std::numeric_limits<double>::infinity();
        k2n[i] = k * cells / n;
        k2sqrt[i] = cells / std::sqrt(n);
        logn[i] = d * k * std::numbers::ln2 * cells / n;
        gam[i] = rep.gamma[i];
    }
    rep.conditions.push_back(to_zero("k_n -> inf", inv_k));
    rep.conditions.back().values.assign(rep.k.begin(), rep.k.end());
    rep.conditions.push_back(to_zero("k_n 2^(d k_n) / n -> 0", k2n));
    rep.conditions.push_back(to_zero("2^(d k_n) / sqrt(n) -> 0", k2sqrt));
    rep.conditions.push_back(to_zero("log N / (n v_n) -> 0", logn));

    const bool penalized = std::any_of(gam.begin(), gam.end(), [](double g) { return g > 0.0; });
    if (penalized) rep.conditions.push_back(to_zero("gamma_n -> 0", gam));

    // Local-Lipschitz rate condition; zeta needs |Y| bounded.
    const double inf_g = 1.0;
    if (!cfg.generator.bounded()) {
        ScheduleCondition c;
        c.name = "zeta rate -> 0";
        c.evaluated = false;
        c.note = "not evaluated: Y is unbounded under " + cfg.generator.describe();
        rep.conditions.push_back(c);
    } else {
        const double y_sup = 1.0;
        const double phibar = phi.phi_bar(y_sup);
        for (std::size_t i = 0; i < m; ++i) {
            const double n = static_cast<double>(cfg.n_schedule[i]);
            const double v = std::exp2(-d * static_cast<double>(rep.k[i]));
            if (gam[i] > 0.0) {
                zeta_seq[i] = phi.zeta(std::sqrt(2.0 * phibar / (v * gam[i] * inf_g)), y_sup) /
                              std::sqrt(n * v * gam[i]);
            } else if (phi.alpha() > 0.0) {
                const double a = 2.0 / phi.alpha() * phi.xi0_sup(y_sup) + std::sqrt(2.0 * phibar / phi.alpha());
                zeta_seq[i] = phi.zeta(std::sqrt(a / (v * inf_g)), y_sup) / std::sqrt(n * v);
            } else {
                zeta_seq[i] = std::numeric_limits<double>::infinity();
            }
        }
        rep.conditions.push_back(to_zero("zeta rate -> 0", zeta_seq));
    }
    return rep;
}

std::uint64_t job_seed(std::uint64_t seed, std::uint64_t n, std::uint64_t rep) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ n) ^ rep);
}

std::string GapCurve::to_csv() const {
    std::ostringstream out;
    out << "# schema=cvxboost.gap/1\n";
    out << "# generator=" << generator << "\n";
    out << "# loss=" << loss << "\n";
    out << "n,mean_risk,se,bayes,gap\n";
    for (const auto& p : points)
        out << p.n << ',' << format_double(p.mean_risk) << ',' << format_double(p.se) << ','
            << format_double(p.bayes) << ',' << format_double(p.gap) << '\n';
    return out.str();
}

namespace {

struct JobResult {
    double risk = 0.0;
    std::size_t iterations = 0;
};

JobResult run_job(const ConsistencyConfig& cfg, const Loss& phi, std::size_t n, long long k, double gamma,
                  std::size_t rep, std::size_t test_size) {
    std::mt19937_64 rng(job_seed(cfg.seed, n, rep));
    auto train = std::make_shared<const Dataset>(cfg.generator.draw(cfg.dim, n, rng));
    const Measure m = Measure::empirical(train);
    WeakClassConfig wc = WeakClassConfig::parse("grid:" + std::to_string(k), TreeFlavor::SignLeaf);
    RunConfig rc;
    rc.max_iters = cfg.max_iters;
    rc.w0 = cfg.w0;
    const auto result = run_algorithm1(phi.with_gamma(gamma), m, wc, rc);

    // independent stream for the test sample
    std::mt19937_64 test_rng(job_seed(cfg.seed ^ 0x5bd1e995ULL, n, rep));
    const Dataset test = cfg.generator.draw(cfg.dim, test_size, test_rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) acc += phi.phi(result.model.predict(test.x(i)), test.y(i));
    return {acc / static_cast<double>(test.size()), result.trace.rows.size() - 1};
}

}  // namespace

GapCurve run_consistency(const ConsistencyConfig& cfg) {
    if (cfg.n_schedule.empty()) throw ConfigError("empty sample-size schedule");
    if (cfg.replications == 0) throw ConfigError("replications must be positive");
    const Loss phi = parse_loss(cfg.loss).with_gamma(0.0);
    if (phi.classification() != (cfg.generator.task() == Task::Classification))
        throw UnsupportedGenerator("generator " + cfg.generator.describe() + " does not match loss " + phi.name());
    const double bayes = bayes_reference(cfg.generator, phi);

    const auto schedule = check_schedule(cfg);
    if (!schedule.all_pass() && !cfg.force) {
        std::string failed;
        for (const auto& c : schedule.conditions)
            if (c.evaluated && !c.pass) failed += (failed.empty() ? "" : "; ") + c.name;
        throw ConfigError("schedule check failed (" + failed + "); rerun with force to override");
    }
    for (std::size_t i = 0; i < cfg.n_schedule.size(); ++i) {
        const long long k = schedule.k[i];
        if (k < 0 || static_cast<double>(cfg.dim) * static_cast<double>(k) > GridPartition::kMaxBits)
            throw CapacityError("grid with d*k = " + std::to_string(cfg.dim * static_cast<std::size_t>(k)) +
                                " exceeds " + std::to_string(GridPartition::kMaxBits) + " bits");
    }

    const std::size_t max_n = *std::max_element(cfg.n_schedule.begin(), cfg.n_schedule.end());
    const std::size_t test_size = cfg.test_size ? cfg.test_size : 10 * max_n;
    const std::size_t jobs = cfg.n_schedule.size() * cfg.replications;
    std::vector<JobResult> results(jobs);
    std::vector<std::exception_ptr> errors(jobs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs;) {
            const std::size_t ni = j / cfg.replications;
            const std::size_t rep = j % cfg.replications;
            try {
                results[j] = run_job(cfg, phi, cfg.n_schedule[ni], schedule.k[ni], schedule.gamma[ni], rep, test_size);
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, jobs);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    GapCurve curve;
    curve.generator = cfg.generator.describe();
    curve.loss = phi.name();
    for (std::size_t ni = 0; ni < cfg.n_schedule.size(); ++ni) {
        GapPoint p;
        p.n = cfg.n_schedule[ni];
        p.k = schedule.k[ni];
        p.gamma = schedule.gamma[ni];
        p.bayes = bayes;
        std::size_t iters = 0;
        for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
            const auto& r = results[ni * cfg.replications + rep];
            p.replicate_risks.push_back(r.risk);
            iters += r.iterations;
        }
        const double R = static_cast<double>(cfg.replications);
        double mean = 0.0;
        for (double v : p.replicate_risks) mean += v;
        mean /= R;
        double ss = 0.0;
        for (double v : p.replicate_risks) ss += (v - mean) * (v - mean);
        p.mean_risk = mean;
        p.se = cfg.replications > 1 ? std::sqrt(ss / (R - 1.0) / R) : 0.0;
        p.gap = mean - bayes;
        p.mean_iterations = iters / cfg.replications;
        curve.points.push_back(std::move(p));
    }
    return curve;
}

}  // namespace cvxboost
