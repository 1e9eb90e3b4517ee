// One line per acceptance criterion; exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cvxboost/diagnostics.hpp"
#include "cvxboost/engine.hpp"
#include "cvxboost/format.hpp"
#include "cvxboost/lab.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace cvxboost;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
    void fail(const std::string& why) {
        if (pass) detail = why;
        pass = false;
    }
};

const std::vector<const char*> kLosses = {"squared", "logit:gamma=0.1", "sigmoid:beta=0.3,gamma=0.5"};
const std::vector<const char*> kClasses = {"stump", "depth:3"};

struct ConfigRuns {
    std::string label;
    Loss loss;
    std::shared_ptr<const Dataset> data;
    RunResult a1;
    RunResult a2;
    double seconds1 = 0.0;
    double seconds2 = 0.0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs shared by criteria 1, 2, 3 and 6. The engine aborts on any certificate
// violation, so a run that returns already satisfied every per-step inequality;
// the criteria re-check the recorded columns independently.
const std::vector<ConfigRuns>& grid_runs() {
    static const std::vector<ConfigRuns> runs = [] {
        std::vector<ConfigRuns> out;
        for (const char* ls : kLosses)
            for (const char* cls : kClasses) {
                const Loss loss = parse_loss(ls);
                const auto data = testing::lattice_data(200, 2, 8, 2024, loss.classification());
                const auto m = Measure::empirical(data);
                RunConfig rc;
                rc.max_iters = 2000;
                auto t0 = std::chrono::steady_clock::now();
                auto r1 = run_algorithm1(loss, m, WeakClassConfig::parse(cls, TreeFlavor::SignLeaf), rc);
                const double s1 = seconds_since(t0);
                rc.max_iters = 5000;
                rc.nu = 0.4 / (2.0 * loss.lipschitz());
                t0 = std::chrono::steady_clock::now();
                auto r2 = run_algorithm2(loss, m, WeakClassConfig::parse(cls, TreeFlavor::FreeLeaf), rc);
                const double s2 = seconds_since(t0);
                out.push_back({std::string(ls) + "/" + cls, loss, data, std::move(r1), std::move(r2), s1, s2});
            }
        return out;
    }();
    return runs;
}

Verdict criterion1() {
    Verdict v;
    double worst = INFINITY, slowest = 0.0;
    for (const auto& c : grid_runs()) {
        const auto& rows = c.a1.trace.rows;
        const double L = c.loss.lipschitz();
        for (std::size_t t = 1; t < rows.size(); ++t) {
            const double slack =
                rows[t - 1].risk - rows[t].risk - L * rows[t].step * rows[t].step + certificate_tolerance(rows[t - 1].risk);
            worst = std::min(worst, slack);
            if (slack < 0.0) v.fail(c.label + " violates the decrease bound at t=" + std::to_string(t));
        }
        if (!verify_trace(c.a1.trace, c.loss).all_pass()) v.fail(c.label + " fails verify_trace");
        if (c.seconds1 >= 60.0) v.fail(c.label + " took " + format_double(c.seconds1) + " s");
        slowest = std::max(slowest, c.seconds1);
    }
    if (v.pass)
        v.detail = std::to_string(grid_runs().size()) + " configs, worst slack " + format_double(worst) + ", slowest " +
                   format_double(slowest) + " s";
    return v;
}

Verdict criterion2() {
    Verdict v;
    double worst = INFINITY, largest_final = 0.0;
    for (const auto& c : grid_runs()) {
        const auto& tr = c.a2.trace;
        const auto& rows = tr.rows;
        const double L = c.loss.lipschitz();
        const double nu = tr.nu;
        if (!(nu > 0.0 && nu < 1.0 / (2.0 * L))) v.fail(c.label + " nu out of range");
        for (std::size_t t = 1; t < rows.size(); ++t) {
            const double bound = 0.5 * nu * (1.0 - 2.0 * nu * L) * rows[t].f_norm * rows[t].f_norm;
            const double slack = rows[t - 1].risk - rows[t].risk - bound + certificate_tolerance(rows[t - 1].risk);
            worst = std::min(worst, slack);
            if (slack < 0.0) v.fail(c.label + " violates the fixed-step decrease bound at t=" + std::to_string(t));
        }
        if (!verify_trace(tr, c.loss).all_pass()) v.fail(c.label + " fails verify_trace");
        // eventually below 1e-3: some suffix of the learner norms stays under it,
        // or the run stopped because the next learner was (numerically) zero
        const bool floor_stop = tr.stop_reason == "norm_floor" || tr.stop_reason == "stationary";
        const bool tail = rows.size() > 1 && rows.back().f_norm < 1e-3;
        if (!floor_stop && !tail)
            v.fail(c.label + " final ||f|| = " + format_double(rows.back().f_norm) + " after " +
                   std::to_string(rows.size() - 1) + " iterations");
        largest_final = std::max(largest_final, rows.size() > 1 ? rows.back().f_norm : 0.0);
        if (c.seconds2 >= 60.0) v.fail(c.label + " took " + format_double(c.seconds2) + " s");
    }
    if (v.pass)
        v.detail = "worst slack " + format_double(worst) + ", largest final ||f|| " + format_double(largest_final);
    return v;
}

Verdict criterion3() {
    Verdict v;
    double worst_ratio = 0.0, worst_tail = 0.0;
    for (const auto& c : grid_runs()) {
        const auto& rows = c.a1.trace.rows;
        for (std::size_t t = 1; t < rows.size(); ++t)
            if (rows[t].step > rows[t - 1].step) v.fail(c.label + " step increases at t=" + std::to_string(t));
        const double ratio = rows.back().step / rows.front().step;
        worst_ratio = std::max(worst_ratio, ratio);
        if (!(ratio < 1e-3)) v.fail(c.label + " w_T/w_0 = " + format_double(ratio));
        const std::size_t T = rows.size() - 1;
        std::vector<double> steps;
        for (std::size_t t = 1; t <= T; ++t) steps.push_back(rows[t].step);
        const double total = sum_square_steps(c.a1.trace).sum_squares;
        const double head = sum_square_steps(std::span<const double>(steps).first(T - T / 4)).sum_squares;
        const double tail = total > 0.0 ? (total - head) / total : 0.0;
        worst_tail = std::max(worst_tail, tail);
        if (!(tail < 0.01)) v.fail(c.label + " last-quarter share " + format_double(tail));
    }
    if (v.pass)
        v.detail = "max w_T/w_0 " + format_double(worst_ratio) + ", max last-quarter share " + format_double(worst_tail);
    return v;
}

Verdict criterion4() {
    Verdict v;
    double worst_risk = 0.0, worst_norm = 0.0;
    std::size_t runs = 0;
    const auto grid = enumerate_grid_class(1, 3);
    for (const char* ls : {"squared", "squared:gamma=0.5", "logit:gamma=0.1", "sigmoid:beta=0.3,gamma=0.5",
                           "piecewise_exp:gamma=0.1"}) {
        const Loss loss = parse_loss(ls);
        std::mt19937_64 rng(77);
        const auto gen = GeneratorSpec::parse(loss.classification() ? "logistic" : "sine:sigma=0.3");
        const auto data = std::make_shared<const Dataset>(gen.draw(1, 500, rng));
        const auto m = Measure::empirical(data);
        const auto cells = grid.cells_of(*data);
        const auto exact = exact_partition_minimizer(loss, m, cells, grid.cell_count());
        const auto fbar = exact.at_samples(cells);

        if (loss.kind() == LossKind::Squared) {
            std::vector<double> sum(grid.cell_count(), 0.0), cnt(grid.cell_count(), 0.0);
            for (std::size_t i = 0; i < data->size(); ++i) {
                sum[cells[i]] += data->y(i);
                cnt[cells[i]] += 1.0;
            }
            for (std::size_t j = 0; j < grid.cell_count(); ++j) {
                const double want = cnt[j] > 0 ? sum[j] / cnt[j] / (1.0 + loss.gamma()) : 0.0;
                if (std::abs(exact.values[j] - want) > 1e-9 * (1.0 + std::abs(want)))
                    v.fail(std::string(ls) + " cell " + std::to_string(j) + " differs from mean/(1+gamma)");
            }
        }

        for (int algo : {1, 2}) {
            RunConfig rc;
            rc.max_iters = 20000;
            rc.nu = 0.4 / (2.0 * loss.lipschitz());
            const auto res = algo == 1 ? run_algorithm1(loss, m, WeakClassConfig::parse("grid:3", TreeFlavor::SignLeaf), rc)
                                       : run_algorithm2(loss, m, WeakClassConfig::parse("grid:3", TreeFlavor::FreeLeaf), rc);
            std::vector<double> diff(fbar.size());
            for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = res.fitted[i] - fbar[i];
            const double dr = std::abs(res.trace.rows.back().risk - exact.risk);
            const double dn = norm_mu_x(m, diff);
            worst_risk = std::max(worst_risk, dr);
            worst_norm = std::max(worst_norm, dn);
            ++runs;
            if (dr > 1e-6 || dn > 1e-3)
                v.fail(std::string(ls) + " algo " + std::to_string(algo) + ": risk gap " + format_double(dr) +
                       ", distance " + format_double(dn));
        }
    }
    if (v.pass)
        v.detail = std::to_string(runs) + " runs, max risk gap " + format_double(worst_risk) + ", max distance " +
                   format_double(worst_norm);
    return v;
}

Verdict criterion5() {
    Verdict v;
    std::mt19937_64 rng(16);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::vector<double> x, y;
    for (int i = 0; i < 16; ++i) {
        x.push_back((i + 0.5) / 16.0);
        y.push_back(std::sin(6.283185307179586 * x.back()) + noise(rng));
    }
    const auto data = testing::make_data(x, y);
    const auto m = Measure::empirical(data);
    double worst = 0.0;
    for (int algo : {1, 2}) {
        RunConfig rc;
        rc.max_iters = 50000;
        rc.nu = 0.4 / (2.0 * 2.0);
        const auto res = algo == 1 ? run_algorithm1(Loss::squared(), m, WeakClassConfig::parse("stump", TreeFlavor::SignLeaf), rc)
                                   : run_algorithm2(Loss::squared(), m, WeakClassConfig::parse("stump", TreeFlavor::FreeLeaf), rc);
        double err = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(res.fitted[i] - y[i]));
        worst = std::max(worst, err);
        if (err > 1e-3) v.fail("algo " + std::to_string(algo) + " max |F_T - Y| = " + format_double(err));
    }
    if (v.pass) v.detail = "max |F_T(X_i) - Y_i| = " + format_double(worst) + " over both algorithms";
    return v;
}

Verdict criterion6() {
    Verdict v;
    std::size_t iterates = 0;
    double worst = INFINITY;
    for (const auto& c : grid_runs()) {
        if (!(c.loss.alpha() > 0.0)) continue;
        for (const auto* res : {&c.a1, &c.a2}) {
            const auto data_m = Measure::empirical(c.data);
            const double xi0 = xi_zero_norm(c.loss, data_m);
            // recompute ||F_t|| from the model prefix and compare with the bound
            std::vector<double> f(data_m.size(), 0.0);
            const auto& model = res->model;
            for (std::size_t i = 0; i < f.size(); ++i) f[i] = model.f0()(data_m.data().x(i));
            const auto& rows = res->trace.rows;
            for (std::size_t t = 0; t < rows.size(); ++t) {
                if (t > 0) {
                    const auto& term = model.terms()[t - 1];
                    for (std::size_t i = 0; i < f.size(); ++i) f[i] += term.weight * term.tree(data_m.data().x(i));
                }
                const double bound = iterate_norm_bound(c.loss.alpha(), xi0, rows[t].risk);
                const double slack = bound + 1e-9 - norm_mu_x(data_m, f);
                worst = std::min(worst, slack);
                ++iterates;
                if (slack < 0.0) v.fail(c.label + " iterate " + std::to_string(t) + " exceeds the norm bound");
            }
        }
    }
    if (iterates == 0) v.fail("no strongly convex configuration");
    if (v.pass) v.detail = std::to_string(iterates) + " iterates, smallest slack " + format_double(worst);
    return v;
}

Verdict criterion7() {
    Verdict v;
    SamplingPlan plan;
    plan.pairs = 10000;
    plan.fd_step = 1e-4;
    const auto cls = Measure::empirical(testing::make_data({0.0, 0.0}, {-1.0, 1.0}, 1, Task::Classification));
    const auto reg = Measure::empirical(testing::make_data({0.0, 0.0, 0.0, 0.0}, {-2.0, -0.5, 0.7, 1.5}));
    std::size_t reports = 0;
    for (const Loss& loss : {Loss::squared(), Loss::squared(0.3), Loss::logit_penalized(0.1),
                             Loss::exponential_penalized(0.1, 5.0), Loss::sigmoid_penalized(0.3, 0.5),
                             Loss::piecewise_exp_penalized(0.1)}) {
        const auto rep = check_assumptions(loss, loss.classification() ? cls : reg, plan);
        ++reports;
        for (const auto& c : rep.checks)
            if (!c.pass) v.fail(loss.spec() + " fails " + c.name + " (" + format_double(c.worst_margin) + ")");
        for (const char* need : {"gradient_check", "A2", "A3'"})
            if (!rep.find(need)) v.fail(loss.spec() + " has no " + need + " check");
    }
    // non-smooth absolute loss: A3 holds for the conditional subgradient once Y is smoothed
    {
        const auto sm = Measure::smoothed_y(testing::make_data({0.0, 0.0, 0.0}, {-1.0, 0.2, 0.9}), 0.25);
        const auto rep = check_assumptions(parse_loss("absolute:gamma=0.2,h=0.25").bound_to(sm), sm, plan);
        ++reports;
        if (!rep.all_pass()) v.fail("smoothed absolute loss fails its contract");
    }
    for (auto [beta, gamma] : {std::pair{1.0, 0.5}, std::pair{0.5, 0.25}, std::pair{2.0, 1.0}}) {
        const auto rep = check_assumptions(Loss::sigmoid_penalized(beta, gamma), cls, plan);
        ++reports;
        if (rep.find("A2")->pass)
            v.fail("sigmoid beta=" + format_double(beta) + " gamma=" + format_double(gamma) + " passes A2");
    }
    if (v.pass) v.detail = std::to_string(reports) + " reports over " + std::to_string(plan.pairs) + " sampled triples each";
    return v;
}

Verdict criterion8() {
    Verdict v;
    std::mt19937_64 rng(88);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    const auto cfg = WeakClassConfig::parse("tree:2", TreeFlavor::SignLeaf);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 3 + rep % 10;
        const std::size_t d = 1 + rep % 2;
        std::vector<double> x(n * d);
        for (auto& e : x) e = rep % 3 == 0 ? std::floor(u(rng) * 4.0) / 4.0 : u(rng);
        const auto data = testing::make_data(x, std::vector<double>(n, 0.0), d);
        const auto m = Measure::empirical(data);
        std::vector<double> r(n);
        for (auto& e : r) e = g(rng);
        const double got = select_direction_F(cfg, m, r).objective;
        const double want = testing::exhaustive_sign_stump_max(m, r);
        if (got != want)
            v.fail("rep " + std::to_string(rep) + ": " + format_double(got) + " vs " + format_double(want));
    }
    if (v.pass) v.detail = "50 residual vectors, n in [3, 12], exact equality";
    return v;
}

Verdict criterion9() {
    Verdict v;
    ConsistencyConfig c;
    c.generator = GeneratorSpec::parse("sine:sigma=0.3");
    c.n_schedule = {200, 2000, 20000};
    c.k_rule = KRule::parse("logfrac:3");
    c.replications = 10;
    c.seed = 1;
    const auto sched = check_schedule(c);
    if (!sched.squared_triple_pass()) v.fail("configured k_n rule fails the schedule triple");
    auto bad = c;
    bad.k_rule = KRule::parse("const:3");
    if (check_schedule(bad).find("k_n -> inf")->pass) v.fail("constant k_n passes k_n -> inf");
    bad.k_rule = KRule::parse("linear");
    if (check_schedule(bad).find("2^(d k_n) / sqrt(n) -> 0")->pass) v.fail("k_n = n passes 2^(d k_n)/sqrt(n) -> 0");

    const auto t0 = std::chrono::steady_clock::now();
    const auto curve = run_consistency(c);
    const double secs = seconds_since(t0);
    std::ostringstream gaps;
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        gaps << (i ? ", " : "") << format_double(curve.points[i].gap);
        if (i > 0 && !(curve.points[i].gap < curve.points[i - 1].gap)) v.fail("gap not strictly decreasing");
    }
    if (!(curve.points.back().gap < 0.5 * curve.points.front().gap)) v.fail("final gap not below half the initial gap");
    if (secs >= 600.0) v.fail("runtime " + format_double(secs) + " s");
    if (v.pass) v.detail = "gaps " + gaps.str() + ", " + format_double(std::round(secs)) + " s";
    else v.detail += " (gaps " + gaps.str() + ")";
    return v;
}

Verdict criterion10() {
    Verdict v;
    const auto data = testing::lattice_data(200, 2, 8, 10, true);
    const auto m = Measure::empirical(data);
    const Loss loss = parse_loss("logit:gamma=0.1");
    for (int algo : {1, 2}) {
        std::string trace[2], model[2];
        for (int k = 0; k < 2; ++k) {
            RunConfig rc;
            rc.max_iters = 1000;
            rc.nu = 0.4 / (2.0 * loss.lipschitz());
            const auto res = algo == 1 ? run_algorithm1(loss, m, WeakClassConfig::parse("depth:3", TreeFlavor::SignLeaf), rc)
                                       : run_algorithm2(loss, m, WeakClassConfig::parse("depth:3", TreeFlavor::FreeLeaf), rc);
            trace[k] = res.trace.to_csv();
            model[k] = res.model.to_json().dump(2) + "\n";
        }
        if (trace[0] != trace[1]) v.fail("algo " + std::to_string(algo) + " trace differs");
        if (model[0] != model[1]) v.fail("algo " + std::to_string(algo) + " model differs");
    }
    ConsistencyConfig c;
    c.generator = GeneratorSpec::parse("logistic");
    c.loss = "logit";
    c.n_schedule = {64, 512, 4096};
    c.k_rule = KRule::parse("logfrac:3");
    c.replications = 3;
    c.test_size = 5000;
    c.seed = 9;
    c.threads = 1;
    const auto a = run_consistency(c).to_csv();
    c.threads = 4;
    if (run_consistency(c).to_csv() != a) v.fail("gap curve depends on the thread count");
    if (v.pass) v.detail = "trace.csv and model.json identical for both algorithms; gap curve identical across thread counts";
    return v;
}

}  // namespace

int main() {
    const std::vector<std::function<Verdict()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                            criterion5, criterion6, criterion7, criterion8,
                                                            criterion9, criterion10};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i]();
        } catch (const std::exception& e) {
            v.fail(std::string("exception: ") + e.what());
        }
        std::printf("criterion %zu: %s  %s\n", i + 1, v.pass ? "PASS" : "FAIL", v.detail.c_str());
        std::fflush(stdout);
        failed += v.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
