#include <doctest.h>

#include <cmath>
#include <random>

#include "cvxboost/diagnostics.hpp"
#include "cvxboost/engine.hpp"
#include "cvxboost/lab.hpp"

using namespace cvxboost;

namespace {

ConsistencyConfig schedule(std::vector<std::size_t> n, const char* k, const char* loss = "squared") {
    ConsistencyConfig c;
    c.n_schedule = std::move(n);
    c.k_rule = KRule::parse(k);
    c.loss = loss;
    return c;
}

}  // namespace

TEST_CASE("loglog schedule passes the squared-loss conditions") {
    const auto rep = check_schedule(schedule({16, 256, 65536, 1000000}, "loglog"));
    CHECK(rep.k == std::vector<long long>{2, 3, 4, 4});
    CHECK(rep.squared_triple_pass());
    for (const char* name : {"k_n -> inf", "k_n 2^(d k_n) / n -> 0", "2^(d k_n) / sqrt(n) -> 0"}) {
        const auto* c = rep.find(name);
        REQUIRE(c != nullptr);
        CHECK(c->pass);
    }
    // direct evaluation of the third sequence at n = 1e6: 2^4 / 1000
    const auto* c = rep.find("2^(d k_n) / sqrt(n) -> 0");
    CHECK(c->values.back() == doctest::Approx(0.016));
    // gamma is 0 for squared loss under the auto rule, so no gamma condition
    CHECK(rep.find("gamma_n -> 0") == nullptr);
}

TEST_CASE("constant k violates k_n -> inf") {
    const auto rep = check_schedule(schedule({100, 1000, 10000}, "const:3"));
    CHECK_FALSE(rep.find("k_n -> inf")->pass);
    CHECK_FALSE(rep.all_pass());
}

TEST_CASE("k_n = n violates 2^(d k_n) / sqrt(n) -> 0") {
    const auto rep = check_schedule(schedule({4, 8, 16}, "linear"));
    CHECK_FALSE(rep.find("2^(d k_n) / sqrt(n) -> 0")->pass);
}

TEST_CASE("short schedules fail the check") {
    const auto rep = check_schedule(schedule({100, 1000}, "loglog"));
    CHECK_FALSE(rep.all_pass());
}

TEST_CASE("penalized schedule evaluates gamma and the covering condition") {
    auto c = schedule({200, 2000, 20000, 200000}, "logfrac:3", "logit");
    c.generator = GeneratorSpec::parse("logistic");
    const auto rep = check_schedule(c);
    const auto* g = rep.find("gamma_n -> 0");
    REQUIRE(g != nullptr);
    CHECK(g->pass);
    CHECK(rep.gamma.front() == doctest::Approx(1.0 / std::log(200.0 + std::exp(1.0))));
    REQUIRE(rep.find("log N / (n v_n) -> 0") != nullptr);
    CHECK(rep.find("log N / (n v_n) -> 0")->pass);
    const auto j = rep.to_json();
    CHECK(j["conditions"].size() == rep.conditions.size());
}

TEST_CASE("rule parsing") {
    CHECK(KRule::parse("loglog")(256) == 3);
    CHECK(KRule::parse("logfrac:3")(2000) == 3);
    CHECK(KRule::parse("const:5")(10) == 5);
    CHECK(KRule::parse("linear")(7) == 7);
    CHECK_THROWS_AS(KRule::parse("cubic"), ConfigError);
    CHECK(GammaRule::parse("zero")(10, Loss::logit_penalized(0.0)) == 0.0);
    CHECK(GammaRule::parse("auto")(10, Loss::squared()) == 0.0);
    CHECK(GammaRule::parse("auto")(10, Loss::logit_penalized(0.0)) > 0.0);
    CHECK(GammaRule::parse("const:0.25")(10, Loss::squared()) == 0.25);
    CHECK_THROWS_AS(GammaRule::parse("sometimes"), ConfigError);
}

TEST_CASE("Bayes references") {
    const Loss sq = Loss::squared();
    CHECK(bayes_reference(GeneratorSpec::parse("sine:sigma=0.3"), sq) == doctest::Approx(0.09).epsilon(1e-12));
    CHECK(std::abs(bayes_reference(GeneratorSpec::parse("sine_noiseless"), sq)) < 1e-15);
    const Loss logit = Loss::logit_penalized(0.0);
    CHECK(bayes_reference(GeneratorSpec::parse("logit_const:eta=0.5"), logit) == doctest::Approx(1.0).epsilon(1e-14));
    // eta = 0.8: F* = ln 4, A = -(0.8 log2 0.8 + 0.2 log2 0.2)
    const double h = -(0.8 * std::log2(0.8) + 0.2 * std::log2(0.2));
    CHECK(bayes_reference(GeneratorSpec::parse("logit_const:eta=0.8"), logit) == doctest::Approx(h).epsilon(1e-12));
    CHECK(bayes_function(GeneratorSpec::parse("logit_const:eta=0.8"), logit, std::vector<double>{0.3}) ==
          doctest::Approx(std::log(4.0)));
    CHECK_THROWS_AS(bayes_reference(GeneratorSpec::parse("sine"), Loss::hinge_penalized(0.0, 1.0)), UnsupportedGenerator);
    CHECK_THROWS_AS(bayes_reference(GeneratorSpec::parse("sine"), logit), UnsupportedGenerator);
    CHECK_THROWS_AS(GeneratorSpec::parse("mixture"), UnsupportedGenerator);
}

TEST_CASE("generator draws") {
    std::mt19937_64 rng(3);
    const auto d = GeneratorSpec::parse("logistic").draw(2, 500, rng);
    CHECK(d.size() == 500);
    CHECK(d.dim() == 2);
    CHECK(d.task() == Task::Classification);
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(std::abs(d.y(i)) == 1.0);
        for (double v : d.x(i)) CHECK((v >= 0.0 && v < 1.0));
    }
    CHECK(GeneratorSpec::parse("sine:sigma=0.3").describe() == "sine:sigma=0.3");
}

TEST_CASE("tiny smoke run is well formed") {
    auto c = schedule({8}, "const:3");
    c.generator = GeneratorSpec::parse("sine:sigma=0.3");
    c.replications = 3;
    c.threads = 2;
    CHECK_THROWS_AS(run_consistency(c), ConfigError);
    c.force = true;
    const auto curve = run_consistency(c);
    REQUIRE(curve.points.size() == 1);
    const auto& p = curve.points[0];
    CHECK(p.k == 3);
    CHECK(p.replicate_risks.size() == 3);
    CHECK(std::isfinite(p.gap));
    CHECK(p.gap > 0.0);
    CHECK(p.bayes == doctest::Approx(0.09));
    const auto csv = curve.to_csv();
    CHECK(csv.find("# schema=cvxboost.gap/1") == 0);
    CHECK(csv.find("n,mean_risk,se,bayes,gap") != std::string::npos);
}

TEST_CASE("consistency runs are reproducible and respect the Bayes floor") {
    auto c = schedule({64, 512, 4096}, "logfrac:3");
    c.generator = GeneratorSpec::parse("sine:sigma=0.3");
    c.replications = 4;
    c.test_size = 4000;
    c.threads = 3;
    const auto a = run_consistency(c);
    c.threads = 1;
    const auto b = run_consistency(c);
    CHECK(a.to_csv() == b.to_csv());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        CHECK(a.points[i].replicate_risks == b.points[i].replicate_risks);
        CHECK(a.points[i].mean_risk >= a.points[i].bayes - 2.0 * a.points[i].se);
    }
    c.seed = 2;
    CHECK(run_consistency(c).to_csv() != a.to_csv());
}

TEST_CASE("consistency config validation") {
    auto bad = schedule({100, 1000, 10000}, "loglog", "hinge:L=1");
    bad.generator = GeneratorSpec::parse("sine");
    bad.force = true;
    CHECK_THROWS_AS(run_consistency(bad), UnsupportedGenerator);
    auto big = schedule({100, 1000, 10000}, "const:13");
    big.dim = 2;
    big.force = true;
    CHECK_THROWS_AS(run_consistency(big), CapacityError);

    const auto j = nlohmann::json::parse(R"({"schema":"cvxboost.lab/1","d":1,"generator":"sine:sigma=0.3",
        "loss":"squared","n":[200,2000,20000],"k_rule":"loglog","gamma_rule":"auto","replications":10,"seed":1})");
    const auto cfg = ConsistencyConfig::from_json(j);
    CHECK(cfg.n_schedule == std::vector<std::size_t>{200, 2000, 20000});
    CHECK(ConsistencyConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
    auto extra = j;
    extra["colour"] = "blue";
    CHECK_THROWS_AS(ConsistencyConfig::from_json(extra), ConfigError);
}

TEST_CASE("job seeds differ across keys") {
    CHECK(job_seed(1, 200, 0) != job_seed(1, 200, 1));
    CHECK(job_seed(1, 200, 0) != job_seed(1, 2000, 0));
    CHECK(job_seed(1, 200, 0) != job_seed(2, 200, 0));
    CHECK(job_seed(1, 200, 0) == job_seed(1, 200, 0));
}

TEST_CASE("grid-class run matches the cellwise minimizer") {
    std::mt19937_64 rng(44);
    const auto gen = GeneratorSpec::parse("sine:sigma=0.3");
    const auto data = std::make_shared<const Dataset>(gen.draw(1, 300, rng));
    const auto m = Measure::empirical(data);
    const auto grid = enumerate_grid_class(1, 3);
    const auto cells = grid.cells_of(*data);
    for (const char* spec : {"squared", "squared:gamma=0.2"}) {
        const Loss loss = parse_loss(spec);
        RunConfig rc;
        rc.max_iters = 200000;
        const auto res = run_algorithm1(loss, m, WeakClassConfig::parse("grid:3", TreeFlavor::SignLeaf), rc);
        const auto exact = exact_partition_minimizer(loss, m, cells, grid.cell_count());
        const auto fbar = exact.at_samples(cells);
        std::vector<double> diff(fbar.size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = res.fitted[i] - fbar[i];
        CAPTURE(spec);
        CHECK(std::abs(res.trace.rows.back().risk - exact.risk) <= 1e-6);
        CHECK(norm_mu_x(m, diff) <= 1e-3);
    }
}
