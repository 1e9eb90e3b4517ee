#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvxboost/dataset.hpp"
#include "cvxboost/losses.hpp"

namespace cvxboost {

enum class GeneratorKind {
    /// Y = sin(2 pi x_1) + sigma N(0, 1)
    Sine,
    /// Y = sin(2 pi x_1)
    NoiselessSine,
    /// P(Y = 1 | X) = eta, constant
    LogitConst,
    /// P(Y = 1 | X = x) = 1 / (1 + exp(-2 sin(2 pi x_1)))
    Logistic,
};

/// Synthetic distribution on [0,1]^d with uniform X and known F*.
struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::Sine;
    double sigma = 0.3;
    double eta = 0.5;

    /// `sine[:sigma=s]`, `sine_noiseless`, `logit_const[:eta=p]`, `logistic`.
    static GeneratorSpec parse(const std::string& text);
    std::string describe() const;
    Task task() const;
    /// |Y| is bounded (classification labels or noiseless regression).
    bool bounded() const;

    /// E(Y | X = x) for regression; P(Y = 1 | X = x) for classification.
    double conditional(std::span<const double> x) const;
    Dataset draw(std::size_t dim, std::size_t n, std::mt19937_64& rng) const;
};

/// Minimizer of A(F) = E phi(F(X), Y) for the generator and (unpenalized) loss.
/// Throws UnsupportedGenerator when no closed form is available.
double bayes_function(const GeneratorSpec& gen, const Loss& loss, std::span<const double> x);

/// A(F*) by composite Gauss-Legendre quadrature over x_1.
double bayes_reference(const GeneratorSpec& gen, const Loss& loss);

/// k_n as a function of n: `loglog` (floor log2 log2 n), `logfrac:c` (floor(log2(n)/c)),
/// `const:k`, `linear` (k = n).
struct KRule {
    enum class Kind { LogLog, LogFrac, Const, Linear } kind = Kind::LogLog;
    double param = 1.0;

    static KRule parse(const std::string& text);
    std::string describe() const;
    long long operator()(std::size_t n) const;
};

/// gamma_n: `auto` (0 when phi is strongly convex, else 1/log(n+e)), `zero`,
/// `inv_log` (1/log(n+e)) or `const:c`.
struct GammaRule {
    enum class Kind { Auto, Zero, InvLog, Const } kind = Kind::Auto;
    double param = 0.0;

    static GammaRule parse(const std::string& text);
    std::string describe() const;
    double operator()(std::size_t n, const Loss& phi) const;
};

struct ConsistencyConfig {
    std::size_t dim = 1;
    GeneratorSpec generator;
    /// Unpenalized phi; the penalty gamma_n x^2 is added per sample size.
    std::string loss = "squared";
    std::vector<std::size_t> n_schedule;
    KRule k_rule;
    GammaRule gamma_rule;
    std::size_t replications = 10;
    std::uint64_t seed = 1;
    /// 0 means 10 * max(n).
    std::size_t test_size = 0;
    std::size_t max_iters = 200000;
    double w0 = 1.0;
    /// 0 means hardware concurrency.
    std::size_t threads = 0;
    bool force = false;

    static ConsistencyConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct ScheduleCondition {
    std::string name;
    std::vector<double> values;
    bool evaluated = true;
    bool pass = false;
    /// The sequence never increases along the schedule.
    bool monotone = false;
    std::string note;
};

struct ScheduleReport {
    std::vector<std::size_t> n;
    std::vector<long long> k;
    std::vector<double> gamma;
    std::vector<ScheduleCondition> conditions;

    bool all_pass() const;
    /// k_n -> inf, k_n 2^{d k_n}/n -> 0 and 2^{d k_n}/sqrt(n) -> 0.
    bool squared_triple_pass() const;
    const ScheduleCondition* find(const std::string& name) const;
    nlohmann::json to_json() const;
};

/// Evaluates each sieve condition along the schedule. A condition passes when its
/// terminal value is at most every earlier value and strictly below the first.
ScheduleReport check_schedule(const ConsistencyConfig& cfg);

struct GapPoint {
    std::size_t n = 0;
    long long k = 0;
    double gamma = 0.0;
    double mean_risk = 0.0;
    double se = 0.0;
    double bayes = 0.0;
    double gap = 0.0;
    std::vector<double> replicate_risks;
    std::size_t mean_iterations = 0;
};

struct GapCurve {
    std::string generator;
    std::string loss;
    std::vector<GapPoint> points;

    /// n,mean_risk,se,bayes,gap with a `# schema=` header line.
    std::string to_csv() const;
};

/// Draws data, runs the adaptive-step loop on the midpoint grid class with
/// psi = phi + gamma_n x^2, and estimates A(F-bar_n) on a fresh test sample.
/// Throws ConfigError when the schedule check fails and cfg.force is unset.
GapCurve run_consistency(const ConsistencyConfig& cfg);

/// Seed for job (n, rep): SplitMix64 mixing of the three values.
std::uint64_t job_seed(std::uint64_t seed, std::uint64_t n, std::uint64_t rep);

}  // namespace cvxboost
