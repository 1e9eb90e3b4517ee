#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvxboost/dataset.hpp"
#include "cvxboost/diagnostics.hpp"
#include "cvxboost/engine.hpp"
#include "cvxboost/format.hpp"
#include "cvxboost/lab.hpp"
#include "cvxboost/learners.hpp"
#include "cvxboost/losses.hpp"

namespace fs = std::filesystem;
using namespace cvxboost;

namespace {

constexpr int kOk = 0;
constexpr int kCertificate = 1;
constexpr int kConfig = 2;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

Loss loss_with_gamma(const std::string& spec, const std::optional<double>& gamma) {
    Loss loss = parse_loss(spec);
    if (gamma) {
        if (*gamma < 0.0) throw ConfigError("gamma must be nonnegative");
        loss = loss.with_gamma(*gamma);
    }
    return loss;
}

Measure measure_for(const Loss& loss, std::shared_ptr<const Dataset> data) {
    if (loss.smoothing()) return Measure::smoothed_y(std::move(data), *loss.smoothing());
    return Measure::empirical(std::move(data));
}

struct FitOptions {
    int algo = 1;
    std::string loss = "squared";
    std::string cls = "stump";
    std::optional<double> gamma;
    double nu = 0.0;
    double w0 = 1.0;
    std::size_t iters = 10000;
    std::string data;
    std::string target;
    std::string out = ".";
    std::uint64_t seed = 0;
};

int cmd_fit(const FitOptions& o) {
    const Loss loss = loss_with_gamma(o.loss, o.gamma);
    CsvSchema schema;
    schema.target_column = o.target;
    schema.task = loss.classification() ? Task::Classification : Task::Regression;
    auto data = std::make_shared<const Dataset>(load_csv(o.data, schema));
    const Measure m = measure_for(loss, data);

    RunConfig rc;
    rc.max_iters = o.iters;
    rc.w0 = o.w0;
    rc.nu = o.nu;
    RunResult result = [&] {
        if (o.algo == 1) return run_algorithm1(loss, m, WeakClassConfig::parse(o.cls, TreeFlavor::SignLeaf), rc);
        if (o.algo == 2) return run_algorithm2(loss, m, WeakClassConfig::parse(o.cls, TreeFlavor::FreeLeaf), rc);
        throw ConfigError("--algo must be 1 or 2");
    }();

    const fs::path out(o.out);
    write_file(out / "model.json", result.model.to_json().dump(2) + "\n");
    write_file(out / "trace.csv", result.trace.to_csv());
    const auto& last = result.trace.rows.back();
    std::cout << "iterations " << last.t << "\n"
              << "risk " << format_double(last.risk) << "\n"
              << "stop " << result.trace.stop_reason << "\n";
    for (const auto& w : result.trace.warnings) std::cerr << "warning: " << w << "\n";
    return kOk;
}

int cmd_check(const std::string& trace_path, const std::string& loss_spec, const std::string& out) {
    const BoostTrace trace = BoostTrace::from_csv(read_file(trace_path));
    const std::string spec = loss_spec.empty() ? trace.loss : loss_spec;
    if (spec.empty()) throw ConfigError("trace has no loss header; pass --loss");
    const auto report = verify_trace(trace, parse_loss(spec));
    const auto text = report.to_json().dump(2);
    std::cout << text << "\n";
    if (!out.empty()) write_file(out, text + "\n");
    return report.all_pass() ? kOk : kCertificate;
}

int cmd_assumptions(const std::string& loss_spec, const std::optional<double>& gamma, const std::string& data_path,
                    std::size_t pairs, std::uint64_t seed) {
    const Loss loss = loss_with_gamma(loss_spec, gamma);
    std::shared_ptr<const Dataset> data;
    if (!data_path.empty()) {
        CsvSchema schema;
        schema.task = loss.classification() ? Task::Classification : Task::Regression;
        data = std::make_shared<const Dataset>(load_csv(data_path, schema));
    } else if (loss.classification()) {
        data = std::make_shared<const Dataset>(std::vector<double>{0.0, 0.0}, std::vector<double>{-1.0, 1.0}, 1,
                                               Task::Classification);
    } else {
        std::vector<double> ys;
        for (int i = -4; i <= 4; ++i) ys.push_back(0.5 * i);
        data = std::make_shared<const Dataset>(std::vector<double>(ys.size(), 0.0), ys, 1);
    }
    const Measure m = measure_for(loss, data);
    SamplingPlan plan;
    plan.pairs = pairs;
    plan.seed = seed;
    const auto report = check_assumptions(loss.bound_to(m), m, plan);
    std::cout << report.to_json().dump(2) << "\n";
    return report.all_pass() ? kOk : kCertificate;
}

int cmd_lab(const std::string& config_path, const std::string& out, bool force, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> threads) {
    auto cfg = ConsistencyConfig::from_json(nlohmann::json::parse(read_file(config_path)));
    if (force) cfg.force = true;
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    const auto schedule = check_schedule(cfg);
    const fs::path dir(out);
    write_file(dir / "schedule.json", schedule.to_json().dump(2) + "\n");
    const auto curve = run_consistency(cfg);
    write_file(dir / "gap.csv", curve.to_csv());
    std::cout << curve.to_csv();
    return kOk;
}

int cmd_predict(const std::string& model_path, const std::string& data_path, const std::string& target,
                bool classify, const std::string& out) {
    const auto model = AdditiveModel::from_json(nlohmann::json::parse(read_file(model_path)));
    CsvSchema schema;
    schema.target_column = target;
    // same layout as the training file; the target column is read and ignored
    const Dataset data = parse_csv(read_file(data_path), schema);
    std::ostringstream ss;
    ss << (classify ? "label" : "prediction") << "\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (classify)
            ss << model.classify(data.x(i)) << "\n";
        else
            ss << format_double(model.predict(data.x(i))) << "\n";
    }
    if (out.empty())
        std::cout << ss.str();
    else
        write_file(out, ss.str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Convex gradient boosting with per-iteration certificates"};
    app.require_subcommand(1);

    FitOptions fit;
    auto* fit_cmd = app.add_subcommand("fit", "run a boosting loop on a CSV dataset");
    fit_cmd->add_option("--algo", fit.algo, "1 (adaptive step, sign trees) or 2 (fixed step nu)")
        ->check(CLI::IsMember({1, 2}));
    fit_cmd->add_option("--loss", fit.loss, "loss spec, e.g. logit:gamma=0.1 or absolute:h=0.05");
    fit_cmd->add_option("--class", fit.cls, "const, stump, tree:k, depth:D or grid:k");
    fit_cmd->add_option("--gamma", fit.gamma, "penalty gamma (overrides the loss spec)");
    fit_cmd->add_option("--nu", fit.nu, "fixed step for --algo 2");
    fit_cmd->add_option("--w0", fit.w0, "initial step for --algo 1");
    fit_cmd->add_option("--iters", fit.iters, "maximum iterations T");
    fit_cmd->add_option("--data", fit.data, "CSV file")->required();
    fit_cmd->add_option("--target", fit.target, "target column name or index (default: last)");
    fit_cmd->add_option("--out", fit.out, "output directory");
    fit_cmd->add_option("--seed", fit.seed, "recorded only; fitting is deterministic");

    std::string check_trace, check_loss, check_out;
    auto* check_cmd = app.add_subcommand("check", "re-verify the certificates of a trace");
    check_cmd->add_option("--trace", check_trace, "trace CSV")->required();
    check_cmd->add_option("--loss", check_loss, "loss spec (default: from the trace header)");
    check_cmd->add_option("--out", check_out, "write the JSON report here");

    std::string as_loss = "squared", as_data;
    std::optional<double> as_gamma;
    std::size_t as_pairs = 2000;
    std::uint64_t as_seed = 7;
    auto* as_cmd = app.add_subcommand("assumptions", "sampled checks of the loss hypotheses");
    as_cmd->add_option("--loss", as_loss, "loss spec");
    as_cmd->add_option("--gamma", as_gamma, "penalty gamma (overrides the loss spec)");
    as_cmd->add_option("--data", as_data, "CSV file whose labels drive the checks");
    as_cmd->add_option("--pairs", as_pairs, "sampled (x1, x2, y) triples");
    as_cmd->add_option("--seed", as_seed, "sampling seed");

    std::string lab_config, lab_out = ".";
    bool lab_force = false;
    std::optional<std::uint64_t> lab_seed;
    std::optional<std::size_t> lab_threads;
    auto* lab_cmd = app.add_subcommand("lab", "risk-gap curve over a sample-size schedule");
    lab_cmd->add_option("--config", lab_config, "lab config JSON")->required();
    lab_cmd->add_option("--out", lab_out, "output directory");
    lab_cmd->add_flag("--force", lab_force, "run even when the schedule check fails");
    lab_cmd->add_option("--seed", lab_seed, "override the config seed");
    lab_cmd->add_option("--threads", lab_threads, "worker threads (0 = all cores)");

    std::string pr_model, pr_data, pr_target, pr_out;
    bool pr_classify = false;
    auto* pr_cmd = app.add_subcommand("predict", "evaluate a saved model");
    pr_cmd->add_option("--model", pr_model, "model JSON")->required();
    pr_cmd->add_option("--data", pr_data, "CSV file")->required();
    pr_cmd->add_option("--target", pr_target, "target column to drop (default: last)");
    pr_cmd->add_flag("--classify", pr_classify, "print sign labels instead of scores");
    pr_cmd->add_option("--out", pr_out, "write predictions here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (*fit_cmd) return cmd_fit(fit);
        if (*check_cmd) return cmd_check(check_trace, check_loss, check_out);
        if (*as_cmd) return cmd_assumptions(as_loss, as_gamma, as_data, as_pairs, as_seed);
        if (*lab_cmd) return cmd_lab(lab_config, lab_out, lab_force, lab_seed, lab_threads);
        if (*pr_cmd) return cmd_predict(pr_model, pr_data, pr_target, pr_classify, pr_out);
    } catch (const CertificateError& e) {
        std::cerr << "certificate failure: " << e.what() << "\n";
        return kCertificate;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    }
    return kConfig;
}
