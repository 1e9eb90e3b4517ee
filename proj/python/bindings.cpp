#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cvxboost/diagnostics.hpp"
#include "cvxboost/engine.hpp"
#include "cvxboost/lab.hpp"

namespace py = pybind11;
using namespace cvxboost;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

using Matrix = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::shared_ptr<const Dataset> make_dataset(const Matrix& x, const std::vector<double>& y, bool classification) {
    if (x.ndim() != 2) throw DimensionError("x must be a 2-D array");
    const auto n = static_cast<std::size_t>(x.shape(0));
    const auto d = static_cast<std::size_t>(x.shape(1));
    if (y.size() != n) throw DimensionError("x and y disagree on the number of samples");
    std::vector<double> feats(x.data(), x.data() + n * d);
    return std::make_shared<const Dataset>(std::move(feats), y, d,
                                           classification ? Task::Classification : Task::Regression);
}

std::vector<double> predict_rows(const AdditiveModel& model, const Matrix& x) {
    if (x.ndim() != 2) throw DimensionError("x must be a 2-D array");
    const auto n = static_cast<std::size_t>(x.shape(0));
    const auto d = static_cast<std::size_t>(x.shape(1));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = model.predict(std::span<const double>(x.data() + i * d, d));
    return out;
}

RunResult fit(const Matrix& x, const std::vector<double>& y, int algo, const std::string& loss_spec,
              const std::string& weak, std::size_t iters, double w0, double nu, bool classification,
              std::optional<double> smoothing) {
    const auto data = make_dataset(x, y, classification);
    const Loss loss = parse_loss(loss_spec);
    const auto h = smoothing ? smoothing : loss.smoothing();
    const Measure m = h ? Measure::smoothed_y(data, *h) : Measure::empirical(data);
    RunConfig rc;
    rc.max_iters = iters;
    rc.w0 = w0;
    rc.nu = nu;
    if (algo == 1) return run_algorithm1(loss, m, WeakClassConfig::parse(weak, TreeFlavor::SignLeaf), rc);
    if (algo == 2) return run_algorithm2(loss, m, WeakClassConfig::parse(weak, TreeFlavor::FreeLeaf), rc);
    throw ConfigError("algo must be 1 or 2");
}

template <class Row, class F>
std::vector<double> column(const std::vector<Row>& rows, F f) {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(f(r));
    return v;
}

}  // namespace

PYBIND11_MODULE(_cvxboost, mod) {
    mod.doc() = "Convex-analysis gradient boosting with certificate checks";

    auto base = py::register_exception<Error>(mod, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(mod, "ConfigError", base.ptr());
    py::register_exception<SchemaError>(mod, "SchemaError", base.ptr());
    py::register_exception<ParseError>(mod, "ParseError", base.ptr());
    py::register_exception<AssumptionError>(mod, "AssumptionError", base.ptr());
    py::register_exception<CertificateError>(mod, "CertificateError", base.ptr());
    py::register_exception<DimensionError>(mod, "DimensionError", base.ptr());
    py::register_exception<CapacityError>(mod, "CapacityError", base.ptr());
    py::register_exception<UnboundedError>(mod, "UnboundedError", base.ptr());
    py::register_exception<UnsupportedGenerator>(mod, "UnsupportedGenerator", base.ptr());

    py::class_<Loss>(mod, "Loss")
        .def(py::init(&parse_loss), py::arg("spec"))
        .def_property_readonly("spec", &Loss::spec)
        .def_property_readonly("name", &Loss::name)
        .def_property_readonly("alpha", &Loss::alpha)
        .def_property_readonly("lipschitz", &Loss::lipschitz)
        .def_property_readonly("gamma", &Loss::gamma)
        .def("psi", &Loss::psi, py::arg("x"), py::arg("y"))
        .def("xi", &Loss::xi, py::arg("x"), py::arg("y"))
        .def("__repr__", [](const Loss& l) { return "Loss('" + l.spec() + "')"; });

    py::class_<AdditiveModel>(mod, "Model")
        .def_property_readonly("dim", &AdditiveModel::dim)
        .def_property_readonly("n_terms", [](const AdditiveModel& m) { return m.terms().size(); })
        .def_property_readonly("weights", [](const AdditiveModel& m) {
            return column(m.terms(), [](const Term& t) { return t.weight; });
        })
        .def("predict", &predict_rows, py::arg("x"))
        .def("classify", [](const AdditiveModel& m, const Matrix& x) {
            std::vector<int> out;
            for (double v : predict_rows(m, x)) out.push_back(v > 0.0 ? 1 : -1);
            return out;
        }, py::arg("x"))
        .def("to_json", [](const AdditiveModel& m) { return m.to_json().dump(); })
        .def_static("from_json", [](const std::string& s) { return AdditiveModel::from_json(nlohmann::json::parse(s)); });

    py::class_<BoostTrace>(mod, "Trace")
        .def_property_readonly("risk", [](const BoostTrace& t) { return column(t.rows, [](const TraceRow& r) { return r.risk; }); })
        .def_property_readonly("step", [](const BoostTrace& t) { return column(t.rows, [](const TraceRow& r) { return r.step; }); })
        .def_property_readonly("f_norm", [](const BoostTrace& t) { return column(t.rows, [](const TraceRow& r) { return r.f_norm; }); })
        .def_property_readonly("margin", [](const BoostTrace& t) { return column(t.rows, [](const TraceRow& r) { return r.margin; }); })
        .def_readonly("stop_reason", &BoostTrace::stop_reason)
        .def_readonly("warnings", &BoostTrace::warnings)
        .def_readonly("lipschitz", &BoostTrace::lipschitz)
        .def("__len__", [](const BoostTrace& t) { return t.rows.size(); })
        .def("to_csv", &BoostTrace::to_csv)
        .def_static("from_csv", &BoostTrace::from_csv);

    py::class_<RunResult>(mod, "FitResult")
        .def_readonly("model", &RunResult::model)
        .def_readonly("trace", &RunResult::trace)
        .def_readonly("fitted", &RunResult::fitted);

    mod.def("fit", &fit, py::arg("x"), py::arg("y"), py::arg("algo") = 1, py::arg("loss") = "squared",
            py::arg("weak") = "stump", py::arg("iters") = 10000, py::arg("w0") = 1.0, py::arg("nu") = 0.0,
            py::arg("classification") = false, py::arg("smoothing") = py::none(),
            py::call_guard<py::gil_scoped_release>());

    mod.def("verify_trace", [](const BoostTrace& t, const Loss& l) { return to_py(verify_trace(t, l).to_json()); },
            py::arg("trace"), py::arg("loss"));

    mod.def("check_assumptions", [](const Loss& loss, std::optional<std::vector<double>> y, std::size_t pairs,
                                    std::uint64_t seed) {
        std::vector<double> labels = y ? *y : (loss.classification() ? std::vector<double>{-1.0, 1.0}
                                                                      : std::vector<double>{-2.0, -0.5, 0.5, 2.0});
        const auto data = std::make_shared<const Dataset>(std::vector<double>(labels.size(), 0.0), labels, 1,
                                                          loss.classification() ? Task::Classification : Task::Regression);
        SamplingPlan plan;
        plan.pairs = pairs;
        plan.seed = seed;
        return to_py(check_assumptions(loss, Measure::empirical(data), plan).to_json());
    }, py::arg("loss"), py::arg("y") = py::none(), py::arg("pairs") = 2000, py::arg("seed") = 7);

    mod.def("bayes_reference", [](const std::string& gen, const Loss& l) {
        return bayes_reference(GeneratorSpec::parse(gen), l);
    }, py::arg("generator"), py::arg("loss"));

    mod.def("check_schedule", [](const py::dict& cfg) {
        return to_py(check_schedule(ConsistencyConfig::from_json(from_py(cfg))).to_json());
    }, py::arg("config"));

    mod.def("run_consistency", [](const py::dict& cfg) {
        const auto c = ConsistencyConfig::from_json(from_py(cfg));
        py::gil_scoped_release release;
        return run_consistency(c).to_csv();
    }, py::arg("config"));
}
