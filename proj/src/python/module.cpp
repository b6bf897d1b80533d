#include "robtree/adversary.hpp"
#include "robtree/data.hpp"
#include "robtree/error.hpp"
#include "robtree/evaluation.hpp"
#include "robtree/master.hpp"
#include "robtree/tree.hpp"
#include "robtree/uncertainty.hpp"

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace robtree;

namespace {

SolveOptions options(double R, bool strengthen, std::size_t iteration_cap, double time_cap, std::size_t max_trees)
{
    SolveOptions o;
    o.R = R;
    o.strengthen = strengthen;
    o.iteration_cap = iteration_cap;
    o.time_cap_seconds = time_cap;
    o.max_trees = max_trees;
    return o;
}

// backend: "builtin-enum", "external:<command>", or a callable str -> str.
std::unique_ptr<MainSolver> backend_from(const py::object& backend, std::size_t max_trees)
{
    if (py::isinstance<py::str>(backend)) {
        const auto name = backend.cast<std::string>();
        if (name == "builtin-enum") return std::make_unique<EnumerativeSolver>(max_trees);
        if (name.rfind("external:", 0) == 0) return std::make_unique<ExternalCommandSolver>(name.substr(9));
        throw ValidationError("unknown backend '" + name + "'");
    }
    auto fn = backend.cast<std::function<std::string(const std::string&)>>();
    return std::make_unique<CallbackSolver>(std::move(fn), "callback");
}

py::tuple result(const SolveReport& r, const Dataset& data, bool timing)
{
    return py::make_tuple(r.tree, serialize_tree(r.tree, data.feature_names(), data.label_names()),
                          report_json(r, timing));
}

} // namespace

PYBIND11_MODULE(_robtree, m)
{
    m.doc() = "Robust classification trees under integer and categorical shifts";

    // Translators run newest first, so the subclasses win over the base.
    const auto& base = py::register_exception<Error>(m, "RobtreeError");
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ResourceCapError>(m, "ResourceCapError", base.ptr());
    py::register_exception<BackendError>(m, "BackendError", base.ptr());

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("num_rows", &Dataset::num_rows)
        .def_property_readonly("num_features", &Dataset::num_features)
        .def_property_readonly("num_labels", &Dataset::num_labels)
        .def_property_readonly("feature_names", &Dataset::feature_names)
        .def_property_readonly("label_names", &Dataset::label_names)
        .def("row", [](const Dataset& d, std::size_t i) {
            if (i >= d.num_rows()) throw py::index_error();
            auto r = d.row(i);
            return std::vector<Value>(r.begin(), r.end());
        })
        .def_property_readonly("labels", [](const Dataset& d) {
            return std::vector<std::size_t>(d.labels().begin(), d.labels().end());
        })
        .def("to_csv", &dataset_to_csv)
        .def("schema_json", &schema_to_json)
        .def("__len__", &Dataset::num_rows);

    m.def("load_dataset", [](const std::string& csv, const std::string& schema) { return load_dataset(csv, schema); },
          py::arg("csv_path"), py::arg("schema_path"));
    m.def("parse_dataset", &parse_dataset, py::arg("csv_text"), py::arg("schema_json"));
    m.def("train_test_split", &train_test_split, py::arg("data"), py::arg("fraction"), py::arg("seed") = 0);

    py::class_<TreeEncoding>(m, "Tree")
        .def_property_readonly("depth", &TreeEncoding::depth)
        .def_property_readonly("num_branch_nodes", &TreeEncoding::num_branch_nodes)
        .def("predict", [](const TreeEncoding& t, const std::vector<Value>& x) {
            t.check_ranges(x.size(), SIZE_MAX);
            return route(t, x).label;
        })
        .def("__eq__", &TreeEncoding::operator==);
    m.def("constant_tree", &TreeEncoding::constant, py::arg("depth"), py::arg("label"));
    m.def("load_tree", [](const std::string& blob) { return deserialize_tree(blob).tree; }, py::arg("blob"));
    m.def("render_text", [](const TreeEncoding& t, const Dataset& d) {
        return render_text(t, d.feature_names(), d.label_names());
    });

    py::class_<RhoMatrix>(m, "RhoMatrix")
        .def_static("from_schema", &RhoMatrix::from_schema, py::arg("data"), py::arg("fallback") = std::nullopt)
        .def_static("uniform", &RhoMatrix::uniform, py::arg("data"), py::arg("rho"))
        .def_static("harness", &RhoMatrix::harness, py::arg("data"), py::arg("mean"), py::arg("seed"),
                    py::arg("sd") = 0.2, py::arg("floor") = 0.05)
        .def("at", &RhoMatrix::at);

    py::class_<UncertaintyModel>(m, "UncertaintyModel")
        .def_static("uniform", &UncertaintyModel::uniform, py::arg("data"), py::arg("gamma"), py::arg("epsilon"))
        .def_property_readonly("epsilon", &UncertaintyModel::epsilon)
        .def("gamma", &UncertaintyModel::gamma)
        .def("with_epsilon", &UncertaintyModel::with_epsilon);

    m.def("budget_from_lambda", &budget_from_lambda, py::arg("lam"), py::arg("n"));
    m.def("gamma_unbounded", &gamma_unbounded);
    m.def("gamma_binary", &gamma_binary);
    m.def("gamma_categorical", &gamma_categorical);
    m.def("gamma_bounded", &gamma_bounded, py::arg("rho"), py::arg("x"), py::arg("lower") = std::nullopt,
          py::arg("upper") = std::nullopt);
    m.def("find_r_one_sided", &find_r_one_sided);
    m.def("find_r_two_sided", &find_r_two_sided);
    m.def("calibrate", &calibrate, py::arg("data"), py::arg("rho"), py::arg("lam"));
    m.def("calibrate_with_epsilon", &calibrate_with_epsilon, py::arg("data"), py::arg("rho"), py::arg("epsilon"));
    m.def("calibration_report", &calibration_report, py::arg("data"), py::arg("rho"), py::arg("model"),
          py::arg("lam") = std::nullopt);
    m.def("sample_perturbation", &sample_perturbation, py::arg("data"), py::arg("rho"), py::arg("seed"));

    m.def("worst_case_correct", [](const TreeEncoding& t, const Dataset& d, const UncertaintyModel& model) {
        return certificate_json(worst_case_correct(t, d, model), d);
    });
    m.def("worst_case_value", [](const TreeEncoding& t, const Dataset& d, const UncertaintyModel& model) {
        return worst_case_correct(t, d, model).value;
    });
    m.def("brute_force_adversary", [](const TreeEncoding& t, const Dataset& d, const UncertaintyModel& model,
                                      std::size_t max_nodes) {
        return brute_force_adversary(t, d, model, BruteForceCaps{max_nodes});
    }, py::arg("tree"), py::arg("data"), py::arg("model"), py::arg("max_nodes") = 20'000'000);
    m.def("nominal_correct", &nominal_correct);

    m.def("train", [](const Dataset& d, const UncertaintyModel& model, int depth, const py::object& backend, double R,
                      bool strengthen, std::size_t iteration_cap, double time_cap, std::size_t max_trees,
                      bool timing) {
        auto solver = backend_from(backend, max_trees);
        const auto r = cutting_plane_solve(d, model, depth, *solver,
                                           options(R, strengthen, iteration_cap, time_cap, max_trees));
        return result(r, d, timing);
    }, py::arg("data"), py::arg("model"), py::arg("depth"), py::arg("backend") = "builtin-enum", py::arg("R") = 1.0,
       py::arg("strengthen") = true, py::arg("iteration_cap") = 10'000, py::arg("time_cap") = kInf,
       py::arg("max_trees") = 5'000'000, py::arg("timing") = false);
    m.def("train_nonrobust", [](const Dataset& d, int depth, double R, const py::object& backend,
                                std::size_t max_trees) {
        auto solver = backend_from(backend, max_trees);
        return result(nonrobust_regularized_solve(d, depth, R, *solver, options(R, true, 10'000, kInf, max_trees)), d,
                      false);
    }, py::arg("data"), py::arg("depth"), py::arg("R") = 1.0, py::arg("backend") = "builtin-enum",
       py::arg("max_trees") = 5'000'000);
    m.def("train_exhaustive", [](const Dataset& d, const UncertaintyModel& model, int depth, double R) {
        return result(exhaustive_solve(d, model, depth, options(R, true, 1, kInf, 5'000'000)), d, false);
    }, py::arg("data"), py::arg("model"), py::arg("depth"), py::arg("R") = 1.0);
    m.def("train_proxy", [](const Dataset& d, const UncertaintyModel& model, int depth, const std::string& mode) {
        return result(proxy_solve(d, model, depth, parse_budget_mode(mode)), d, false);
    }, py::arg("data"), py::arg("model"), py::arg("depth"), py::arg("budget_mode") = "shared");

    m.def("evaluate", [](const TreeEncoding& t, const Dataset& test, const RhoMatrix& rho, std::size_t K,
                         std::uint64_t seed, std::size_t threads, double rho_offset, double rho_radius,
                         std::optional<TreeEncoding> baseline, const UncertaintyModel* model) {
        EvaluationOptions o{K, seed, threads, rho_offset, rho_radius};
        py::gil_scoped_release release;
        return evaluation_json(evaluate_under_shifts(t, test, rho, o, baseline, model));
    }, py::arg("tree"), py::arg("test"), py::arg("rho"), py::arg("K") = 1000, py::arg("seed") = 0,
       py::arg("threads") = 1, py::arg("rho_offset") = 0.0, py::arg("rho_radius") = 0.0,
       py::arg("baseline") = std::nullopt, py::arg("model") = nullptr);
}
