// robtree: train, evaluate and inspect robust classification trees.

#include "robtree/adversary.hpp"
#include "robtree/data.hpp"
#include "robtree/error.hpp"
#include "robtree/evaluation.hpp"
#include "robtree/master.hpp"
#include "robtree/tree.hpp"
#include "robtree/uncertainty.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

using namespace robtree;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitResourceCap = 3;
constexpr int kExitBackend = 4;

std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void emit(const std::string& path, const std::string& content)
{
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << content;
}

struct DataArgs {
    std::string data;
    std::string schema;
};

struct RhoArgs {
    std::optional<double> rho;
    std::optional<double> rho_mean;
    double rho_floor = 0.05;
};

struct BudgetArgs {
    std::optional<double> lambda;
    std::optional<double> epsilon;
    std::optional<double> gamma;
};

void add_data_options(CLI::App* cmd, DataArgs& a)
{
    cmd->add_option("--data", a.data, "CSV file with a header row")->required()->check(CLI::ExistingFile);
    cmd->add_option("--schema", a.schema, "JSON schema sidecar")->required()->check(CLI::ExistingFile);
}

void add_rho_options(CLI::App* cmd, RhoArgs& a)
{
    auto* r = cmd->add_option("--rho", a.rho, "Certainty for features without a schema rho");
    auto* m = cmd->add_option("--rho-mean", a.rho_mean, "Draw rho per column from N(mean, 0.2), clamped");
    r->excludes(m);
    cmd->add_option("--rho-floor", a.rho_floor, "Lower clamp for --rho-mean draws")->capture_default_str();
}

void add_budget_options(CLI::App* cmd, BudgetArgs& a)
{
    auto* l = cmd->add_option("--lambda", a.lambda, "Likelihood level in (0, 1]; epsilon = -n ln(lambda)");
    auto* e = cmd->add_option("--epsilon", a.epsilon, "Explicit uncertainty budget");
    l->excludes(e);
    cmd->add_option("--gamma", a.gamma, "Use this cost in every cell instead of calibrating from rho");
}

bool needs_rho(const BudgetArgs& b) { return !b.gamma; }

RhoMatrix resolve_rho(const Dataset& data, const RhoArgs& a, std::uint64_t seed)
{
    if (a.rho_mean) return RhoMatrix::harness(data, *a.rho_mean, seed, 0.2, a.rho_floor);
    return RhoMatrix::from_schema(data, a.rho);
}

UncertaintyModel resolve_model(const Dataset& data, const RhoArgs& r, const BudgetArgs& b, std::uint64_t seed)
{
    if (!b.lambda && !b.epsilon) throw ValidationError("one of --lambda or --epsilon is required");
    const double eps = b.epsilon ? *b.epsilon : budget_from_lambda(*b.lambda, data.num_rows());
    if (b.gamma) {
        if (!(*b.gamma >= 0.0)) throw ValidationError("--gamma must be nonnegative");
        return UncertaintyModel::uniform(data, *b.gamma, eps);
    }
    return calibrate_with_epsilon(data, resolve_rho(data, r, seed), eps);
}

std::unique_ptr<MainSolver> make_backend(const std::string& name, const std::string& external_cmd,
                                         std::size_t max_trees)
{
    if (name == "builtin-enum") return std::make_unique<EnumerativeSolver>(max_trees);
    if (name == "external") {
        if (external_cmd.empty()) throw ValidationError("--backend external needs --external-cmd");
        return std::make_unique<ExternalCommandSolver>(external_cmd);
    }
    throw ValidationError("unknown backend '" + name + "' (expected builtin-enum or external)");
}

int report_error(ErrorKind kind, const std::string& message)
{
    nlohmann::ordered_json err;
    err["error"] = {{"kind", to_string(kind)}, {"message", message}};
    std::cerr << err.dump() << "\n";
    switch (kind) {
    case ErrorKind::Validation: return kExitValidation;
    case ErrorKind::ResourceCap: return kExitResourceCap;
    case ErrorKind::Backend: return kExitBackend;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Robust optimal classification trees under integer and categorical covariate shifts"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "robtree 0.1.0");

    // train -----------------------------------------------------------------
    DataArgs train_data;
    RhoArgs train_rho;
    BudgetArgs train_budget;
    int depth = 1;
    std::string mode = "robust";
    double R = 1.0;
    std::uint64_t seed = 0;
    std::string backend = "builtin-enum";
    std::string external_cmd;
    double time_cap = kInf;
    std::size_t iter_cap = 10'000;
    std::size_t max_trees = 5'000'000;
    bool no_strengthen = false;
    std::string budget_mode = "shared";
    std::string tree_out;
    std::string report_out;
    std::string certificate_out;
    bool report_timing = false;

    auto* train = app.add_subcommand("train", "Train a tree and write its blob and a solve report");
    add_data_options(train, train_data);
    add_rho_options(train, train_rho);
    add_budget_options(train, train_budget);
    train->add_option("--depth", depth, "Maximum tree depth")->capture_default_str();
    train->add_option("--mode", mode, "robust | nonrobust-regularized | proxy")
        ->check(CLI::IsMember({"robust", "nonrobust-regularized", "proxy"}))
        ->capture_default_str();
    train->add_option("--R", R, "Accuracy weight in [0, 1]; branch penalty is 1 - R")->capture_default_str();
    train->add_option("--seed", seed, "Seed for --rho-mean draws")->capture_default_str();
    train->add_option("--backend", backend, "builtin-enum | external")->capture_default_str();
    train->add_option("--external-cmd", external_cmd, "Command run as: <cmd> <model.json> <solution.json>");
    train->add_option("--time-cap", time_cap, "Wall-clock cap in seconds");
    train->add_option("--iter-cap", iter_cap, "Cutting-plane iteration cap")->capture_default_str();
    train->add_option("--max-trees", max_trees, "Enumeration cap for builtin solvers")->capture_default_str();
    train->add_flag("--no-strengthen", no_strengthen, "Only add aggregate cuts");
    train->add_option("--budget-mode", budget_mode, "Proxy mode budget: shared | per-sample")->capture_default_str();
    train->add_option("--out", tree_out, "Tree blob path")->required();
    train->add_option("--report", report_out, "Report path (default stdout)");
    train->add_option("--certificate", certificate_out, "Write the final adversary certificate here");
    train->add_flag("--report-timing", report_timing, "Include wall time in the report");

    // evaluate --------------------------------------------------------------
    DataArgs eval_data;
    RhoArgs eval_rho;
    BudgetArgs eval_budget;
    std::string tree_path;
    std::string baseline_path;
    EvaluationOptions eval_opts;
    std::string eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "Score a tree on K randomly perturbed copies of a test set");
    add_data_options(evaluate, eval_data);
    add_rho_options(evaluate, eval_rho);
    add_budget_options(evaluate, eval_budget);
    evaluate->add_option("--tree", tree_path, "Tree blob")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--baseline", baseline_path, "Non-robust tree blob for the price of robustness")
        ->check(CLI::ExistingFile);
    evaluate->add_option("--K", eval_opts.K, "Number of perturbed test sets")->capture_default_str();
    evaluate->add_option("--seed", eval_opts.seed, "Base seed")->capture_default_str();
    evaluate->add_option("--threads", eval_opts.threads, "Worker threads")->capture_default_str();
    evaluate->add_option("--rho-offset", eval_opts.rho_offset, "Shift every rho by this amount")->capture_default_str();
    evaluate->add_option("--rho-radius", eval_opts.rho_radius, "Redraw rho per column within this radius")
        ->capture_default_str();
    evaluate->add_option("--out", eval_out, "Report path (default stdout)");

    // calibrate -------------------------------------------------------------
    DataArgs cal_data;
    RhoArgs cal_rho;
    std::optional<double> cal_lambda, cal_epsilon;
    std::uint64_t cal_seed = 0;
    std::string cal_out;
    auto* cal = app.add_subcommand("calibrate", "Report per-cell costs and the budget implied by rho and lambda");
    add_data_options(cal, cal_data);
    add_rho_options(cal, cal_rho);
    auto* cl = cal->add_option("--lambda", cal_lambda, "Likelihood level in (0, 1]");
    cal->add_option("--epsilon", cal_epsilon, "Explicit budget")->excludes(cl);
    cal->add_option("--seed", cal_seed, "Seed for --rho-mean draws")->capture_default_str();
    cal->add_option("--out", cal_out, "Report path (default stdout)");

    // export ----------------------------------------------------------------
    std::string export_tree;
    std::string export_format = "text";
    std::string export_out;
    auto* exp = app.add_subcommand("export", "Render a tree blob as indented text or Graphviz DOT");
    exp->add_option("--tree", export_tree, "Tree blob")->required()->check(CLI::ExistingFile);
    exp->add_option("--format", export_format, "text | dot")
        ->check(CLI::IsMember({"text", "dot"}))
        ->capture_default_str();
    exp->add_option("--out", export_out, "Output path (default stdout)");

    // split -----------------------------------------------------------------
    DataArgs split_data;
    double fraction = 0.8;
    std::uint64_t split_seed = 0;
    std::string train_prefix, test_prefix;
    auto* split = app.add_subcommand("split", "Shuffle and split a dataset into train and test files");
    add_data_options(split, split_data);
    split->add_option("--fraction", fraction, "Training fraction")->capture_default_str();
    split->add_option("--seed", split_seed, "Shuffle seed")->capture_default_str();
    split->add_option("--train-out", train_prefix, "Prefix for <prefix>.csv and <prefix>.schema.json")->required();
    split->add_option("--test-out", test_prefix, "Prefix for the test side")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitValidation;
    }

    try {
        if (*train) {
            const auto data = load_dataset(train_data.data, train_data.schema);
            SolveOptions opts;
            opts.strengthen = !no_strengthen;
            opts.iteration_cap = iter_cap;
            opts.time_cap_seconds = time_cap;
            opts.R = R;
            opts.max_trees = max_trees;
            SolveReport report;
            std::optional<UncertaintyModel> model;
            if (mode == "robust") {
                model = resolve_model(data, train_rho, train_budget, seed);
                auto solver = make_backend(backend, external_cmd, max_trees);
                report = cutting_plane_solve(data, *model, depth, *solver, opts);
            } else if (mode == "nonrobust-regularized") {
                auto solver = make_backend(backend, external_cmd, max_trees);
                report = nonrobust_regularized_solve(data, depth, R, *solver, opts);
                model = UncertaintyModel::uniform(data, 1.0, 0.0);
            } else {
                model = resolve_model(data, train_rho, train_budget, seed);
                report = proxy_solve(data, *model, depth, parse_budget_mode(budget_mode), opts);
            }
            emit(tree_out, serialize_tree(report.tree, data.feature_names(), data.label_names()));
            emit(report_out, report_json(report, report_timing));
            if (!certificate_out.empty())
                emit(certificate_out, certificate_json(worst_case_correct(report.tree, data, *model), data));
            if (report.status != SolveStatus::Optimal)
                return report_error(ErrorKind::ResourceCap,
                                    std::string("solve stopped at ") + to_string(report.status) +
                                        "; best incumbent and bound were written");
            return 0;
        }
        if (*evaluate) {
            const auto blob = deserialize_tree(read_text(tree_path));
            auto test = load_dataset(eval_data.data, eval_data.schema);
            if (test.feature_names() != blob.feature_names)
                throw ValidationError("test data columns do not match the features the tree was trained on");
            test = test.relabel(blob.label_names);
            std::optional<TreeEncoding> baseline;
            if (!baseline_path.empty()) {
                auto b = deserialize_tree(read_text(baseline_path));
                if (b.feature_names != blob.feature_names || b.label_names != blob.label_names)
                    throw ValidationError("baseline tree was trained on a different schema");
                baseline = b.tree;
            }
            const auto rho = resolve_rho(test, eval_rho, eval_opts.seed);
            std::optional<UncertaintyModel> model;
            if (eval_budget.lambda || eval_budget.epsilon) model = resolve_model(test, eval_rho, eval_budget, eval_opts.seed);
            const auto rep = evaluate_under_shifts(blob.tree, test, rho, eval_opts, baseline, model ? &*model : nullptr);
            emit(eval_out, evaluation_json(rep));
            return 0;
        }
        if (*cal) {
            const auto data = load_dataset(cal_data.data, cal_data.schema);
            if (!cal_lambda && !cal_epsilon) throw ValidationError("one of --lambda or --epsilon is required");
            const auto rho = resolve_rho(data, cal_rho, cal_seed);
            const auto model = cal_lambda ? calibrate(data, rho, *cal_lambda) : calibrate_with_epsilon(data, rho, *cal_epsilon);
            emit(cal_out, calibration_report(data, rho, model, cal_lambda));
            return 0;
        }
        if (*exp) {
            const auto blob = deserialize_tree(read_text(export_tree));
            emit(export_out, export_format == "dot" ? render_dot(blob.tree, blob.feature_names, blob.label_names)
                                                    : render_text(blob.tree, blob.feature_names, blob.label_names));
            return 0;
        }
        if (*split) {
            const auto data = load_dataset(split_data.data, split_data.schema);
            const auto [tr, te] = train_test_split(data, fraction, split_seed);
            export_dataset(tr, train_prefix + ".csv", train_prefix + ".schema.json");
            export_dataset(te, test_prefix + ".csv", test_prefix + ".schema.json");
            return 0;
        }
    } catch (const Error& e) {
        return report_error(e.kind(), e.what());
    } catch (const std::exception& e) {
        return report_error(ErrorKind::Validation, e.what());
    }
    return 0;
}
