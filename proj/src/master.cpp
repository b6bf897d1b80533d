#include "robtree/master.hpp"

#include "robtree/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace robtree {

using json = nlohmann::ordered_json;

namespace {

Cut empty_cut(Cut::Kind kind, const Topology& topo, const ThresholdMap& th, std::size_t num_labels)
{
    Cut c;
    c.kind = kind;
    c.w_coef.assign(topo.num_nodes() + 1, std::vector<int>(num_labels, 0));
    c.b_coef.assign(topo.num_internal() + 1, std::vector<int>(th.total(), 0));
    return c;
}

/// Adds one sample's cut-set terms evaluated at the perturbed row xt.
void accumulate(Cut& cut, const DecisionCutSet& q, std::size_t y, std::span<const Value> xt, const Topology& topo,
                const ThresholdMap& th)
{
    for (const auto& e : q.edges) {
        if (e.from == kSourceNode) {
            cut.constant += 1.0;
        } else if (e.to == kSinkNode) {
            cut.w_coef[e.from][y] += 1;
        } else {
            const bool left = e.to == Topology::left(e.from);
            for (std::size_t f = 0; f < th.num_features(); ++f) {
                const auto& thetas = th.of(f);
                for (std::size_t j = 0; j < thetas.size(); ++j) {
                    const bool pass = left ? xt[f] <= thetas[j] : xt[f] >= thetas[j] + 1;
                    if (pass) cut.b_coef[e.from][th.offset(f) + j] += 1;
                }
            }
        }
    }
    (void)topo;
}

double elapsed_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void check_budget(int depth, const ThresholdMap& th, std::size_t num_labels, std::size_t max_trees)
{
    const auto count = count_trees(depth, th.total(), num_labels);
    if (count > max_trees)
        throw ResourceCapError("enumeration of " + (count == SIZE_MAX ? std::string("more than 2^64") : std::to_string(count)) +
                               " trees exceeds the cap of " + std::to_string(max_trees) +
                               "; use an external backend or a smaller depth");
}

} // namespace

double Cut::rhs_at(const TreeEncoding& tree, const ThresholdMap& thresholds) const
{
    double v = constant;
    const auto& nodes = tree.nodes();
    for (std::size_t n = 1; n < nodes.size(); ++n) {
        const auto& s = nodes[n];
        if (s.role == NodeRole::Predict)
            v += w_coef[n][s.label];
        else if (s.role == NodeRole::Branch)
            v += b_coef[n][thresholds.offset(s.feature) + thresholds.index_of(s.feature, s.threshold)];
    }
    return v;
}

Cut build_cut_global(const AdversaryCertificate& cert, const Dataset& data, const ThresholdMap& thresholds, int depth)
{
    const Topology topo(depth);
    Cut cut = empty_cut(Cut::Kind::Global, topo, thresholds, data.num_labels());
    std::vector<Value> xt(data.num_features());
    for (std::size_t i = 0; i < data.num_rows(); ++i) {
        auto x = data.row(i);
        auto xi = cert.xi_row(i);
        for (std::size_t f = 0; f < xt.size(); ++f) xt[f] = x[f] + xi[f];
        accumulate(cut, cutset_from_path(cert.paths[i], topo), data.label(i), xt, topo, thresholds);
    }
    return cut;
}

Cut build_cut_single(const Dataset& data, std::size_t i, const TreeEncoding& tree, const ThresholdMap& thresholds)
{
    const auto trace = route(tree, data.row(i));
    if (trace.label == data.label(i))
        throw ValidationError("per-sample cut requested for row " + std::to_string(i) +
                              ", which the tree classifies correctly");
    Cut cut = empty_cut(Cut::Kind::PerSample, tree.topology(), thresholds, data.num_labels());
    cut.sample = i;
    accumulate(cut, cutset_from_path(DecisionPath{trace.nodes}, tree.topology()), data.label(i), data.row(i),
               tree.topology(), thresholds);
    return cut;
}

double hypograph_value(const MainProblem& problem, const TreeEncoding& tree)
{
    const double n = static_cast<double>(problem.num_samples);
    double global = n;
    std::vector<double> per(problem.num_samples, 1.0);
    for (const auto& c : problem.cuts) {
        const double r = c.rhs_at(tree, problem.thresholds);
        if (c.kind == Cut::Kind::Global)
            global = std::min(global, r);
        else
            per[c.sample] = std::min(per[c.sample], r);
    }
    double sum = 0.0;
    for (double p : per) sum += std::clamp(p, 0.0, 1.0);
    return std::clamp(std::min(sum, global), 0.0, n);
}

double main_objective(const MainProblem& problem, const TreeEncoding& tree)
{
    return problem.accuracy_weight * hypograph_value(problem, tree) -
           problem.branch_penalty * static_cast<double>(tree.num_branch_nodes());
}

// ---------------------------------------------------------------------------

MainSolution EnumerativeSolver::solve(const MainProblem& problem)
{
    check_budget(problem.depth, problem.thresholds, problem.num_labels, max_trees_);
    const double n = static_cast<double>(problem.num_samples);
    std::vector<const Cut*> global, single;
    for (const auto& c : problem.cuts) (c.kind == Cut::Kind::Global ? global : single).push_back(&c);

    std::optional<MainSolution> best;
    std::vector<double> per(problem.num_samples);
    for_each_tree(problem.depth, problem.thresholds, problem.num_labels, [&](const TreeEncoding& tree) {
        const double pen = problem.branch_penalty * static_cast<double>(tree.num_branch_nodes());
        auto beats = [&](double t) { return !best || problem.accuracy_weight * t - pen > best->objective + 1e-9; };
        double t = n;
        if (!beats(t)) return true;
        for (const Cut* c : global) {
            t = std::min(t, c->rhs_at(tree, problem.thresholds));
            if (!beats(t)) return true;
        }
        if (!single.empty()) {
            std::fill(per.begin(), per.end(), 1.0);
            for (const Cut* c : single) per[c->sample] = std::min(per[c->sample], c->rhs_at(tree, problem.thresholds));
            double sum = 0.0;
            for (double p : per) sum += std::clamp(p, 0.0, 1.0);
            t = std::min(t, sum);
        }
        t = std::clamp(t, 0.0, n);
        if (beats(t)) best = MainSolution{tree, problem.accuracy_weight * t - pen, t};
        return true;
    });
    if (!best) throw BackendError("enumerative backend found no tree (empty label set?)");
    return *best;
}

// ---------------------------------------------------------------------------

std::string LinearModel::to_json() const
{
    json root;
    root["format"] = "robtree-milp";
    root["version"] = 1;
    root["sense"] = "max";
    json vars = json::array();
    for (const auto& v : variables)
        vars.push_back({{"name", v.name}, {"type", v.binary ? "binary" : "continuous"}, {"lb", v.lb}, {"ub", v.ub}});
    root["variables"] = std::move(vars);
    json obj_terms = json::array();
    for (const auto& [idx, coef] : objective) obj_terms.push_back(json::array({idx, coef}));
    root["objective"] = {{"constant", objective_constant}, {"terms", std::move(obj_terms)}};
    json cons = json::array();
    for (const auto& c : constraints) {
        json terms = json::array();
        for (const auto& [idx, coef] : c.terms) terms.push_back(json::array({idx, coef}));
        cons.push_back({{"name", c.name}, {"terms", std::move(terms)}, {"sense", c.sense}, {"rhs", c.rhs}});
    }
    root["constraints"] = std::move(cons);
    return root.dump();
}

namespace {

/// Variable index layout of the linear model.
struct Layout {
    Topology topo;
    std::size_t total_thresholds;
    std::size_t num_labels;
    std::size_t num_samples;

    std::size_t b(std::size_t n, std::size_t j) const { return (n - 1) * total_thresholds + j; }
    std::size_t v(std::size_t n) const { return topo.num_internal() * total_thresholds + (n - 1); }
    std::size_t w(std::size_t n, std::size_t k) const
    {
        return topo.num_internal() * total_thresholds + topo.num_nodes() + (n - 1) * num_labels + k;
    }
    std::size_t t(std::size_t i) const
    {
        return topo.num_internal() * total_thresholds + topo.num_nodes() * (1 + num_labels) + i;
    }
    std::size_t size() const { return t(num_samples); }
};

Layout layout_of(const MainProblem& p)
{
    return Layout{Topology(p.depth), p.thresholds.total(), p.num_labels, p.num_samples};
}

} // namespace

LinearModel build_linear_model(const MainProblem& problem)
{
    const Layout L = layout_of(problem);
    const auto& topo = L.topo;
    const auto& th = problem.thresholds;
    LinearModel m;
    m.variables.resize(L.size());
    for (std::size_t n = 1; n <= topo.num_internal(); ++n)
        for (std::size_t f = 0; f < th.num_features(); ++f)
            for (std::size_t j = 0; j < th.of(f).size(); ++j)
                m.variables[L.b(n, th.offset(f) + j)].name =
                    "b_" + std::to_string(n) + "_" + std::to_string(f) + "_" + std::to_string(th.of(f)[j]);
    for (std::size_t n = 1; n <= topo.num_nodes(); ++n) {
        m.variables[L.v(n)].name = "v_" + std::to_string(n);
        for (std::size_t k = 0; k < L.num_labels; ++k)
            m.variables[L.w(n, k)].name = "w_" + std::to_string(n) + "_" + std::to_string(k);
    }
    for (std::size_t i = 0; i < L.num_samples; ++i) {
        auto& var = m.variables[L.t(i)];
        var.name = "t_" + std::to_string(i);
        var.binary = false;
    }

    for (std::size_t i = 0; i < L.num_samples; ++i)
        if (problem.accuracy_weight != 0.0) m.objective.push_back({L.t(i), problem.accuracy_weight});
    if (problem.branch_penalty != 0.0)
        for (std::size_t n = 1; n <= topo.num_internal(); ++n)
            for (std::size_t j = 0; j < th.total(); ++j) m.objective.push_back({L.b(n, j), -problem.branch_penalty});

    for (std::size_t n = 1; n <= topo.num_nodes(); ++n) {
        LinearModel::Constraint c;
        const bool internal = !topo.is_leaf(n);
        c.name = (internal ? "internal_" : "leaf_") + std::to_string(n);
        if (internal)
            for (std::size_t j = 0; j < th.total(); ++j) c.terms.push_back({L.b(n, j), 1.0});
        c.terms.push_back({L.v(n), 1.0});
        for (auto a : topo.ancestors(n)) c.terms.push_back({L.v(a), 1.0});
        c.sense = "==";
        c.rhs = 1.0;
        m.constraints.push_back(std::move(c));
    }
    for (std::size_t n = 1; n <= topo.num_nodes(); ++n) {
        LinearModel::Constraint c;
        c.name = "label_" + std::to_string(n);
        c.terms.push_back({L.v(n), 1.0});
        for (std::size_t k = 0; k < L.num_labels; ++k) c.terms.push_back({L.w(n, k), -1.0});
        c.sense = "==";
        c.rhs = 0.0;
        m.constraints.push_back(std::move(c));
    }
    {
        LinearModel::Constraint c;
        c.name = "t_total";
        for (std::size_t i = 0; i < L.num_samples; ++i) c.terms.push_back({L.t(i), 1.0});
        c.sense = "<=";
        c.rhs = static_cast<double>(L.num_samples);
        m.constraints.push_back(std::move(c));
    }
    std::size_t cut_id = 0;
    for (const auto& cut : problem.cuts) {
        LinearModel::Constraint c;
        c.name = "cut_" + std::to_string(cut_id++);
        if (cut.kind == Cut::Kind::Global)
            for (std::size_t i = 0; i < L.num_samples; ++i) c.terms.push_back({L.t(i), 1.0});
        else
            c.terms.push_back({L.t(cut.sample), 1.0});
        for (std::size_t n = 1; n <= topo.num_nodes(); ++n)
            for (std::size_t k = 0; k < L.num_labels; ++k)
                if (cut.w_coef[n][k]) c.terms.push_back({L.w(n, k), -static_cast<double>(cut.w_coef[n][k])});
        for (std::size_t n = 1; n <= topo.num_internal(); ++n)
            for (std::size_t j = 0; j < th.total(); ++j)
                if (cut.b_coef[n][j]) c.terms.push_back({L.b(n, j), -static_cast<double>(cut.b_coef[n][j])});
        c.sense = "<=";
        c.rhs = cut.constant;
        m.constraints.push_back(std::move(c));
    }
    return m;
}

MainSolution decode_solution(const MainProblem& problem, const std::string& solution_json)
{
    json root;
    try {
        root = json::parse(solution_json);
    } catch (const json::parse_error& e) {
        throw BackendError(std::string("backend returned malformed JSON: ") + e.what());
    }
    const auto status = root.value("status", std::string{});
    if (status != "optimal") throw BackendError("backend status '" + status + "' (expected optimal)");
    std::vector<double> values;
    try {
        values = root.at("values").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("backend solution lacks a numeric 'values' array: ") + e.what());
    }
    const Layout L = layout_of(problem);
    if (values.size() != L.size())
        throw BackendError("backend returned " + std::to_string(values.size()) + " values, expected " +
                           std::to_string(L.size()));
    auto bit = [&](std::size_t idx) { return values[idx] > 0.5 ? 1 : 0; };
    EncodingIndicators enc;
    enc.depth = problem.depth;
    const std::size_t nn = L.topo.num_nodes();
    enc.v.assign(nn + 1, 0);
    enc.w.assign(nn + 1, std::vector<int>(L.num_labels, 0));
    enc.b.assign(L.topo.num_internal() + 1, std::vector<int>(L.total_thresholds, 0));
    for (std::size_t n = 1; n <= nn; ++n) {
        enc.v[n] = bit(L.v(n));
        for (std::size_t k = 0; k < L.num_labels; ++k) enc.w[n][k] = bit(L.w(n, k));
        if (n <= L.topo.num_internal())
            for (std::size_t j = 0; j < L.total_thresholds; ++j) enc.b[n][j] = bit(L.b(n, j));
    }
    try {
        auto tree = TreeEncoding::from_indicators(enc, problem.thresholds, problem.num_labels);
        const double t = hypograph_value(problem, tree);
        return MainSolution{tree, main_objective(problem, tree), t};
    } catch (const ValidationError& e) {
        throw BackendError(std::string("backend solution is not a valid tree: ") + e.what());
    }
}

MainSolution LinearModelSolver::solve(const MainProblem& problem)
{
    const auto model = build_linear_model(problem);
    return decode_solution(problem, solve_model(model.to_json()));
}

std::string ExternalCommandSolver::solve_model(const std::string& model_json)
{
    namespace fs = std::filesystem;
    std::string tmpl = (fs::temp_directory_path() / "robtree-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw BackendError("cannot create a temporary directory for the external backend");
    const fs::path dir(tmpl);
    const auto model_path = dir / "model.json";
    const auto solution_path = dir / "solution.json";
    auto cleanup = [&] {
        std::error_code ec;
        fs::remove_all(dir, ec);
    };
    {
        std::ofstream out(model_path);
        out << model_json;
    }
    auto quote = [](const std::string& s) {
        std::string q = "'";
        for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
        return q + "'";
    };
    const std::string cmd = command_ + " " + quote(model_path.string()) + " " + quote(solution_path.string());
    const int rc = std::system(cmd.c_str());
    if (rc != 0) {
        cleanup();
        throw BackendError("external backend command failed with status " + std::to_string(rc) + ": " + command_);
    }
    std::ifstream in(solution_path);
    if (!in) {
        cleanup();
        throw BackendError("external backend wrote no solution file");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    cleanup();
    return ss.str();
}

// ---------------------------------------------------------------------------

const char* to_string(SolveStatus status) noexcept
{
    switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::IterationCap: return "iteration-cap";
    case SolveStatus::TimeCap: return "time-cap";
    }
    return "unknown";
}

BudgetMode parse_budget_mode(const std::string& text)
{
    if (text == "shared") return BudgetMode::Shared;
    if (text == "per-sample") return BudgetMode::PerSample;
    throw ValidationError("unknown budget mode '" + text + "' (expected shared or per-sample)");
}

const char* to_string(BudgetMode mode) noexcept
{
    return mode == BudgetMode::Shared ? "shared" : "per-sample";
}

std::string report_json(const SolveReport& r, bool include_timing)
{
    json root;
    root["mode"] = r.mode;
    root["backend"] = r.backend;
    root["status"] = to_string(r.status);
    root["objective"] = r.objective;
    root["bound"] = r.bound;
    root["worst_case_correct"] = r.worst_case_correct;
    root["nominal_correct"] = r.nominal_correct;
    root["num_samples"] = r.num_samples;
    root["branch_nodes"] = r.branch_nodes;
    root["depth"] = r.tree.depth();
    root["epsilon"] = r.epsilon;
    root["R"] = r.R;
    root["iterations"] = r.iterations;
    root["global_cuts"] = r.global_cuts;
    root["per_sample_cuts"] = r.per_sample_cuts;
    if (include_timing) root["wall_seconds"] = r.wall_seconds;
    return root.dump(2) + "\n";
}

namespace {

void finish_report(SolveReport& r, const Dataset& data, const UncertaintyModel& model,
                   std::chrono::steady_clock::time_point start)
{
    r.num_samples = data.num_rows();
    r.epsilon = model.epsilon();
    r.worst_case_correct = worst_case_correct(r.tree, data, model).value;
    r.nominal_correct = nominal_correct(r.tree, data);
    r.branch_nodes = r.tree.num_branch_nodes();
    r.wall_seconds = elapsed_since(start);
}

void check_options(const SolveOptions& o)
{
    if (!(o.R >= 0.0 && o.R <= 1.0)) throw ValidationError("R must lie in [0, 1]");
    if (o.iteration_cap == 0) throw ValidationError("iteration cap must be positive");
}

} // namespace

SolveReport cutting_plane_solve(const Dataset& data, const UncertaintyModel& model, int depth, MainSolver& backend,
                                const SolveOptions& options)
{
    check_options(options);
    const auto start = std::chrono::steady_clock::now();
    MainProblem problem;
    problem.depth = Topology(depth).depth();
    problem.thresholds = compute_thresholds(data);
    problem.num_labels = data.num_labels();
    problem.num_samples = data.num_rows();
    problem.accuracy_weight = options.R;
    problem.branch_penalty = 1.0 - options.R;

    SolveReport report;
    report.mode = "robust";
    report.backend = backend.name();
    report.R = options.R;
    std::optional<TreeEncoding> best;
    double best_value = -kInf;
    double bound = kInf;
    report.status = SolveStatus::IterationCap;

    while (true) {
        if (report.iterations >= options.iteration_cap) {
            report.status = SolveStatus::IterationCap;
            break;
        }
        if (report.iterations > 0 && elapsed_since(start) > options.time_cap_seconds) {
            report.status = SolveStatus::TimeCap;
            break;
        }
        auto sol = backend.solve(problem);
        ++report.iterations;
        bound = std::min(bound, sol.objective);
        auto cert = worst_case_correct(sol.tree, data, model);
        const double value = options.R * static_cast<double>(cert.value) -
                             (1.0 - options.R) * static_cast<double>(sol.tree.num_branch_nodes());
        const bool done = sol.t_sum <= static_cast<double>(cert.value) + options.tol;
        if (value > best_value + 1e-9 || (done && value >= best_value - 1e-9)) {
            best_value = value;
            best = sol.tree;
        }
        report.certificates.push_back(cert);
        if (done) {
            report.status = SolveStatus::Optimal;
            bound = best_value;
            break;
        }
        bool added = false;
        auto add = [&](Cut c) {
            if (std::find(problem.cuts.begin(), problem.cuts.end(), c) != problem.cuts.end()) return;
            (c.kind == Cut::Kind::Global ? report.global_cuts : report.per_sample_cuts)++;
            problem.cuts.push_back(std::move(c));
            added = true;
        };
        if (options.strengthen) {
            for (std::size_t i = 0; i < data.num_rows(); ++i)
                if (route(sol.tree, data.row(i)).label != data.label(i))
                    add(build_cut_single(data, i, sol.tree, problem.thresholds));
        }
        add(build_cut_global(cert, data, problem.thresholds, depth));
        if (!added)
            throw BackendError("backend returned a tree that violates an existing cut (inexact backend?)");
    }
    report.tree = *best;
    report.objective = best_value;
    report.bound = bound;
    finish_report(report, data, model, start);
    return report;
}

SolveReport exhaustive_solve(const Dataset& data, const UncertaintyModel& model, int depth, const SolveOptions& options)
{
    check_options(options);
    const auto start = std::chrono::steady_clock::now();
    const auto th = compute_thresholds(data);
    check_budget(depth, th, data.num_labels(), options.max_trees);
    std::optional<TreeEncoding> best;
    double best_value = -kInf;
    for_each_tree(depth, th, data.num_labels(), [&](const TreeEncoding& tree) {
        const double value = options.R * static_cast<double>(worst_case_correct(tree, data, model).value) -
                             (1.0 - options.R) * static_cast<double>(tree.num_branch_nodes());
        if (value > best_value + 1e-9) {
            best_value = value;
            best = tree;
        }
        return true;
    });
    SolveReport report;
    report.mode = "exhaustive";
    report.backend = "builtin-enum";
    report.R = options.R;
    report.tree = *best;
    report.objective = report.bound = best_value;
    finish_report(report, data, model, start);
    return report;
}

SolveReport nonrobust_regularized_solve(const Dataset& data, int depth, double R, MainSolver& backend,
                                        const SolveOptions& options)
{
    auto opts = options;
    opts.R = R;
    const auto model = UncertaintyModel::uniform(data, 1.0, 0.0);
    auto report = cutting_plane_solve(data, model, depth, backend, opts);
    report.mode = "nonrobust-regularized";
    return report;
}

SolveReport proxy_solve(const Dataset& data, const UncertaintyModel& model, int depth, BudgetMode mode,
                        const SolveOptions& options)
{
    const auto start = std::chrono::steady_clock::now();
    const auto th = compute_thresholds(data);
    check_budget(depth, th, data.num_labels(), options.max_trees);
    const double budget =
        mode == BudgetMode::Shared ? model.epsilon() : model.epsilon() / static_cast<double>(data.num_rows());
    std::optional<TreeEncoding> best;
    double best_value = -1.0;
    for_each_tree(depth, th, data.num_labels(), [&](const TreeEncoding& tree) {
        const double value = static_cast<double>(nominal_correct(tree, data));
        if (value <= best_value) return true;
        for (std::size_t i = 0; i < data.num_rows(); ++i)
            if (!(min_cost_to_reroute(data, i, tree, model) > budget + kBudgetTol)) return true;
        best_value = value;
        best = tree;
        return true;
    });
    SolveReport report;
    report.mode = std::string("proxy-") + to_string(mode);
    report.backend = "builtin-enum";
    report.tree = *best;
    report.objective = report.bound = best_value;
    finish_report(report, data, model, start);
    return report;
}

} // namespace robtree
