#pragma once

#include "robtree/adversary.hpp"
#include "robtree/data.hpp"
#include "robtree/tree.hpp"
#include "robtree/uncertainty.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace robtree {

/// A hypograph constraint with (q, xi) frozen:
///   T <= constant + sum w_coef[n][k] w_nk + sum b_coef[n][j] b_nj
/// where T is sum_i t_i (global) or t_sample (per-sample). All certificate
/// terms are aggregated into integer counts.
struct Cut {
    enum class Kind { Global, PerSample };

    Kind kind = Kind::Global;
    std::size_t sample = 0;
    double constant = 0.0;
    std::vector<std::vector<int>> w_coef; // [node 0..num_nodes][label]
    std::vector<std::vector<int>> b_coef; // [internal node 0..num_internal][flat threshold]

    double rhs_at(const TreeEncoding& tree, const ThresholdMap& thresholds) const;
    bool operator==(const Cut&) const = default;
};

/// Aggregates the certificate's per-sample cut-sets and perturbed rows.
Cut build_cut_global(const AdversaryCertificate& cert, const Dataset& data, const ThresholdMap& thresholds,
                     int depth);
/// Cut on t_i from the nominal path with zero shift; the sample must be
/// misclassified by `tree`.
Cut build_cut_single(const Dataset& data, std::size_t i, const TreeEncoding& tree, const ThresholdMap& thresholds);

/// Relaxed main problem: S membership, t_i in [0, 1], accumulated cuts.
/// Objective: accuracy_weight * sum_i t_i - branch_penalty * (#branch nodes).
struct MainProblem {
    int depth = 0;
    ThresholdMap thresholds;
    std::size_t num_labels = 2;
    std::size_t num_samples = 0;
    double accuracy_weight = 1.0;
    double branch_penalty = 0.0;
    std::vector<Cut> cuts;
};

/// Largest sum_i t_i the cut pool allows for `tree`.
double hypograph_value(const MainProblem& problem, const TreeEncoding& tree);
double main_objective(const MainProblem& problem, const TreeEncoding& tree);

struct MainSolution {
    TreeEncoding tree;
    double objective = 0.0;
    /// sum_i t_i at the solution.
    double t_sum = 0.0;
};

/// Exact maximizer of a MainProblem. Implementations keep no state between
/// solve() calls.
class MainSolver {
public:
    virtual ~MainSolver() = default;
    virtual MainSolution solve(const MainProblem& problem) = 0;
    virtual std::string name() const = 0;
};

/// Enumerates S in canonical order; the first maximizer wins.
class EnumerativeSolver final : public MainSolver {
public:
    explicit EnumerativeSolver(std::size_t max_trees = 5'000'000) : max_trees_(max_trees) {}
    MainSolution solve(const MainProblem& problem) override;
    std::string name() const override { return "builtin-enum"; }

private:
    std::size_t max_trees_;
};

/// Plain MILP in JSON form ("robtree-milp" version 1), maximization.
struct LinearModel {
    struct Variable {
        std::string name;
        bool binary = true;
        double lb = 0.0;
        double ub = 1.0;
    };
    struct Constraint {
        std::string name;
        std::vector<std::pair<std::size_t, double>> terms;
        std::string sense; // "<=", ">=" or "=="
        double rhs = 0.0;
    };

    std::vector<Variable> variables;
    double objective_constant = 0.0;
    std::vector<std::pair<std::size_t, double>> objective;
    std::vector<Constraint> constraints;

    std::string to_json() const;
};

LinearModel build_linear_model(const MainProblem& problem);
/// Reads {"status": "optimal", "values": [...]} and rebuilds the tree.
MainSolution decode_solution(const MainProblem& problem, const std::string& solution_json);

/// Serializes the main problem and hands it to an exact MILP solver.
class LinearModelSolver : public MainSolver {
public:
    MainSolution solve(const MainProblem& problem) override;

protected:
    /// Model JSON in, solution JSON out.
    virtual std::string solve_model(const std::string& model_json) = 0;
};

class CallbackSolver final : public LinearModelSolver {
public:
    using Callback = std::function<std::string(const std::string&)>;
    explicit CallbackSolver(Callback fn, std::string name = "callback") : fn_(std::move(fn)), name_(std::move(name)) {}
    std::string name() const override { return name_; }

protected:
    std::string solve_model(const std::string& model_json) override { return fn_(model_json); }

private:
    Callback fn_;
    std::string name_;
};

/// Runs `<command> <model.json> <solution.json>` per solve.
class ExternalCommandSolver final : public LinearModelSolver {
public:
    explicit ExternalCommandSolver(std::string command) : command_(std::move(command)) {}
    std::string name() const override { return "external"; }

protected:
    std::string solve_model(const std::string& model_json) override;

private:
    std::string command_;
};

enum class SolveStatus { Optimal, IterationCap, TimeCap };
const char* to_string(SolveStatus status) noexcept;

struct SolveOptions {
    bool strengthen = true;
    std::size_t iteration_cap = 10'000;
    double time_cap_seconds = kInf;
    /// Accuracy weight R; the branch penalty is 1 - R.
    double R = 1.0;
    double tol = 1e-6;
    std::size_t max_trees = 5'000'000;
};

struct SolveReport {
    TreeEncoding tree = TreeEncoding::constant(0, 0);
    std::string mode;
    std::string backend;
    double objective = 0.0;
    double bound = 0.0;
    SolveStatus status = SolveStatus::Optimal;
    std::size_t iterations = 0;
    std::size_t global_cuts = 0;
    std::size_t per_sample_cuts = 0;
    double wall_seconds = 0.0;
    double epsilon = 0.0;
    double R = 1.0;
    std::size_t num_samples = 0;
    std::size_t worst_case_correct = 0;
    std::size_t nominal_correct = 0;
    std::size_t branch_nodes = 0;
    /// Certificates of the incumbents, in iteration order (cutting plane only).
    std::vector<AdversaryCertificate> certificates;
};

/// JSON report; wall time is omitted unless requested so that reports are
/// byte-reproducible.
std::string report_json(const SolveReport& report, bool include_timing = false);

SolveReport cutting_plane_solve(const Dataset& data, const UncertaintyModel& model, int depth, MainSolver& backend,
                                const SolveOptions& options = {});

/// Direct argmax over S of R * worst_case_correct - (1 - R) * #branch.
SolveReport exhaustive_solve(const Dataset& data, const UncertaintyModel& model, int depth,
                             const SolveOptions& options = {});

/// Nominal accuracy with a branch-node penalty; runs the cutting plane at eps = 0.
SolveReport nonrobust_regularized_solve(const Dataset& data, int depth, double R, MainSolver& backend,
                                        const SolveOptions& options = {});

enum class BudgetMode { Shared, PerSample };
BudgetMode parse_budget_mode(const std::string& text);
const char* to_string(BudgetMode mode) noexcept;

/// Most accurate tree whose every training row needs more than the budget
/// to reach another prediction node. Per-sample mode uses epsilon / |I|.
SolveReport proxy_solve(const Dataset& data, const UncertaintyModel& model, int depth, BudgetMode mode,
                        const SolveOptions& options = {});

} // namespace robtree
