#pragma once

#include "robtree/data.hpp"
#include "robtree/tree.hpp"
#include "robtree/uncertainty.hpp"

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace robtree {

inline constexpr std::size_t kSourceNode = 0;
inline constexpr std::size_t kSinkNode = std::numeric_limits<std::size_t>::max();

struct CutEdge {
    std::size_t from;
    std::size_t to;
    bool operator==(const CutEdge&) const = default;
};

/// Edges (n, m) with n on the path and m off the path's tail, plus the
/// source set (the path nodes). Paths never cut (s, 1).
struct DecisionCutSet {
    std::vector<CutEdge> edges;
    std::vector<std::size_t> source_nodes;

    bool contains(std::size_t from, std::size_t to) const;
};

DecisionCutSet cutset_from_path(const DecisionPath& path, const Topology& topo);

struct PathCost {
    bool feasible = false;
    double cost = kInf;
    /// Full feature row of the cheapest shift; empty when infeasible.
    std::vector<Value> xi;
};

/// Cheapest shift of row i that sends it down `path` (independent per
/// feature; categorical groups scan their categories).
PathCost min_cost_for_path(const Dataset& data, std::size_t i, const DecisionPath& path, const TreeEncoding& tree,
                           const UncertaintyModel& model);

struct PerSampleAttack {
    /// +inf when no misclassifying path is reachable.
    double psi = kInf;
    std::vector<Value> xi;
    std::optional<DecisionPath> path;
};

/// Minimum over paths predicting a label other than y_i; the first path in
/// enumerate_paths order wins ties.
PerSampleAttack cheapest_misclassification(const Dataset& data, std::size_t i, const TreeEncoding& tree,
                                           const UncertaintyModel& model, const std::vector<DecisionPath>& paths);
PerSampleAttack cheapest_misclassification(const Dataset& data, std::size_t i, const TreeEncoding& tree,
                                           const UncertaintyModel& model);

struct AdversaryCertificate {
    std::size_t num_features = 0;
    /// |I| - number of funded attacks.
    std::size_t value = 0;
    double spent = 0.0;
    std::vector<double> psi;
    std::vector<char> funded;
    /// Per sample: the attack path if funded, else the nominal path.
    std::vector<DecisionPath> paths;
    /// |I| x |F| row-major; zero rows for unfunded samples.
    std::vector<Value> xi;

    std::span<const Value> xi_row(std::size_t i) const { return {xi.data() + i * num_features, num_features}; }
};

/// Greedy funding in (psi, index) order while psi <= remaining budget.
AdversaryCertificate saturate_budget(const std::vector<PerSampleAttack>& attacks,
                                     const std::vector<DecisionPath>& nominal_paths, std::size_t num_features,
                                     double epsilon);

AdversaryCertificate worst_case_correct(const TreeEncoding& tree, const Dataset& data, const UncertaintyModel& model);

std::size_t nominal_correct(const TreeEncoding& tree, const Dataset& data);

struct BruteForceCaps {
    std::size_t max_nodes = 20'000'000;
};

/// Exact minimum of the correct count over Xi by enumeration: per-row shifts
/// capped to the range where thresholds still change the route, then every
/// subset of rows to misclassify. Throws ResourceCapError past the cap.
std::size_t brute_force_adversary(const TreeEncoding& tree, const Dataset& data, const UncertaintyModel& model,
                                  const BruteForceCaps& caps = {});

/// Cheapest shift of row i ending at a prediction node other than its
/// nominal one (label irrelevant); +inf if none.
double min_cost_to_reroute(const Dataset& data, std::size_t i, const TreeEncoding& tree,
                           const UncertaintyModel& model);

/// Debug dump: per sample psi, funded flag, path and shift row.
std::string certificate_json(const AdversaryCertificate& cert, const Dataset& data);

} // namespace robtree
