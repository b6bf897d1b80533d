#pragma once

#include "robtree/data.hpp"
#include "robtree/tree.hpp"
#include "robtree/uncertainty.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace robtree {

struct EvaluationOptions {
    std::size_t K = 1000;
    std::uint64_t seed = 0;
    /// Worker threads over the K sets; results do not depend on it.
    std::size_t threads = 1;
    /// Unexpected shifts: every rho moved by this amount before sampling.
    double rho_offset = 0.0;
    /// Unexpected shifts: rho redrawn per column within this radius.
    double rho_radius = 0.0;
};

struct EvaluationReport {
    std::size_t num_rows = 0;
    std::size_t K = 0;
    std::uint64_t seed = 0;
    double rho_offset = 0.0;
    double rho_radius = 0.0;
    double nominal_accuracy = 0.0;
    double worst_accuracy = 0.0;
    double average_accuracy = 0.0;
    std::size_t branch_nodes = 0;
    int depth = 0;
    /// Baseline nominal accuracy minus this tree's, when a baseline is given.
    std::optional<double> price_of_robustness;
    /// Exact worst case over Xi (fraction), when a model is given.
    std::optional<double> adversarial_accuracy;
    /// Seed of each perturbed set, in order.
    std::vector<std::uint64_t> set_seeds;
};

/// Scores `tree` on K perturbed copies of `test` drawn from `rho`.
EvaluationReport evaluate_under_shifts(const TreeEncoding& tree, const Dataset& test, const RhoMatrix& rho,
                                       const EvaluationOptions& options,
                                       const std::optional<TreeEncoding>& baseline = std::nullopt,
                                       const UncertaintyModel* model = nullptr);

std::string evaluation_json(const EvaluationReport& report);

} // namespace robtree
