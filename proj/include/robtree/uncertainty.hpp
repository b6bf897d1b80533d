#pragma once

#include "robtree/data.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace robtree {

/// Stand-in for an infinite side of a shift domain.
inline constexpr Value kUnbounded = Value{1} << 60;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Admissible individual shifts of one cell: the integers in [lo, hi].
/// lo <= 0 <= hi always; frozen cells have lo == hi == 0.
struct ShiftDomain {
    Value lo = 0;
    Value hi = 0;

    bool contains(Value xi) const noexcept { return lo <= xi && xi <= hi; }
    bool frozen() const noexcept { return lo == 0 && hi == 0; }
    bool bounded_below() const noexcept { return lo > -kUnbounded; }
    bool bounded_above() const noexcept { return hi < kUnbounded; }
    bool operator==(const ShiftDomain&) const = default;
};

/// Per-cell shift domains of a dataset derived from bounds and shift
/// directions. Categorical members get [-x, 1-x]; the one-hot coupling is
/// enforced separately through the groups.
std::vector<ShiftDomain> schema_domains(const Dataset& data);

/// Cost matrix gamma, budget epsilon and shift domains over |I| x |F| cells.
class UncertaintyModel {
public:
    UncertaintyModel(std::size_t rows, std::size_t features, std::vector<double> gamma,
                     std::vector<ShiftDomain> domains, double epsilon, std::vector<CategoricalGroup> groups = {});

    /// Domains from the schema; cells with infinite gamma are frozen.
    static UncertaintyModel from_gamma(const Dataset& data, std::vector<double> gamma, double epsilon);
    /// gamma identical in every cell.
    static UncertaintyModel uniform(const Dataset& data, double gamma, double epsilon);

    std::size_t num_rows() const noexcept { return rows_; }
    std::size_t num_features() const noexcept { return features_; }
    double gamma(std::size_t i, std::size_t f) const { return gamma_[i * features_ + f]; }
    const ShiftDomain& domain(std::size_t i, std::size_t f) const { return domains_[i * features_ + f]; }
    double epsilon() const noexcept { return epsilon_; }
    const std::vector<CategoricalGroup>& groups() const noexcept { return groups_; }
    /// Index into groups() of the group containing feature f, if any.
    std::optional<std::size_t> group_of(std::size_t f) const
    {
        return group_of_[f] < 0 ? std::nullopt : std::optional<std::size_t>(static_cast<std::size_t>(group_of_[f]));
    }
    std::span<const double> gammas() const noexcept { return gamma_; }

    /// gamma * |xi|, with zero shifts free even on frozen cells.
    double cost(std::size_t i, std::size_t f, Value xi) const;
    double total_cost(std::span<const Value> xi) const;
    /// Membership test for a full |I| x |F| perturbation of `data`.
    bool admissible(const Dataset& data, std::span<const Value> xi) const;

    UncertaintyModel with_epsilon(double epsilon) const;
    /// gamma and epsilon both multiplied by c > 0.
    UncertaintyModel scaled(double c) const;

private:
    std::size_t rows_;
    std::size_t features_;
    std::vector<double> gamma_;
    std::vector<ShiftDomain> domains_;
    double epsilon_;
    std::vector<CategoricalGroup> groups_;
    std::vector<std::ptrdiff_t> group_of_;
};

/// Tolerance used when comparing accumulated costs against the budget.
inline constexpr double kBudgetTol = 1e-9;

// ---------------------------------------------------------------------------
// Calibration (natural logarithm throughout)

/// epsilon = -n ln(lambda).
double budget_from_lambda(double lambda, std::size_t n);
double gamma_unbounded(double rho);
double gamma_binary(double rho);
double gamma_categorical(double rho, std::size_t group_size);
/// Root in (0, 1) of rho r^(x-L+1) - (rho+1) r + 1 - rho.
double find_r_one_sided(double rho, Value x, Value lower);
/// Root in (0, 1] of rho r^(M+1) + rho r^(m+1) - (rho+1) r + 1 - rho.
double find_r_two_sided(double rho, Value x, Value lower, Value upper);
/// -ln r for the lemma that matches which bounds are present.
double gamma_bounded(double rho, Value x, std::optional<Value> lower, std::optional<Value> upper);

/// Certainty probability per cell.
class RhoMatrix {
public:
    RhoMatrix(std::size_t rows, std::size_t features, std::vector<double> values);

    /// Schema rho where given, else `fallback`; throws if neither exists.
    static RhoMatrix from_schema(const Dataset& data, std::optional<double> fallback = std::nullopt);
    static RhoMatrix uniform(const Dataset& data, double rho);
    /// Per original column: rho ~ N(mean, sd) clamped to [floor, 1], then
    /// raised to the smallest value calibration accepts for that column.
    static RhoMatrix harness(const Dataset& data, double mean, std::uint64_t seed, double sd = 0.2,
                             double floor = 0.05);

    std::size_t num_rows() const noexcept { return rows_; }
    std::size_t num_features() const noexcept { return features_; }
    double at(std::size_t i, std::size_t f) const { return values_[i * features_ + f]; }
    std::span<const double> values() const noexcept { return values_; }

    /// Every cell shifted by delta, clamped to [minimum, 1].
    RhoMatrix offset(const Dataset& data, double delta) const;
    /// Per original column a new value uniform in [rho - radius, rho + radius],
    /// clamped to [minimum, 1].
    RhoMatrix resample(const Dataset& data, double radius, std::uint64_t seed) const;

    bool operator==(const RhoMatrix&) const = default;

private:
    std::size_t rows_;
    std::size_t features_;
    std::vector<double> values_;
};

/// Smallest rho calibration accepts for cell (i, f), given the shift direction.
double minimum_rho_cell(const Dataset& data, std::size_t i, std::size_t f);

/// The perturbation law a cell follows under certainty rho.
struct CellLaw {
    enum class Kind { Frozen, Geometric, Truncated, Categorical };
    Kind kind = Kind::Frozen;
    double rho = 1.0;
    /// Decay ratio: P(xi) = rho r^|xi| for truncated cells.
    double r = 0.0;
    /// Effective shift range for truncated cells.
    Value lo = 0;
    Value hi = 0;
    double gamma = kInf;
};

CellLaw cell_law(const Dataset& data, const RhoMatrix& rho, std::size_t i, std::size_t f);

/// gamma per feature kind and shift direction, epsilon from lambda.
UncertaintyModel calibrate(const Dataset& data, const RhoMatrix& rho, double lambda);
/// Same gammas with an explicit budget.
UncertaintyModel calibrate_with_epsilon(const Dataset& data, const RhoMatrix& rho, double epsilon);

/// JSON report: lambda, epsilon, per-feature summary and per-cell gamma/domain.
std::string calibration_report(const Dataset& data, const RhoMatrix& rho, const UncertaintyModel& model,
                               std::optional<double> lambda);

/// Perturbed covariates x + xi, each cell drawn independently from its law.
/// Counter-based: cell (i, f) depends only on (seed, i, f).
std::vector<Value> sample_perturbation(const Dataset& data, const RhoMatrix& rho, std::uint64_t seed);

} // namespace robtree
