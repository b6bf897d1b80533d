#include "robtree/uncertainty.hpp"

#include "robtree/error.hpp"
#include "robtree/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace robtree {

using json = nlohmann::ordered_json;

namespace {

constexpr double kRhoTol = 1e-12;
constexpr double kRhoFloor = 0.05;

std::string cell_name(const Dataset& data, std::size_t i, std::size_t f)
{
    return "row " + std::to_string(i) + ", feature '" + data.feature(f).name + "'";
}

/// Bounds that remain reachable for cell (i, f) given the shift direction.
struct EffectiveBounds {
    std::optional<Value> lower;
    std::optional<Value> upper;
};

EffectiveBounds effective_bounds(const Dataset& data, std::size_t i, std::size_t f)
{
    const auto& s = data.feature(f);
    const Value x = data.value(i, f);
    EffectiveBounds e;
    e.lower = s.allows_down() ? s.lower : std::optional<Value>(x);
    e.upper = s.allows_up() ? s.upper : std::optional<Value>(x);
    return e;
}

/// sum_{k=a}^{b} r^k, zero when a > b.
double geometric_sum(double r, Value a, Value b)
{
    if (a > b) return 0.0;
    if (r >= 1.0) return static_cast<double>(b - a + 1);
    if (r <= 0.0) return a == 0 ? 1.0 : 0.0;
    return (std::pow(r, static_cast<double>(a)) - std::pow(r, static_cast<double>(b) + 1.0)) / (1.0 - r);
}

template <class F>
double bisect(F&& f, double lo, double hi)
{
    // f(lo) > 0 > f(hi) is required by callers.
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (f(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

void require_rho(double rho, const char* what)
{
    if (!(rho > 0.0 && rho <= 1.0))
        throw ValidationError(std::string(what) + ": rho must lie in (0, 1], got " + std::to_string(rho));
}

} // namespace

std::vector<ShiftDomain> schema_domains(const Dataset& data)
{
    const std::size_t F = data.num_features();
    std::vector<ShiftDomain> out(data.num_rows() * F);
    for (std::size_t i = 0; i < data.num_rows(); ++i) {
        for (std::size_t f = 0; f < F; ++f) {
            const auto& s = data.feature(f);
            const Value x = data.value(i, f);
            ShiftDomain d;
            if (s.kind == FeatureKind::CategoricalMember) {
                if (s.shift == ShiftDirection::Both) d = {-x, 1 - x};
            } else {
                if (s.allows_down()) d.lo = s.lower ? *s.lower - x : -kUnbounded;
                if (s.allows_up()) d.hi = s.upper ? *s.upper - x : kUnbounded;
            }
            out[i * F + f] = d;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

UncertaintyModel::UncertaintyModel(std::size_t rows, std::size_t features, std::vector<double> gamma,
                                   std::vector<ShiftDomain> domains, double epsilon,
                                   std::vector<CategoricalGroup> groups)
    : rows_(rows), features_(features), gamma_(std::move(gamma)), domains_(std::move(domains)), epsilon_(epsilon),
      groups_(std::move(groups))
{
    if (gamma_.size() != rows_ * features_ || domains_.size() != rows_ * features_)
        throw ValidationError("uncertainty model: gamma/domain size does not match rows x features");
    if (!(epsilon_ >= 0.0) || std::isnan(epsilon_)) throw ValidationError("uncertainty budget must be nonnegative");
    for (std::size_t c = 0; c < gamma_.size(); ++c) {
        if (!(gamma_[c] >= 0.0)) throw ValidationError("uncertainty model: gamma must be nonnegative");
        if (domains_[c].lo > 0 || domains_[c].hi < 0)
            throw ValidationError("uncertainty model: every shift domain must contain 0");
        if (std::isinf(gamma_[c])) domains_[c] = ShiftDomain{};
    }
    group_of_.assign(features_, -1);
    for (std::size_t g = 0; g < groups_.size(); ++g)
        for (auto m : groups_[g].members) {
            if (m >= features_ || group_of_[m] >= 0)
                throw ValidationError("uncertainty model: invalid categorical group membership");
            group_of_[m] = static_cast<std::ptrdiff_t>(g);
        }
}

UncertaintyModel UncertaintyModel::from_gamma(const Dataset& data, std::vector<double> gamma, double epsilon)
{
    return UncertaintyModel(data.num_rows(), data.num_features(), std::move(gamma), schema_domains(data), epsilon,
                            data.groups());
}

UncertaintyModel UncertaintyModel::uniform(const Dataset& data, double gamma, double epsilon)
{
    return from_gamma(data, std::vector<double>(data.num_rows() * data.num_features(), gamma), epsilon);
}

double UncertaintyModel::cost(std::size_t i, std::size_t f, Value xi) const
{
    if (xi == 0) return 0.0;
    return gamma(i, f) * static_cast<double>(xi < 0 ? -xi : xi);
}

double UncertaintyModel::total_cost(std::span<const Value> xi) const
{
    double total = 0.0;
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t f = 0; f < features_; ++f) total += cost(i, f, xi[i * features_ + f]);
    return total;
}

bool UncertaintyModel::admissible(const Dataset& data, std::span<const Value> xi) const
{
    if (xi.size() != rows_ * features_ || data.num_rows() != rows_ || data.num_features() != features_)
        return false;
    for (std::size_t c = 0; c < xi.size(); ++c)
        if (!domains_[c].contains(xi[c])) return false;
    for (std::size_t i = 0; i < rows_; ++i) {
        for (const auto& g : groups_) {
            Value sum = 0;
            for (auto m : g.members) sum += data.value(i, m) + xi[i * features_ + m];
            if (sum != 1) return false;
        }
    }
    return total_cost(xi) <= epsilon_ + kBudgetTol;
}

UncertaintyModel UncertaintyModel::with_epsilon(double epsilon) const
{
    return UncertaintyModel(rows_, features_, gamma_, domains_, epsilon, groups_);
}

UncertaintyModel UncertaintyModel::scaled(double c) const
{
    if (!(c > 0.0)) throw ValidationError("scale factor must be positive");
    auto g = gamma_;
    for (auto& x : g) x *= c;
    return UncertaintyModel(rows_, features_, std::move(g), domains_, epsilon_ * c, groups_);
}

// ---------------------------------------------------------------------------

double budget_from_lambda(double lambda, std::size_t n)
{
    if (!(lambda > 0.0 && lambda <= 1.0))
        throw ValidationError("lambda must lie in (0, 1], got " + std::to_string(lambda));
    if (lambda == 1.0) return 0.0;
    return -static_cast<double>(n) * std::log(lambda);
}

double gamma_unbounded(double rho)
{
    require_rho(rho, "gamma_unbounded");
    if (rho == 1.0) return kInf;
    return std::log(1.0 / (1.0 - rho));
}

double gamma_binary(double rho)
{
    require_rho(rho, "gamma_binary");
    if (rho < 0.5 - kRhoTol) throw ValidationError("gamma_binary: rho must be at least 0.5");
    if (rho == 1.0) return kInf;
    return std::max(0.0, std::log(rho / (1.0 - rho)));
}

double gamma_categorical(double rho, std::size_t group_size)
{
    require_rho(rho, "gamma_categorical");
    if (group_size < 2) throw ValidationError("gamma_categorical: group size must be at least 2");
    const double n = static_cast<double>(group_size);
    if (rho < 1.0 / n - kRhoTol)
        throw ValidationError("gamma_categorical: rho must be at least 1/" + std::to_string(group_size));
    if (rho == 1.0) return kInf;
    return std::max(0.0, 0.5 * std::log(rho * (n - 1.0) / (1.0 - rho)));
}

double find_r_one_sided(double rho, Value x, Value lower)
{
    if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("find_r_one_sided: rho must lie in (0, 1)");
    if (x < lower) throw ValidationError("find_r_one_sided: x lies below the bound");
    const Value k = x - lower;
    if (k == 0) return 1.0 - rho;
    const double e = static_cast<double>(k) + 1.0;
    auto f = [&](double r) { return rho * std::pow(r, e) - (rho + 1.0) * r + 1.0 - rho; };
    return bisect(f, 1e-12, 1.0 - 1e-9);
}

double find_r_two_sided(double rho, Value x, Value lower, Value upper)
{
    if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("find_r_two_sided: rho must lie in (0, 1)");
    if (lower > upper || x < lower || x > upper)
        throw ValidationError("find_r_two_sided: need lower <= x <= upper");
    const double width = static_cast<double>(upper - lower) + 1.0;
    if (std::abs(rho * width - 1.0) <= kRhoTol) return 1.0;
    if (rho * width < 1.0)
        throw ValidationError("find_r_two_sided: rho below 1/(U-L+1) = " + std::to_string(1.0 / width));
    const Value M = std::max(upper - x, x - lower);
    const Value m = std::min(upper - x, x - lower);
    // The polynomial equals -(1 - r) h(r); h is increasing with h(0) < 0 < h(1),
    // so bisecting h avoids the root at r = 1.
    auto h = [&](double r) {
        if (M <= 4096) {
            double s_short = 0.0, s_long = 0.0, p = 1.0;
            for (Value k = 1; k <= M; ++k) {
                p *= r;
                (k <= m ? s_short : s_long) += p;
            }
            return rho * (1.0 + 2.0 * s_short + s_long) - 1.0;
        }
        return rho * (1.0 + 2.0 * geometric_sum(r, 1, m) + geometric_sum(r, m + 1, M)) - 1.0;
    };
    // bisect() expects f(lo) > 0 > f(hi).
    return bisect([&](double r) { return -h(r); }, 0.0, 1.0);
}

double gamma_bounded(double rho, Value x, std::optional<Value> lower, std::optional<Value> upper)
{
    require_rho(rho, "gamma_bounded");
    if (rho == 1.0) return kInf;
    double r;
    if (lower && upper) {
        if (*lower == *upper) return kInf;
        r = find_r_two_sided(rho, x, *lower, *upper);
    } else if (lower) {
        r = find_r_one_sided(rho, x, *lower);
    } else if (upper) {
        r = find_r_one_sided(rho, -x, -*upper);
    } else {
        return gamma_unbounded(rho);
    }
    return r >= 1.0 ? 0.0 : -std::log(r);
}

// ---------------------------------------------------------------------------

RhoMatrix::RhoMatrix(std::size_t rows, std::size_t features, std::vector<double> values)
    : rows_(rows), features_(features), values_(std::move(values))
{
    if (values_.size() != rows_ * features_) throw ValidationError("rho matrix size does not match rows x features");
    for (double r : values_)
        if (!(r > 0.0 && r <= 1.0)) throw ValidationError("rho must lie in (0, 1], got " + std::to_string(r));
}

RhoMatrix RhoMatrix::from_schema(const Dataset& data, std::optional<double> fallback)
{
    const std::size_t F = data.num_features();
    std::vector<double> v(data.num_rows() * F);
    for (std::size_t f = 0; f < F; ++f) {
        const auto& s = data.feature(f);
        const auto r = s.rho ? s.rho : fallback;
        if (!r) throw ValidationError("no rho given for feature '" + s.name + "' (set it in the schema or pass --rho)");
        for (std::size_t i = 0; i < data.num_rows(); ++i) v[i * F + f] = *r;
    }
    return RhoMatrix(data.num_rows(), F, std::move(v));
}

RhoMatrix RhoMatrix::uniform(const Dataset& data, double rho)
{
    return RhoMatrix(data.num_rows(), data.num_features(),
                     std::vector<double>(data.num_rows() * data.num_features(), rho));
}

namespace {

/// Feature columns grouped by original column: singletons or one-hot groups.
std::vector<std::vector<std::size_t>> original_columns(const Dataset& data)
{
    std::vector<std::vector<std::size_t>> cols;
    std::vector<char> seen_group(data.groups().size(), 0);
    for (std::size_t f = 0; f < data.num_features(); ++f) {
        const auto& g = data.feature(f).group;
        if (!g) {
            cols.push_back({f});
        } else if (!seen_group[*g]) {
            seen_group[*g] = 1;
            cols.push_back(data.groups()[*g].members);
        }
    }
    return cols;
}

double column_minimum(const Dataset& data, const std::vector<std::size_t>& col)
{
    double lo = 0.0;
    for (std::size_t i = 0; i < data.num_rows(); ++i)
        for (auto f : col) lo = std::max(lo, minimum_rho_cell(data, i, f));
    return lo;
}

} // namespace

RhoMatrix RhoMatrix::harness(const Dataset& data, double mean, std::uint64_t seed, double sd, double floor)
{
    if (!(floor > 0.0 && floor <= 1.0)) throw ValidationError("rho floor must lie in (0, 1]");
    const std::size_t F = data.num_features();
    std::vector<double> v(data.num_rows() * F);
    const auto cols = original_columns(data);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        CounterRng rng(derive_seed(seed, c));
        double r = std::clamp(mean + sd * rng.normal(), floor, 1.0);
        r = std::max(r, column_minimum(data, cols[c]));
        for (auto f : cols[c])
            for (std::size_t i = 0; i < data.num_rows(); ++i) v[i * F + f] = r;
    }
    return RhoMatrix(data.num_rows(), F, std::move(v));
}

RhoMatrix RhoMatrix::offset(const Dataset& data, double delta) const
{
    auto v = values_;
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t f = 0; f < features_; ++f) {
            const double lo = std::max(minimum_rho_cell(data, i, f), kRhoFloor);
            v[i * features_ + f] = std::clamp(v[i * features_ + f] + delta, lo, 1.0);
        }
    return RhoMatrix(rows_, features_, std::move(v));
}

RhoMatrix RhoMatrix::resample(const Dataset& data, double radius, std::uint64_t seed) const
{
    if (!(radius >= 0.0)) throw ValidationError("rho radius must be nonnegative");
    auto v = values_;
    const auto cols = original_columns(data);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        CounterRng rng(derive_seed(seed ^ 0xa5a5a5a5a5a5a5a5ULL, c));
        const double delta = radius * (2.0 * rng.uniform() - 1.0);
        for (auto f : cols[c])
            for (std::size_t i = 0; i < rows_; ++i) {
                const double lo = std::max(minimum_rho_cell(data, i, f), kRhoFloor);
                v[i * features_ + f] = std::clamp(values_[i * features_ + f] + delta, lo, 1.0);
            }
    }
    return RhoMatrix(rows_, features_, std::move(v));
}

double minimum_rho_cell(const Dataset& data, std::size_t i, std::size_t f)
{
    const auto& s = data.feature(f);
    if (s.kind == FeatureKind::CategoricalMember)
        return s.shift == ShiftDirection::Both ? 1.0 / static_cast<double>(data.groups()[*s.group].members.size())
                                               : 0.0;
    const auto e = effective_bounds(data, i, f);
    if (e.lower && e.upper && *e.upper > *e.lower) return 1.0 / static_cast<double>(*e.upper - *e.lower + 1);
    return 0.0;
}

CellLaw cell_law(const Dataset& data, const RhoMatrix& rho, std::size_t i, std::size_t f)
{
    const auto& s = data.feature(f);
    const double p = rho.at(i, f);
    const Value x = data.value(i, f);
    CellLaw law;
    law.rho = p;
    if (p < minimum_rho_cell(data, i, f) - kRhoTol)
        throw ValidationError(cell_name(data, i, f) + ": rho " + std::to_string(p) + " below the admissible minimum " +
                              std::to_string(minimum_rho_cell(data, i, f)));
    if (p == 1.0) return law;

    if (s.kind == FeatureKind::CategoricalMember) {
        if (s.shift != ShiftDirection::Both) return law;
        law.kind = CellLaw::Kind::Categorical;
        law.gamma = gamma_categorical(p, data.groups()[*s.group].members.size());
        law.lo = -x;
        law.hi = 1 - x;
        return law;
    }

    const auto e = effective_bounds(data, i, f);
    if (e.lower && e.upper && *e.lower == *e.upper) return law;
    if (!e.lower && !e.upper) {
        law.kind = CellLaw::Kind::Geometric;
        law.gamma = gamma_unbounded(p);
        law.r = 1.0 - p;
        law.lo = -kUnbounded;
        law.hi = kUnbounded;
        return law;
    }
    law.kind = CellLaw::Kind::Truncated;
    law.lo = e.lower ? *e.lower - x : -kUnbounded;
    law.hi = e.upper ? *e.upper - x : kUnbounded;
    if (s.kind == FeatureKind::Binary && s.shift == ShiftDirection::Both) {
        law.gamma = gamma_binary(p);
        law.r = std::exp(-law.gamma);
    } else {
        if (e.lower && e.upper)
            law.r = find_r_two_sided(p, x, *e.lower, *e.upper);
        else if (e.lower)
            law.r = find_r_one_sided(p, x, *e.lower);
        else
            law.r = find_r_one_sided(p, -x, -*e.upper);
        law.gamma = law.r >= 1.0 ? 0.0 : -std::log(law.r);
    }
    return law;
}

namespace {

std::vector<double> calibrated_gammas(const Dataset& data, const RhoMatrix& rho)
{
    if (rho.num_rows() != data.num_rows() || rho.num_features() != data.num_features())
        throw ValidationError("rho matrix shape does not match the dataset");
    const std::size_t F = data.num_features();
    std::vector<double> g(data.num_rows() * F);
    for (std::size_t i = 0; i < data.num_rows(); ++i)
        for (std::size_t f = 0; f < F; ++f) g[i * F + f] = cell_law(data, rho, i, f).gamma;
    return g;
}

json number_or_inf(double x)
{
    if (std::isinf(x)) return "inf";
    return x;
}

json bound_or_null(Value v)
{
    if (v <= -kUnbounded || v >= kUnbounded) return nullptr;
    return v;
}

} // namespace

UncertaintyModel calibrate(const Dataset& data, const RhoMatrix& rho, double lambda)
{
    return UncertaintyModel::from_gamma(data, calibrated_gammas(data, rho), budget_from_lambda(lambda, data.num_rows()));
}

UncertaintyModel calibrate_with_epsilon(const Dataset& data, const RhoMatrix& rho, double epsilon)
{
    return UncertaintyModel::from_gamma(data, calibrated_gammas(data, rho), epsilon);
}

std::string calibration_report(const Dataset& data, const RhoMatrix& rho, const UncertaintyModel& model,
                               std::optional<double> lambda)
{
    json root;
    root["lambda"] = lambda ? json(*lambda) : json(nullptr);
    root["epsilon"] = model.epsilon();
    root["rows"] = data.num_rows();
    json feats = json::array();
    for (std::size_t f = 0; f < data.num_features(); ++f) {
        const auto& s = data.feature(f);
        double gmin = kInf, gmax = 0.0, rmin = 1.0, rmax = 0.0;
        std::size_t frozen = 0;
        for (std::size_t i = 0; i < data.num_rows(); ++i) {
            gmin = std::min(gmin, model.gamma(i, f));
            gmax = std::max(gmax, model.gamma(i, f));
            rmin = std::min(rmin, rho.at(i, f));
            rmax = std::max(rmax, rho.at(i, f));
            frozen += model.domain(i, f).frozen();
        }
        json j;
        j["name"] = s.name;
        j["kind"] = to_string(s.kind);
        j["shift"] = to_string(s.shift);
        j["rho_source"] = s.rho ? "schema" : "default";
        j["rho_min"] = rmin;
        j["rho_max"] = rmax;
        j["gamma_min"] = number_or_inf(gmin);
        j["gamma_max"] = number_or_inf(gmax);
        j["frozen_cells"] = frozen;
        feats.push_back(std::move(j));
    }
    root["features"] = std::move(feats);
    json cells = json::array();
    for (std::size_t i = 0; i < data.num_rows(); ++i)
        for (std::size_t f = 0; f < data.num_features(); ++f) {
            const auto& d = model.domain(i, f);
            cells.push_back(json::array({i, f, rho.at(i, f), number_or_inf(model.gamma(i, f)), bound_or_null(d.lo),
                                         bound_or_null(d.hi)}));
        }
    root["cell_columns"] = json::array({"row", "feature", "rho", "gamma", "shift_lo", "shift_hi"});
    root["cells"] = std::move(cells);
    return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

namespace {

Value sample_truncated(const CellLaw& law, CounterRng& rng)
{
    const Value down = -law.lo, up = law.hi;
    const Value m = std::min(down, up), M = std::max(down, up);
    const double r = law.r;
    auto cdf = [&](Value K) {
        return law.rho * (1.0 + 2.0 * geometric_sum(r, 1, std::min(K, m)) + geometric_sum(r, m + 1, std::min(K, M)));
    };
    const double u = rng.uniform();
    Value magnitude;
    if (cdf(0) > u) {
        magnitude = 0;
    } else {
        // Smallest K with cdf(K) > u; exponential search when M is unbounded.
        Value hi = 1;
        while (hi < M && cdf(hi) <= u) hi = std::min(M, hi * 2);
        Value lo = 0; // cdf(lo) <= u
        if (cdf(hi) <= u) {
            magnitude = M >= kUnbounded ? kUnbounded / 2 : M;
        } else {
            while (hi - lo > 1) {
                const Value mid = lo + (hi - lo) / 2;
                (cdf(mid) > u ? hi : lo) = mid;
            }
            magnitude = hi;
        }
    }
    if (magnitude == 0) return 0;
    const double side = rng.uniform();
    if (magnitude <= m) return side < 0.5 ? -magnitude : magnitude;
    return up >= down ? magnitude : -magnitude;
}

Value sample_geometric(const CellLaw& law, CounterRng& rng)
{
    const double u = rng.uniform();
    if (u < law.rho) return 0;
    // P(|xi| = k) = rho (1 - rho)^k, inverted in closed form.
    const double k = std::floor(std::log1p(-u) / std::log1p(-law.rho));
    const Value magnitude =
        std::max<Value>(1, static_cast<Value>(std::min(k, static_cast<double>(kUnbounded / 2))));
    return rng.uniform() < 0.5 ? -magnitude : magnitude;
}

} // namespace

std::vector<Value> sample_perturbation(const Dataset& data, const RhoMatrix& rho, std::uint64_t seed)
{
    if (rho.num_rows() != data.num_rows() || rho.num_features() != data.num_features())
        throw ValidationError("rho matrix shape does not match the dataset");
    const std::size_t F = data.num_features();
    std::vector<Value> out(data.values().begin(), data.values().end());
    for (std::size_t i = 0; i < data.num_rows(); ++i) {
        const std::uint64_t row_key = derive_seed(seed, i);
        for (std::size_t f = 0; f < F; ++f) {
            const auto& s = data.feature(f);
            if (s.group && data.groups()[*s.group].members.front() != f) continue;
            const auto law = cell_law(data, rho, i, f);
            CounterRng rng(derive_seed(row_key, f));
            switch (law.kind) {
            case CellLaw::Kind::Frozen: break;
            case CellLaw::Kind::Geometric: out[i * F + f] += sample_geometric(law, rng); break;
            case CellLaw::Kind::Truncated: out[i * F + f] += sample_truncated(law, rng); break;
            case CellLaw::Kind::Categorical: {
                if (rng.uniform() < law.rho) break;
                const auto& members = data.groups()[*s.group].members;
                std::size_t current = 0;
                for (std::size_t k = 0; k < members.size(); ++k)
                    if (data.value(i, members[k]) == 1) current = k;
                std::size_t pick = static_cast<std::size_t>(rng.uniform_index(members.size() - 1));
                if (pick >= current) ++pick;
                out[i * F + members[current]] = 0;
                out[i * F + members[pick]] = 1;
                break;
            }
            }
        }
    }
    return out;
}

} // namespace robtree
