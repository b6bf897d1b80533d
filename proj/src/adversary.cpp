#include "robtree/adversary.hpp"

#include "robtree/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>

namespace robtree {

using json = nlohmann::ordered_json;

bool DecisionCutSet::contains(std::size_t from, std::size_t to) const
{
    return std::find(edges.begin(), edges.end(), CutEdge{from, to}) != edges.end();
}

DecisionCutSet cutset_from_path(const DecisionPath& path, const Topology& topo)
{
    DecisionCutSet q;
    q.source_nodes = path.nodes;
    auto on_tail = [&](std::size_t m) {
        return std::find(path.nodes.begin() + 1, path.nodes.end(), m) != path.nodes.end();
    };
    for (auto n : path.nodes) {
        if (!topo.is_leaf(n)) {
            for (auto m : {Topology::left(n), Topology::right(n)})
                if (!on_tail(m)) q.edges.push_back({n, m});
        }
        q.edges.push_back({n, kSinkNode});
    }
    return q;
}

namespace {

constexpr Value kFar = Value{1} << 61;

/// Absolute-value interval a path imposes on each feature.
struct PathBox {
    std::vector<Value> lo, hi;
    std::vector<char> touched;

    PathBox(const DecisionPath& path, const TreeEncoding& tree, std::size_t F)
        : lo(F, -kFar), hi(F, kFar), touched(F, 0)
    {
        for (std::size_t j = 0; j + 1 < path.nodes.size(); ++j) {
            const auto n = path.nodes[j];
            const auto& s = tree.node(n);
            touched[s.feature] = 1;
            if (path.nodes[j + 1] == Topology::left(n))
                hi[s.feature] = std::min(hi[s.feature], s.threshold);
            else
                lo[s.feature] = std::max(lo[s.feature], s.threshold + 1);
        }
    }
};

} // namespace

PathCost min_cost_for_path(const Dataset& data, std::size_t i, const DecisionPath& path, const TreeEncoding& tree,
                           const UncertaintyModel& model)
{
    const std::size_t F = data.num_features();
    const PathBox box(path, tree, F);
    PathCost out;
    std::vector<Value> xi(F, 0);
    double total = 0.0;
    std::vector<char> group_done(model.groups().size(), 0);

    for (std::size_t f = 0; f < F; ++f) {
        if (!box.touched[f]) continue;
        const Value x = data.value(i, f);
        if (auto g = model.group_of(f)) {
            if (group_done[*g]) continue;
            group_done[*g] = 1;
            const auto& members = model.groups()[*g].members;
            std::size_t current = 0;
            for (std::size_t k = 0; k < members.size(); ++k)
                if (data.value(i, members[k]) == 1) current = k;
            // Current category first so that a free stay beats a free flip.
            std::vector<std::size_t> order{current};
            for (std::size_t k = 0; k < members.size(); ++k)
                if (k != current) order.push_back(k);
            double best = kInf;
            std::optional<std::size_t> pick;
            for (auto c : order) {
                double cost = 0.0;
                bool ok = true;
                for (std::size_t k = 0; k < members.size() && ok; ++k) {
                    const auto m = members[k];
                    const Value v = k == c ? 1 : 0;
                    const Value shift = v - data.value(i, m);
                    ok = v >= box.lo[m] && v <= box.hi[m] && model.domain(i, m).contains(shift);
                    if (ok) cost += model.cost(i, m, shift);
                }
                if (ok && cost < best) {
                    best = cost;
                    pick = c;
                }
            }
            if (!pick) return out;
            for (std::size_t k = 0; k < members.size(); ++k)
                xi[members[k]] = (k == *pick ? 1 : 0) - data.value(i, members[k]);
            total += best;
            continue;
        }
        const auto& dom = model.domain(i, f);
        const Value lo = std::max(box.lo[f] - x, dom.lo);
        const Value hi = std::min(box.hi[f] - x, dom.hi);
        if (lo > hi) return out;
        xi[f] = std::clamp<Value>(0, lo, hi);
        total += model.cost(i, f, xi[f]);
    }
    out.feasible = true;
    out.cost = total;
    out.xi = std::move(xi);
    return out;
}

PerSampleAttack cheapest_misclassification(const Dataset& data, std::size_t i, const TreeEncoding& tree,
                                           const UncertaintyModel& model, const std::vector<DecisionPath>& paths)
{
    PerSampleAttack best;
    const std::size_t y = data.label(i);
    for (const auto& p : paths) {
        if (tree.node(p.terminal()).label == y) continue;
        auto c = min_cost_for_path(data, i, p, tree, model);
        if (c.feasible && c.cost < best.psi) {
            best.psi = c.cost;
            best.xi = std::move(c.xi);
            best.path = p;
        }
    }
    return best;
}

PerSampleAttack cheapest_misclassification(const Dataset& data, std::size_t i, const TreeEncoding& tree,
                                           const UncertaintyModel& model)
{
    return cheapest_misclassification(data, i, tree, model, enumerate_paths(tree));
}

AdversaryCertificate saturate_budget(const std::vector<PerSampleAttack>& attacks,
                                     const std::vector<DecisionPath>& nominal_paths, std::size_t num_features,
                                     double epsilon)
{
    const std::size_t n = attacks.size();
    if (nominal_paths.size() != n) throw ValidationError("saturate_budget: one nominal path per sample required");
    AdversaryCertificate cert;
    cert.num_features = num_features;
    cert.psi.resize(n);
    cert.funded.assign(n, 0);
    cert.paths = nominal_paths;
    cert.xi.assign(n * num_features, 0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < n; ++i) cert.psi[i] = attacks[i].psi;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cert.psi[a] < cert.psi[b]; });

    double remaining = epsilon;
    std::size_t funded = 0;
    for (auto i : order) {
        const double psi = cert.psi[i];
        if (!attacks[i].path || !(psi <= remaining + kBudgetTol)) break;
        remaining -= psi;
        cert.spent += psi;
        cert.funded[i] = 1;
        cert.paths[i] = *attacks[i].path;
        std::copy(attacks[i].xi.begin(), attacks[i].xi.end(), cert.xi.begin() + static_cast<std::ptrdiff_t>(i * num_features));
        ++funded;
    }
    cert.value = n - funded;
    return cert;
}

std::size_t nominal_correct(const TreeEncoding& tree, const Dataset& data)
{
    std::size_t c = 0;
    for (std::size_t i = 0; i < data.num_rows(); ++i)
        c += tree.node(route_terminal(tree, data.row(i))).label == data.label(i);
    return c;
}

namespace {

DecisionPath nominal_path(const TreeEncoding& tree, std::span<const Value> x)
{
    return DecisionPath{route(tree, x).nodes};
}

} // namespace

AdversaryCertificate worst_case_correct(const TreeEncoding& tree, const Dataset& data, const UncertaintyModel& model)
{
    if (model.num_rows() != data.num_rows() || model.num_features() != data.num_features())
        throw ValidationError("uncertainty model shape does not match the dataset");
    tree.check_ranges(data.num_features(), data.num_labels());
    const auto paths = enumerate_paths(tree);
    std::vector<PerSampleAttack> attacks;
    std::vector<DecisionPath> nominal;
    attacks.reserve(data.num_rows());
    nominal.reserve(data.num_rows());
    for (std::size_t i = 0; i < data.num_rows(); ++i) {
        attacks.push_back(cheapest_misclassification(data, i, tree, model, paths));
        nominal.push_back(nominal_path(tree, data.row(i)));
    }
    return saturate_budget(attacks, nominal, data.num_features(), model.epsilon());
}

double min_cost_to_reroute(const Dataset& data, std::size_t i, const TreeEncoding& tree,
                           const UncertaintyModel& model)
{
    const std::size_t home = route_terminal(tree, data.row(i));
    double best = kInf;
    for (const auto& p : enumerate_paths(tree)) {
        if (p.terminal() == home) continue;
        auto c = min_cost_for_path(data, i, p, tree, model);
        if (c.feasible) best = std::min(best, c.cost);
    }
    return best;
}

// ---------------------------------------------------------------------------

std::size_t brute_force_adversary(const TreeEncoding& tree, const Dataset& data, const UncertaintyModel& model,
                                  const BruteForceCaps& caps)
{
    const std::size_t F = data.num_features();
    const std::size_t n = data.num_rows();
    // Thresholds the tree actually tests, per feature.
    std::vector<Value> tmin(F, kFar), tmax(F, -kFar);
    std::vector<char> used(F, 0);
    for (std::size_t node = 1; node <= tree.topology().num_nodes(); ++node) {
        const auto& s = tree.node(node);
        if (s.role != NodeRole::Branch) continue;
        used[s.feature] = 1;
        tmin[s.feature] = std::min(tmin[s.feature], s.threshold);
        tmax[s.feature] = std::max(tmax[s.feature], s.threshold);
    }
    std::vector<Value> cmin(F), cmax(F);
    for (std::size_t f = 0; f < F; ++f) {
        cmin[f] = cmax[f] = data.value(0, f);
        for (std::size_t i = 1; i < n; ++i) {
            cmin[f] = std::min(cmin[f], data.value(i, f));
            cmax[f] = std::max(cmax[f], data.value(i, f));
        }
    }

    std::size_t work = 0;
    auto charge = [&](std::size_t amount) {
        work += amount;
        if (work > caps.max_nodes)
            throw ResourceCapError("brute-force adversary exceeded its enumeration budget of " +
                                   std::to_string(caps.max_nodes));
    };

    // Per row: cheapest admissible shift that changes the routed label away from y.
    std::vector<double> min_cost(n, kInf);
    for (std::size_t i = 0; i < n; ++i) {
        // Each "axis" is a list of candidate (partial rows, cost) for one
        // feature or one categorical group.
        struct Option {
            std::vector<std::pair<std::size_t, Value>> cells;
            double cost;
        };
        std::vector<std::vector<Option>> axes;
        std::vector<char> group_done(model.groups().size(), 0);
        for (std::size_t f = 0; f < F; ++f) {
            if (auto g = model.group_of(f)) {
                if (group_done[*g]) continue;
                group_done[*g] = 1;
                const auto& members = model.groups()[*g].members;
                bool any_used = false;
                for (auto m : members) any_used = any_used || used[m];
                if (!any_used) continue;
                std::vector<Option> opts;
                for (std::size_t c = 0; c < members.size(); ++c) {
                    Option o{{}, 0.0};
                    bool ok = true;
                    for (std::size_t k = 0; k < members.size(); ++k) {
                        const auto m = members[k];
                        const Value shift = (k == c ? 1 : 0) - data.value(i, m);
                        ok = ok && model.domain(i, m).contains(shift);
                        o.cells.push_back({m, shift});
                        o.cost += model.cost(i, m, shift);
                    }
                    if (ok) opts.push_back(std::move(o));
                }
                axes.push_back(std::move(opts));
                continue;
            }
            if (!used[f]) continue;
            const Value x = data.value(i, f);
            const auto& dom = model.domain(i, f);
            const Value lo_abs = std::min({cmin[f] - 1, tmin[f], x});
            const Value hi_abs = std::max({cmax[f] + 1, tmax[f] + 1, x});
            const Value lo = std::max(lo_abs - x, dom.lo), hi = std::min(hi_abs - x, dom.hi);
            std::vector<Option> opts;
            for (Value s = lo; s <= hi; ++s) opts.push_back(Option{{{f, s}}, model.cost(i, f, s)});
            axes.push_back(std::move(opts));
        }

        std::vector<Value> row(data.row(i).begin(), data.row(i).end());
        const std::vector<Value> base = row;
        std::vector<std::size_t> idx(axes.size(), 0);
        while (true) {
            charge(1);
            double cost = 0.0;
            row = base;
            for (std::size_t a = 0; a < axes.size(); ++a) {
                const auto& o = axes[a][idx[a]];
                cost += o.cost;
                for (const auto& [f, s] : o.cells) row[f] = base[f] + s;
            }
            if (cost < min_cost[i] && route(tree, row).label != data.label(i)) min_cost[i] = cost;
            std::size_t a = 0;
            while (a < axes.size() && ++idx[a] == axes[a].size()) idx[a++] = 0;
            if (a == axes.size()) break;
        }
    }

    // Largest set of rows whose combined cost fits the budget.
    std::vector<std::size_t> finite;
    for (std::size_t i = 0; i < n; ++i)
        if (min_cost[i] < kInf) finite.push_back(i);
    if (finite.size() >= 63) throw ResourceCapError("brute-force adversary: too many attackable rows to enumerate");
    const std::uint64_t subsets = std::uint64_t{1} << finite.size();
    charge(static_cast<std::size_t>(subsets));
    std::size_t best = 0;
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        double cost = 0.0;
        std::size_t count = 0;
        for (std::size_t b = 0; b < finite.size(); ++b)
            if (mask >> b & 1U) {
                cost += min_cost[finite[b]];
                ++count;
            }
        if (count > best && cost <= model.epsilon() + kBudgetTol) best = count;
    }
    return n - best;
}

std::string certificate_json(const AdversaryCertificate& cert, const Dataset& data)
{
    json root;
    root["value"] = cert.value;
    root["spent"] = cert.spent;
    json samples = json::array();
    for (std::size_t i = 0; i < cert.psi.size(); ++i) {
        json s;
        s["index"] = i;
        s["label"] = data.label_names().at(data.label(i));
        s["psi"] = std::isinf(cert.psi[i]) ? json("inf") : json(cert.psi[i]);
        s["funded"] = static_cast<bool>(cert.funded[i]);
        s["path"] = cert.paths[i].nodes;
        auto row = cert.xi_row(i);
        s["xi"] = std::vector<Value>(row.begin(), row.end());
        samples.push_back(std::move(s));
    }
    root["samples"] = std::move(samples);
    return root.dump(2) + "\n";
}

} // namespace robtree
