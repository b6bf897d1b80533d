#pragma once

#include "robtree/adversary.hpp"
#include "robtree/data.hpp"
#include "robtree/rng.hpp"
#include "robtree/tree.hpp"
#include "robtree/uncertainty.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <vector>

namespace robtree::testing {

// Unbounded, two-sided integer features named x0, x1, ... and string labels "0", "1", ...
inline Dataset integer_dataset(const std::vector<std::vector<Value>>& rows, const std::vector<std::size_t>& y,
                               std::size_t num_labels = 2)
{
    const std::size_t F = rows.empty() ? 0 : rows.front().size();
    std::vector<FeatureSchema> features(F);
    for (std::size_t f = 0; f < F; ++f) features[f].name = "x" + std::to_string(f);
    std::vector<Value> values;
    for (const auto& r : rows) values.insert(values.end(), r.begin(), r.end());
    std::vector<std::string> names;
    for (std::size_t k = 0; k < num_labels; ++k) names.push_back(std::to_string(k));
    return Dataset(features, {}, values, y, names);
}

// The nine-point, one-feature example: x = 1..9, first four rows class 0.
inline Dataset table3()
{
    std::vector<std::vector<Value>> rows;
    for (Value x = 1; x <= 9; ++x) rows.push_back({x});
    return integer_dataset(rows, {0, 0, 0, 0, 1, 1, 1, 1, 1});
}

struct Micro {
    Dataset data;
    UncertaintyModel model;
    int depth;
};

// |I| in 2..8, |F| in 1..2, values in 0..3, depth 0..2, gamma in {0.5, 1, 2}, eps in {0..3}.
inline Micro micro_instance(std::uint64_t seed)
{
    CounterRng rng(derive_seed(seed, 0x6d696372));
    const std::size_t n = 2 + rng.uniform_index(7);
    const std::size_t F = 1 + rng.uniform_index(2);
    std::vector<std::vector<Value>> rows(n, std::vector<Value>(F));
    std::vector<std::size_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : rows[i]) v = static_cast<Value>(rng.uniform_index(4));
        y[i] = rng.uniform_index(2);
    }
    const int depth = static_cast<int>(rng.uniform_index(3));
    const double gammas[] = {0.5, 1.0, 2.0};
    const double gamma = gammas[rng.uniform_index(3)];
    const double eps = static_cast<double>(rng.uniform_index(4));
    auto data = integer_dataset(rows, y);
    auto model = UncertaintyModel::uniform(data, gamma, eps);
    return {std::move(data), std::move(model), depth};
}

// Uniformly random member of S: each node predicts with probability 1/2
// (always at leaves), otherwise branches on a random threshold.
inline TreeEncoding random_tree(int depth, const ThresholdMap& th, std::size_t num_labels, CounterRng& rng)
{
    Topology topo(depth);
    std::vector<NodeSpec> nodes(topo.num_nodes() + 1);
    std::vector<std::pair<std::size_t, Value>> pairs;
    for (std::size_t f = 0; f < th.num_features(); ++f)
        for (Value t : th.of(f)) pairs.emplace_back(f, t);
    std::function<void(std::size_t)> fill = [&](std::size_t n) {
        if (topo.is_leaf(n) || pairs.empty() || rng.uniform() < 0.5) {
            nodes[n] = NodeSpec::predict(rng.uniform_index(num_labels));
            return;
        }
        const auto& [f, t] = pairs[rng.uniform_index(pairs.size())];
        nodes[n] = NodeSpec::branch(f, t);
        fill(Topology::left(n));
        fill(Topology::right(n));
    };
    fill(1);
    return TreeEncoding(depth, nodes);
}

// ---------------------------------------------------------------------------
// Flow-graph oracle. Vertices: 0 = source, 1..N = tree nodes, N+1 = sink.
// Capacities come from the raw indicators, so it shares no code with route().

struct FlowGraph {
    std::size_t sink;
    std::vector<std::vector<int>> cap;
};

inline FlowGraph flow_graph(const TreeEncoding& tree, const ThresholdMap& th, std::size_t num_labels,
                            std::span<const Value> x, std::size_t y)
{
    const auto ind = tree.to_indicators(th, num_labels);
    const Topology& topo = tree.topology();
    const std::size_t N = topo.num_nodes();
    FlowGraph g{N + 1, std::vector<std::vector<int>>(N + 2, std::vector<int>(N + 2, 0))};
    g.cap[0][1] = 1;
    for (std::size_t n = 1; n <= N; ++n) {
        g.cap[n][g.sink] = ind.w[n][y];
        if (topo.is_leaf(n)) continue;
        for (std::size_t f = 0; f < th.num_features(); ++f) {
            for (std::size_t j = 0; j < th.of(f).size(); ++j) {
                const int b = ind.b[n][th.offset(f) + j];
                const Value theta = th.of(f)[j];
                g.cap[n][Topology::left(n)] += b * (x[f] <= theta);
                g.cap[n][Topology::right(n)] += b * (x[f] >= theta + 1);
            }
        }
    }
    return g;
}

// Edmonds-Karp.
inline int max_flow(FlowGraph g)
{
    const std::size_t V = g.cap.size();
    int flow = 0;
    while (true) {
        std::vector<std::size_t> prev(V, V);
        prev[0] = 0;
        std::queue<std::size_t> q;
        q.push(0);
        while (!q.empty() && prev[g.sink] == V) {
            const auto u = q.front();
            q.pop();
            for (std::size_t v = 0; v < V; ++v)
                if (prev[v] == V && g.cap[u][v] > 0) {
                    prev[v] = u;
                    q.push(v);
                }
        }
        if (prev[g.sink] == V) return flow;
        int push = std::numeric_limits<int>::max();
        for (auto v = g.sink; v != 0; v = prev[v]) push = std::min(push, g.cap[prev[v]][v]);
        for (auto v = g.sink; v != 0; v = prev[v]) {
            g.cap[prev[v]][v] -= push;
            g.cap[v][prev[v]] += push;
        }
        flow += push;
    }
}

// Capacity of an s-t cut given by its edge list (sink written as kSinkNode).
inline int cut_capacity(const FlowGraph& g, const DecisionCutSet& q)
{
    int c = 0;
    for (const auto& e : q.edges) c += g.cap[e.from][e.to == kSinkNode ? g.sink : e.to];
    return c;
}

// Correct count of `tree` on x + xi, via max flow per row.
inline std::size_t flow_correct(const TreeEncoding& tree, const Dataset& data, const ThresholdMap& th,
                                std::span<const Value> xi)
{
    const std::size_t F = data.num_features();
    std::size_t c = 0;
    std::vector<Value> xt(F);
    for (std::size_t i = 0; i < data.num_rows(); ++i) {
        for (std::size_t f = 0; f < F; ++f) xt[f] = data.value(i, f) + (xi.empty() ? 0 : xi[i * F + f]);
        c += static_cast<std::size_t>(max_flow(flow_graph(tree, th, data.num_labels(), xt, data.label(i))));
    }
    return c;
}

// Joint dense search over every xi in [-w, w]^(|I| |F|) that the model admits.
// Only usable for a handful of cells.
inline std::size_t dense_adversary(const TreeEncoding& tree, const Dataset& data, const UncertaintyModel& model,
                                   Value w)
{
    const std::size_t cells = data.num_rows() * data.num_features();
    const auto th = compute_thresholds(data);
    std::vector<Value> xi(cells, -w);
    std::size_t best = data.num_rows();
    while (true) {
        if (model.admissible(data, xi)) best = std::min(best, flow_correct(tree, data, th, xi));
        std::size_t c = 0;
        while (c < cells && xi[c] == w) xi[c++] = -w;
        if (c == cells) break;
        ++xi[c];
    }
    return best;
}

} // namespace robtree::testing
