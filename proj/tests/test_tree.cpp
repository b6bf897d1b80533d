#include "robtree/error.hpp"
#include "robtree/tree.hpp"

#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace robtree;

namespace {

// Depth 1 stump on x0 at threshold t.
TreeEncoding stump(Value t, std::size_t left = 0, std::size_t right = 1)
{
    return TreeEncoding(1, {NodeSpec{}, NodeSpec::branch(0, t), NodeSpec::predict(left), NodeSpec::predict(right)});
}

std::string key(const TreeEncoding& t)
{
    std::string s;
    for (std::size_t n = 1; n < t.nodes().size(); ++n) {
        const auto& x = t.node(n);
        s += std::to_string(static_cast<int>(x.role)) + ":" + std::to_string(x.feature) + ":" +
             std::to_string(x.threshold) + ":" + std::to_string(x.label) + ";";
    }
    return s;
}

} // namespace

TEST_CASE("topology numbering")
{
    Topology t(2);
    CHECK(t.num_internal() == 3);
    CHECK(t.num_leaves() == 4);
    CHECK(t.num_nodes() == 7);
    CHECK(t.first_leaf() == 4);
    CHECK(t.ancestors(5) == std::vector<std::size_t>{2, 1});
    CHECK(Topology::level(1) == 0);
    CHECK(Topology::level(6) == 2);
    CHECK_THROWS_AS(Topology(-1), ValidationError);
    CHECK_THROWS_AS(Topology(kMaxDepth + 1), ValidationError);
}

TEST_CASE("structural constraints are enforced at construction")
{
    // Leaf must predict when reached.
    CHECK_THROWS_AS(TreeEncoding(1, {NodeSpec{}, NodeSpec::branch(0, 1), NodeSpec::predict(0), NodeSpec{}}),
                    ValidationError);
    // Node under a predict node must be pruned.
    CHECK_THROWS_AS(TreeEncoding(1, {NodeSpec{}, NodeSpec::predict(0), NodeSpec::predict(0), NodeSpec{}}),
                    ValidationError);
    // Wrong node count.
    CHECK_THROWS_AS(TreeEncoding(1, {NodeSpec{}, NodeSpec::predict(0)}), ValidationError);
    CHECK_NOTHROW(TreeEncoding(1, {NodeSpec{}, NodeSpec::predict(1), NodeSpec{}, NodeSpec{}}));
    CHECK(TreeEncoding::constant(2, 1).num_branch_nodes() == 0);
}

TEST_CASE("routing goes right iff x >= theta + 1")
{
    const auto t = stump(4);
    CHECK(route(t, std::vector<Value>{4}).label == 0);
    CHECK(route(t, std::vector<Value>{5}).label == 1);
    CHECK(route(t, std::vector<Value>{-100}).label == 0);
    CHECK(route(t, std::vector<Value>{5}).nodes == std::vector<std::size_t>{1, 3});
    CHECK(route_terminal(t, std::vector<Value>{2}) == 2);
}

TEST_CASE("for_each_tree visits each member of S once and matches the count recursion")
{
    for (int depth = 0; depth <= 2; ++depth) {
        for (std::size_t K = 2; K <= 3; ++K) {
            const ThresholdMap th({{0, 1}, {5}});
            std::set<std::string> seen;
            std::size_t visits = 0;
            for_each_tree(depth, th, K, [&](const TreeEncoding& t) {
                ++visits;
                seen.insert(key(t));
                return true;
            });
            // c(0) = K, c(d) = K + B c(d-1)^2 with B = 3.
            std::size_t c = K;
            for (int d = 1; d <= depth; ++d) c = K + 3 * c * c;
            CHECK(visits == c);
            CHECK(seen.size() == c);
            CHECK(count_trees(depth, 3, K) == c);
        }
    }
    CHECK(count_trees(10, 1000, 10) == std::numeric_limits<std::size_t>::max());
}

TEST_CASE("canonical order: predict before branch, early stop")
{
    const ThresholdMap th({{0, 1}});
    std::vector<TreeEncoding> first;
    const bool finished = for_each_tree(1, th, 2, [&](const TreeEncoding& t) {
        first.push_back(t);
        return first.size() < 3;
    });
    CHECK_FALSE(finished);
    REQUIRE(first.size() == 3);
    CHECK(first[0] == TreeEncoding::constant(1, 0));
    CHECK(first[1] == TreeEncoding::constant(1, 1));
    CHECK(first[2] == stump(0, 0, 0));
}

TEST_CASE("property: indicator form round-trips and validates")
{
    const ThresholdMap th({{0, 1, 2}, {0}});
    CounterRng rng(11);
    for (int rep = 0; rep < 200; ++rep) {
        const int depth = static_cast<int>(rng.uniform_index(4));
        const auto t = testing::random_tree(depth, th, 3, rng);
        const auto ind = t.to_indicators(th, 3);
        CHECK(validate_encoding(ind, t.topology(), th, 3).valid);
        CHECK(TreeEncoding::from_indicators(ind, th, 3) == t);
    }
}

TEST_CASE("validate_encoding names the violated family")
{
    const ThresholdMap th({{0, 1}});
    auto ind = stump(1).to_indicators(th, 2);
    auto bad = ind;
    bad.b[1][0] = 1; // two thresholds at the root
    auto v = validate_encoding(bad, Topology(1), th, 2);
    CHECK_FALSE(v.valid);
    CHECK(v.family == "internal");
    CHECK(v.node == 1);

    bad = ind;
    bad.w[2][1] = 1; // two labels at a leaf
    v = validate_encoding(bad, Topology(1), th, 2);
    CHECK_FALSE(v.valid);
    CHECK(v.family == "label");

    bad = ind;
    bad.v[2] = 0;
    bad.w[2][0] = 0;
    v = validate_encoding(bad, Topology(1), th, 2);
    CHECK_FALSE(v.valid);
    CHECK(v.family == "leaf");

    bad = ind;
    bad.v[3] = 2;
    CHECK(validate_encoding(bad, Topology(1), th, 2).family == "range");
}

TEST_CASE("decision paths and max-flow agree with routing")
{
    const ThresholdMap th({{0, 1, 2}, {0, 1, 2}});
    CounterRng rng(5);
    for (int rep = 0; rep < 300; ++rep) {
        const auto t = testing::random_tree(2, th, 2, rng);
        std::size_t predicts = 0;
        for (std::size_t n = 1; n < t.nodes().size(); ++n) predicts += t.node(n).role == NodeRole::Predict;
        const auto paths = enumerate_paths(t);
        CHECK(paths.size() == predicts);
        const std::vector<Value> x{static_cast<Value>(rng.uniform_index(5)) - 1,
                                   static_cast<Value>(rng.uniform_index(5)) - 1};
        const auto tr = route(t, x);
        const bool on_some_path =
            std::any_of(paths.begin(), paths.end(), [&](const DecisionPath& p) { return p.nodes == tr.nodes; });
        CHECK(on_some_path);
        for (std::size_t y = 0; y < 2; ++y)
            CHECK(testing::max_flow(testing::flow_graph(t, th, 2, x, y)) == static_cast<int>(tr.label == y));
    }
}

TEST_CASE("json blob, text and dot renderings")
{
    const std::vector<std::string> features{"age", "income"};
    const std::vector<std::string> labels{"no", "yes"};
    const TreeEncoding t(2, {NodeSpec{}, NodeSpec::branch(0, 4), NodeSpec::predict(0), NodeSpec::branch(1, 2),
                             NodeSpec{}, NodeSpec{}, NodeSpec::predict(1), NodeSpec::predict(0)});
    const auto blob = serialize_tree(t, features, labels);
    const auto back = deserialize_tree(blob);
    CHECK(back.tree == t);
    CHECK(back.feature_names == features);
    CHECK(back.label_names == labels);
    CHECK(serialize_tree(back.tree, features, labels) == blob);
    CHECK_THROWS_AS(deserialize_tree("{}"), ValidationError);
    CHECK_THROWS_AS(deserialize_tree("not json"), ValidationError);

    const auto text = render_text(t, features, labels);
    CHECK(text.find("1: age <= 4") != std::string::npos);
    CHECK(text.find("  2: predict no") != std::string::npos);
    CHECK(parse_text(text, 2, features, labels) == t);

    const auto dot = render_dot(t, features, labels);
    CHECK(dot.rfind("digraph", 0) == 0);
    CHECK(dot.find("yes") != std::string::npos);
}

TEST_CASE("check_against rejects thresholds outside Theta")
{
    const ThresholdMap th({{0, 1}});
    CHECK_NOTHROW(stump(1).check_against(th, 2));
    CHECK_THROWS_AS(stump(3).check_against(th, 2), ValidationError);
    CHECK_THROWS_AS(stump(1, 0, 2).check_against(th, 2), ValidationError);
}
