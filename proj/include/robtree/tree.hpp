#pragma once

#include "robtree/data.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace robtree {

inline constexpr int kMaxDepth = 10;

/// Complete binary tree of depth d in breadth-first numbering: internal nodes
/// 1 .. 2^d - 1, leaves 2^d .. 2^(d+1) - 1, children 2n and 2n+1.
class Topology {
public:
    explicit Topology(int depth, int max_depth = kMaxDepth);

    int depth() const noexcept { return depth_; }
    std::size_t num_internal() const noexcept { return (std::size_t{1} << depth_) - 1; }
    std::size_t num_leaves() const noexcept { return std::size_t{1} << depth_; }
    /// Node ids are 1 .. num_nodes().
    std::size_t num_nodes() const noexcept { return (std::size_t{2} << depth_) - 1; }
    std::size_t first_leaf() const noexcept { return std::size_t{1} << depth_; }

    bool is_leaf(std::size_t n) const noexcept { return n >= first_leaf(); }
    static constexpr std::size_t left(std::size_t n) noexcept { return 2 * n; }
    static constexpr std::size_t right(std::size_t n) noexcept { return 2 * n + 1; }
    static constexpr std::size_t parent(std::size_t n) noexcept { return n / 2; }
    /// A(n), nearest first.
    std::vector<std::size_t> ancestors(std::size_t n) const;
    /// Number of edges from the root.
    static int level(std::size_t n) noexcept;

    bool operator==(const Topology&) const = default;

private:
    int depth_;
};

enum class NodeRole { Branch, Predict, Pruned };
const char* to_string(NodeRole role) noexcept;

struct NodeSpec {
    NodeRole role = NodeRole::Pruned;
    std::size_t feature = 0;
    Value threshold = 0;
    std::size_t label = 0;

    static NodeSpec branch(std::size_t f, Value theta) { return {NodeRole::Branch, f, theta, 0}; }
    static NodeSpec predict(std::size_t k) { return {NodeRole::Predict, 0, 0, k}; }

    bool operator==(const NodeSpec& o) const noexcept
    {
        if (role != o.role) return false;
        if (role == NodeRole::Branch) return feature == o.feature && threshold == o.threshold;
        if (role == NodeRole::Predict) return label == o.label;
        return true;
    }
};

/// Raw (b, v, w) indicator form. b is indexed by node and by the flat
/// (feature, threshold) position of a ThresholdMap.
struct EncodingIndicators {
    int depth = 0;
    std::vector<std::vector<int>> b; // [node][flat threshold]
    std::vector<int> v;              // [node]
    std::vector<std::vector<int>> w; // [node][label]
};

struct EncodingVerdict {
    bool valid = true;
    /// "internal", "leaf", "label" or "range"; empty when valid.
    std::string family;
    std::size_t node = 0;
    std::string message;
};

/// Checks binary values and the three membership constraint families; the
/// first violation is reported.
EncodingVerdict validate_encoding(const EncodingIndicators& enc, const Topology& topo,
                                  const ThresholdMap& thresholds, std::size_t num_labels);

/// A member of S, stored per node. Construction enforces the structural
/// constraints: branch nodes are internal, a node is pruned iff some ancestor
/// predicts, every unpruned leaf predicts.
class TreeEncoding {
public:
    /// nodes[n] for n = 1 .. num_nodes(); nodes[0] is ignored.
    TreeEncoding(int depth, std::vector<NodeSpec> nodes);
    /// Depth-d tree predicting `label` at the root.
    static TreeEncoding constant(int depth, std::size_t label);

    static TreeEncoding from_indicators(const EncodingIndicators& enc, const ThresholdMap& thresholds,
                                        std::size_t num_labels);
    EncodingIndicators to_indicators(const ThresholdMap& thresholds, std::size_t num_labels) const;

    const Topology& topology() const noexcept { return topo_; }
    int depth() const noexcept { return topo_.depth(); }
    const NodeSpec& node(std::size_t n) const { return nodes_[n]; }
    const std::vector<NodeSpec>& nodes() const noexcept { return nodes_; }
    std::size_t num_branch_nodes() const noexcept;

    /// Throws ValidationError if a branch uses a (feature, threshold) outside
    /// `thresholds` or a label index exceeds num_labels.
    void check_against(const ThresholdMap& thresholds, std::size_t num_labels) const;
    void check_ranges(std::size_t num_features, std::size_t num_labels) const;

    bool operator==(const TreeEncoding& o) const { return topo_ == o.topo_ && nodes_ == o.nodes_; }

private:
    Topology topo_;
    std::vector<NodeSpec> nodes_;
};

struct RoutingTrace {
    std::vector<std::size_t> nodes;
    std::size_t label = 0;

    std::size_t terminal() const { return nodes.back(); }
};

/// Branch rule: go right iff x_f >= theta + 1. Stops at the first predict node.
RoutingTrace route(const TreeEncoding& tree, std::span<const Value> x);
/// Id of the prediction node reached by x, without recording the trace.
std::size_t route_terminal(const TreeEncoding& tree, std::span<const Value> x);

/// Root-to-prediction-node sequence; s and t are implicit.
struct DecisionPath {
    std::vector<std::size_t> nodes;

    std::size_t terminal() const { return nodes.back(); }
    bool operator==(const DecisionPath&) const = default;
};

/// All decision paths of a tree in left-before-right depth-first order.
std::vector<DecisionPath> enumerate_paths(const TreeEncoding& tree);

/// Visits every member of S in canonical order: at each node in preorder,
/// predict (labels ascending) before branch (features, then thresholds
/// ascending). The visitor returns false to stop; the function returns
/// false iff it was stopped.
bool for_each_tree(int depth, const ThresholdMap& thresholds, std::size_t num_labels,
                   const std::function<bool(const TreeEncoding&)>& visit);
/// |S| for the given shape, saturating at SIZE_MAX.
std::size_t count_trees(int depth, std::size_t num_thresholds, std::size_t num_labels);

/// Versioned JSON blob with feature and label names for later validation.
struct TreeBlob {
    TreeEncoding tree;
    std::vector<std::string> feature_names;
    std::vector<std::string> label_names;
};

std::string serialize_tree(const TreeEncoding& tree, const std::vector<std::string>& feature_names,
                           const std::vector<std::string>& label_names);
TreeBlob deserialize_tree(const std::string& blob);

/// Indented text, one line per reachable node, e.g. "1: x <= 5".
std::string render_text(const TreeEncoding& tree, const std::vector<std::string>& feature_names,
                        const std::vector<std::string>& label_names);
TreeEncoding parse_text(const std::string& text, int depth, const std::vector<std::string>& feature_names,
                        const std::vector<std::string>& label_names);
std::string render_dot(const TreeEncoding& tree, const std::vector<std::string>& feature_names,
                       const std::vector<std::string>& label_names);

} // namespace robtree
