#include "robtree/tree.hpp"

#include "robtree/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <limits>
#include <sstream>

namespace robtree {

using json = nlohmann::ordered_json;

Topology::Topology(int depth, int max_depth) : depth_(depth)
{
    if (depth < 0 || depth > max_depth)
        throw ValidationError("tree depth " + std::to_string(depth) + " outside [0, " + std::to_string(max_depth) +
                              "]");
}

std::vector<std::size_t> Topology::ancestors(std::size_t n) const
{
    std::vector<std::size_t> out;
    for (n = parent(n); n >= 1; n = parent(n)) out.push_back(n);
    return out;
}

int Topology::level(std::size_t n) noexcept
{
    int l = 0;
    while (n > 1) {
        n /= 2;
        ++l;
    }
    return l;
}

const char* to_string(NodeRole role) noexcept
{
    switch (role) {
    case NodeRole::Branch: return "branch";
    case NodeRole::Predict: return "predict";
    case NodeRole::Pruned: return "pruned";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------

EncodingVerdict validate_encoding(const EncodingIndicators& enc, const Topology& topo,
                                  const ThresholdMap& thresholds, std::size_t num_labels)
{
    auto fail = [](std::string family, std::size_t node, std::string msg) {
        return EncodingVerdict{false, std::move(family), node, std::move(msg)};
    };
    const std::size_t nn = topo.num_nodes();
    if (enc.depth != topo.depth()) return fail("range", 0, "indicator depth does not match topology");
    if (enc.v.size() != nn + 1 || enc.w.size() != nn + 1 || enc.b.size() != topo.num_internal() + 1)
        return fail("range", 0, "indicator arrays do not match topology size");
    for (std::size_t n = 1; n <= nn; ++n) {
        if (enc.w[n].size() != num_labels) return fail("range", n, "w row has wrong label count");
        if (enc.v[n] != 0 && enc.v[n] != 1) return fail("range", n, "v is not binary");
        for (int x : enc.w[n])
            if (x != 0 && x != 1) return fail("range", n, "w is not binary");
        if (n <= topo.num_internal()) {
            if (enc.b[n].size() != thresholds.total()) return fail("range", n, "b row has wrong threshold count");
            for (int x : enc.b[n])
                if (x != 0 && x != 1) return fail("range", n, "b is not binary");
        }
    }
    for (std::size_t n = 1; n <= nn; ++n) {
        int anc = 0;
        for (auto m : topo.ancestors(n)) anc += enc.v[m];
        if (n <= topo.num_internal()) {
            int bsum = 0;
            for (int x : enc.b[n]) bsum += x;
            if (bsum + enc.v[n] + anc != 1)
                return fail("internal", n, "sum of b, v and ancestor v at internal node " + std::to_string(n) +
                                               " is " + std::to_string(bsum + enc.v[n] + anc) + ", not 1");
        } else if (enc.v[n] + anc != 1) {
            return fail("leaf", n, "v plus ancestor v at leaf " + std::to_string(n) + " is " +
                                       std::to_string(enc.v[n] + anc) + ", not 1");
        }
    }
    for (std::size_t n = 1; n <= nn; ++n) {
        int wsum = 0;
        for (int x : enc.w[n]) wsum += x;
        if (wsum != enc.v[n])
            return fail("label", n, "v at node " + std::to_string(n) + " differs from the sum of its w");
    }
    return {};
}

TreeEncoding::TreeEncoding(int depth, std::vector<NodeSpec> nodes) : topo_(depth), nodes_(std::move(nodes))
{
    const std::size_t nn = topo_.num_nodes();
    if (nodes_.size() != nn + 1)
        throw ValidationError("tree of depth " + std::to_string(depth) + " needs " + std::to_string(nn) + " nodes");
    nodes_[0] = NodeSpec{};
    // pruned_above[n]: some ancestor of n predicts.
    std::vector<char> pruned_above(nn + 1, 0);
    for (std::size_t n = 1; n <= nn; ++n) {
        if (n > 1) {
            const auto p = Topology::parent(n);
            pruned_above[n] = pruned_above[p] || nodes_[p].role == NodeRole::Predict;
        }
        const auto role = nodes_[n].role;
        if (pruned_above[n]) {
            if (role != NodeRole::Pruned)
                throw ValidationError("node " + std::to_string(n) + " lies below a prediction node but is not pruned");
            continue;
        }
        if (role == NodeRole::Pruned)
            throw ValidationError("node " + std::to_string(n) + " is pruned but no ancestor predicts");
        if (role == NodeRole::Branch && topo_.is_leaf(n))
            throw ValidationError("leaf " + std::to_string(n) + " cannot branch");
    }
}

TreeEncoding TreeEncoding::constant(int depth, std::size_t label)
{
    Topology topo(depth);
    std::vector<NodeSpec> nodes(topo.num_nodes() + 1);
    nodes[1] = NodeSpec::predict(label);
    return TreeEncoding(depth, std::move(nodes));
}

TreeEncoding TreeEncoding::from_indicators(const EncodingIndicators& enc, const ThresholdMap& thresholds,
                                           std::size_t num_labels)
{
    Topology topo(enc.depth);
    auto verdict = validate_encoding(enc, topo, thresholds, num_labels);
    if (!verdict.valid)
        throw ValidationError("encoding not in S (" + verdict.family + " constraint): " + verdict.message);
    std::vector<NodeSpec> nodes(topo.num_nodes() + 1);
    for (std::size_t n = 1; n <= topo.num_nodes(); ++n) {
        if (enc.v[n]) {
            for (std::size_t k = 0; k < num_labels; ++k)
                if (enc.w[n][k]) nodes[n] = NodeSpec::predict(k);
        } else if (n <= topo.num_internal()) {
            for (std::size_t f = 0; f < thresholds.num_features(); ++f)
                for (std::size_t j = 0; j < thresholds.of(f).size(); ++j)
                    if (enc.b[n][thresholds.offset(f) + j]) nodes[n] = NodeSpec::branch(f, thresholds.of(f)[j]);
        }
    }
    return TreeEncoding(enc.depth, std::move(nodes));
}

EncodingIndicators TreeEncoding::to_indicators(const ThresholdMap& thresholds, std::size_t num_labels) const
{
    check_against(thresholds, num_labels);
    const std::size_t nn = topo_.num_nodes();
    EncodingIndicators enc;
    enc.depth = depth();
    enc.v.assign(nn + 1, 0);
    enc.w.assign(nn + 1, std::vector<int>(num_labels, 0));
    enc.b.assign(topo_.num_internal() + 1, std::vector<int>(thresholds.total(), 0));
    for (std::size_t n = 1; n <= nn; ++n) {
        const auto& s = nodes_[n];
        if (s.role == NodeRole::Predict) {
            enc.v[n] = 1;
            enc.w[n][s.label] = 1;
        } else if (s.role == NodeRole::Branch) {
            enc.b[n][thresholds.offset(s.feature) + thresholds.index_of(s.feature, s.threshold)] = 1;
        }
    }
    return enc;
}

std::size_t TreeEncoding::num_branch_nodes() const noexcept
{
    std::size_t c = 0;
    for (const auto& s : nodes_) c += s.role == NodeRole::Branch;
    return c;
}

void TreeEncoding::check_ranges(std::size_t num_features, std::size_t num_labels) const
{
    for (std::size_t n = 1; n < nodes_.size(); ++n) {
        const auto& s = nodes_[n];
        if (s.role == NodeRole::Branch && s.feature >= num_features)
            throw ValidationError("node " + std::to_string(n) + " branches on unknown feature index " +
                                  std::to_string(s.feature));
        if (s.role == NodeRole::Predict && s.label >= num_labels)
            throw ValidationError("node " + std::to_string(n) + " predicts unknown label index " +
                                  std::to_string(s.label));
    }
}

void TreeEncoding::check_against(const ThresholdMap& thresholds, std::size_t num_labels) const
{
    check_ranges(thresholds.num_features(), num_labels);
    for (std::size_t n = 1; n < nodes_.size(); ++n) {
        const auto& s = nodes_[n];
        if (s.role == NodeRole::Branch && !thresholds.contains(s.feature, s.threshold))
            throw ValidationError("node " + std::to_string(n) + ": threshold " + std::to_string(s.threshold) +
                                  " is not a candidate for feature " + std::to_string(s.feature));
    }
}

// ---------------------------------------------------------------------------

std::size_t route_terminal(const TreeEncoding& tree, std::span<const Value> x)
{
    std::size_t n = 1;
    while (true) {
        const auto& s = tree.node(n);
        if (s.role != NodeRole::Branch) return n;
        n = x[s.feature] >= s.threshold + 1 ? Topology::right(n) : Topology::left(n);
    }
}

RoutingTrace route(const TreeEncoding& tree, std::span<const Value> x)
{
    RoutingTrace trace;
    std::size_t n = 1;
    while (true) {
        trace.nodes.push_back(n);
        const auto& s = tree.node(n);
        if (s.role != NodeRole::Branch) break;
        n = x[s.feature] >= s.threshold + 1 ? Topology::right(n) : Topology::left(n);
    }
    trace.label = tree.node(n).label;
    return trace;
}

std::vector<DecisionPath> enumerate_paths(const TreeEncoding& tree)
{
    std::vector<DecisionPath> out;
    std::vector<std::size_t> stack;
    std::function<void(std::size_t)> walk = [&](std::size_t n) {
        stack.push_back(n);
        if (tree.node(n).role == NodeRole::Branch) {
            walk(Topology::left(n));
            walk(Topology::right(n));
        } else {
            out.push_back(DecisionPath{stack});
        }
        stack.pop_back();
    };
    walk(1);
    return out;
}

namespace {

class TreeEnumerator {
public:
    TreeEnumerator(int depth, const ThresholdMap& th, std::size_t num_labels,
                   const std::function<bool(const TreeEncoding&)>& visit)
        : topo_(depth), th_(th), num_labels_(num_labels), visit_(visit), nodes_(topo_.num_nodes() + 1)
    {
    }

    bool run()
    {
        return fill(1, [this] { return visit_(TreeEncoding(topo_.depth(), nodes_)); });
    }

private:
    void prune_below(std::size_t n)
    {
        if (n > topo_.num_nodes()) return;
        nodes_[n] = NodeSpec{};
        prune_below(Topology::left(n));
        prune_below(Topology::right(n));
    }

    // Fills the subtree at n, calling cont() once per completed choice.
    bool fill(std::size_t n, const std::function<bool()>& cont)
    {
        prune_below(Topology::left(n));
        prune_below(Topology::right(n));
        for (std::size_t k = 0; k < num_labels_; ++k) {
            nodes_[n] = NodeSpec::predict(k);
            if (!cont()) return false;
        }
        if (topo_.is_leaf(n)) return true;
        for (std::size_t f = 0; f < th_.num_features(); ++f) {
            for (Value theta : th_.of(f)) {
                nodes_[n] = NodeSpec::branch(f, theta);
                const std::function<bool()> right = [&] { return fill(Topology::right(n), cont); };
                if (!fill(Topology::left(n), right)) return false;
            }
        }
        return true;
    }

    Topology topo_;
    const ThresholdMap& th_;
    std::size_t num_labels_;
    const std::function<bool(const TreeEncoding&)>& visit_;
    std::vector<NodeSpec> nodes_;
};

} // namespace

bool for_each_tree(int depth, const ThresholdMap& thresholds, std::size_t num_labels,
                   const std::function<bool(const TreeEncoding&)>& visit)
{
    TreeEnumerator e(depth, thresholds, num_labels, visit);
    return e.run();
}

std::size_t count_trees(int depth, std::size_t num_thresholds, std::size_t num_labels)
{
    constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max();
    std::size_t c = num_labels;
    for (int d = 1; d <= depth; ++d) {
        if (c != 0 && c > kMax / c) return kMax;
        std::size_t sq = c * c;
        if (num_thresholds != 0 && sq > (kMax - num_labels) / num_thresholds) return kMax;
        c = num_labels + num_thresholds * sq;
    }
    return c;
}

// ---------------------------------------------------------------------------

std::string serialize_tree(const TreeEncoding& tree, const std::vector<std::string>& feature_names,
                           const std::vector<std::string>& label_names)
{
    tree.check_ranges(feature_names.size(), label_names.size());
    json root;
    root["format"] = "robtree-tree";
    root["version"] = 1;
    root["depth"] = tree.depth();
    root["features"] = feature_names;
    root["labels"] = label_names;
    json nodes = json::array();
    for (std::size_t n = 1; n <= tree.topology().num_nodes(); ++n) {
        const auto& s = tree.node(n);
        json j;
        j["id"] = n;
        j["role"] = to_string(s.role);
        if (s.role == NodeRole::Branch) {
            j["feature"] = s.feature;
            j["threshold"] = s.threshold;
        } else if (s.role == NodeRole::Predict) {
            j["label"] = s.label;
        }
        nodes.push_back(std::move(j));
    }
    root["nodes"] = std::move(nodes);
    return root.dump(2) + "\n";
}

TreeBlob deserialize_tree(const std::string& blob)
{
    json root;
    try {
        root = json::parse(blob);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("tree blob: malformed JSON: ") + e.what());
    }
    try {
        if (!root.is_object() || root.value("format", std::string{}) != "robtree-tree")
            throw ValidationError("tree blob: not a robtree-tree document");
        if (root.at("version").get<int>() != 1)
            throw ValidationError("tree blob: unsupported version " + root.at("version").dump());
        const int depth = root.at("depth").get<int>();
        Topology topo(depth);
        auto features = root.at("features").get<std::vector<std::string>>();
        auto labels = root.at("labels").get<std::vector<std::string>>();
        std::vector<NodeSpec> nodes(topo.num_nodes() + 1);
        std::vector<char> seen(topo.num_nodes() + 1, 0);
        for (const auto& j : root.at("nodes")) {
            const auto id = j.at("id").get<std::size_t>();
            if (id < 1 || id > topo.num_nodes() || seen[id])
                throw ValidationError("tree blob: invalid or duplicate node id " + std::to_string(id));
            seen[id] = 1;
            const auto role = j.at("role").get<std::string>();
            if (role == "branch")
                nodes[id] = NodeSpec::branch(j.at("feature").get<std::size_t>(), j.at("threshold").get<Value>());
            else if (role == "predict")
                nodes[id] = NodeSpec::predict(j.at("label").get<std::size_t>());
            else if (role != "pruned")
                throw ValidationError("tree blob: unknown role '" + role + "'");
        }
        for (std::size_t n = 1; n <= topo.num_nodes(); ++n)
            if (!seen[n]) throw ValidationError("tree blob: node " + std::to_string(n) + " missing");
        TreeEncoding tree(depth, std::move(nodes));
        tree.check_ranges(features.size(), labels.size());
        return TreeBlob{std::move(tree), std::move(features), std::move(labels)};
    } catch (const json::exception& e) {
        throw ValidationError(std::string("tree blob: ") + e.what());
    }
}

namespace {

std::string node_text(const NodeSpec& s, const std::vector<std::string>& features,
                      const std::vector<std::string>& labels)
{
    if (s.role == NodeRole::Branch) return features.at(s.feature) + " <= " + std::to_string(s.threshold);
    return "predict " + labels.at(s.label);
}

} // namespace

std::string render_text(const TreeEncoding& tree, const std::vector<std::string>& feature_names,
                        const std::vector<std::string>& label_names)
{
    tree.check_ranges(feature_names.size(), label_names.size());
    std::ostringstream out;
    std::function<void(std::size_t)> walk = [&](std::size_t n) {
        const auto& s = tree.node(n);
        out << std::string(2 * static_cast<std::size_t>(Topology::level(n)), ' ') << n << ": "
            << node_text(s, feature_names, label_names) << "\n";
        if (s.role == NodeRole::Branch) {
            walk(Topology::left(n));
            walk(Topology::right(n));
        }
    };
    walk(1);
    return out.str();
}

TreeEncoding parse_text(const std::string& text, int depth, const std::vector<std::string>& feature_names,
                        const std::vector<std::string>& label_names)
{
    Topology topo(depth);
    std::vector<NodeSpec> nodes(topo.num_nodes() + 1);
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(' ');
        if (first == std::string::npos) continue;
        const auto colon = line.find(": ", first);
        auto bad = [&](const std::string& why) {
            return ValidationError("tree text line " + std::to_string(lineno) + ": " + why);
        };
        if (colon == std::string::npos) throw bad("expected '<id>: ...'");
        std::size_t id = 0;
        auto [p, ec] = std::from_chars(line.data() + first, line.data() + colon, id);
        if (ec != std::errc() || p != line.data() + colon || id < 1 || id > topo.num_nodes())
            throw bad("invalid node id");
        const std::string body = line.substr(colon + 2);
        if (body.rfind("predict ", 0) == 0) {
            const auto name = body.substr(8);
            auto it = std::find(label_names.begin(), label_names.end(), name);
            if (it == label_names.end()) throw bad("unknown label '" + name + "'");
            nodes[id] = NodeSpec::predict(static_cast<std::size_t>(it - label_names.begin()));
            continue;
        }
        const auto op = body.rfind(" <= ");
        if (op == std::string::npos) throw bad("expected '<feature> <= <threshold>' or 'predict <label>'");
        const auto fname = body.substr(0, op);
        auto it = std::find(feature_names.begin(), feature_names.end(), fname);
        if (it == feature_names.end()) throw bad("unknown feature '" + fname + "'");
        const auto tstr = body.substr(op + 4);
        Value theta = 0;
        auto [q, ec2] = std::from_chars(tstr.data(), tstr.data() + tstr.size(), theta);
        if (ec2 != std::errc() || q != tstr.data() + tstr.size()) throw bad("invalid threshold");
        nodes[id] = NodeSpec::branch(static_cast<std::size_t>(it - feature_names.begin()), theta);
    }
    return TreeEncoding(depth, std::move(nodes));
}

std::string render_dot(const TreeEncoding& tree, const std::vector<std::string>& feature_names,
                       const std::vector<std::string>& label_names)
{
    tree.check_ranges(feature_names.size(), label_names.size());
    auto quote = [](const std::string& s) {
        std::string out = "\"";
        for (char c : s) {
            if (c == '"' || c == '\\') out += '\\';
            out += c;
        }
        return out + "\"";
    };
    std::ostringstream out;
    out << "digraph tree {\n  node [fontname=\"Helvetica\"];\n";
    std::function<void(std::size_t)> walk = [&](std::size_t n) {
        const auto& s = tree.node(n);
        out << "  n" << n << " [label=" << quote(node_text(s, feature_names, label_names))
            << (s.role == NodeRole::Branch ? ", shape=box" : ", shape=ellipse") << "];\n";
        if (s.role == NodeRole::Branch) {
            out << "  n" << n << " -> n" << Topology::left(n) << " [label=\"yes\"];\n";
            out << "  n" << n << " -> n" << Topology::right(n) << " [label=\"no\"];\n";
            walk(Topology::left(n));
            walk(Topology::right(n));
        }
    };
    walk(1);
    out << "}\n";
    return out.str();
}

} // namespace robtree
