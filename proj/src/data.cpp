#include "robtree/data.hpp"

#include "robtree/error.hpp"
#include "robtree/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace robtree {

using json = nlohmann::ordered_json;

const char* to_string(FeatureKind kind) noexcept
{
    switch (kind) {
    case FeatureKind::Integer: return "integer";
    case FeatureKind::Binary: return "binary";
    case FeatureKind::CategoricalMember: return "categorical-member";
    }
    return "unknown";
}

const char* to_string(ShiftDirection dir) noexcept
{
    switch (dir) {
    case ShiftDirection::Both: return "both";
    case ShiftDirection::UpOnly: return "up";
    case ShiftDirection::DownOnly: return "down";
    case ShiftDirection::None: return "none";
    }
    return "unknown";
}

ShiftDirection parse_shift_direction(const std::string& text)
{
    if (text == "both") return ShiftDirection::Both;
    if (text == "up") return ShiftDirection::UpOnly;
    if (text == "down") return ShiftDirection::DownOnly;
    if (text == "none") return ShiftDirection::None;
    throw ValidationError("unknown shift direction '" + text + "' (expected both, up, down or none)");
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<FeatureSchema> features, std::vector<CategoricalGroup> groups,
                 std::vector<Value> values, std::vector<std::size_t> labels,
                 std::vector<std::string> label_names, std::string label_column)
    : features_(std::move(features)), groups_(std::move(groups)), values_(std::move(values)),
      labels_(std::move(labels)), label_names_(std::move(label_names)), label_column_(std::move(label_column))
{
    const std::size_t cols = features_.size();
    if (cols == 0) throw ValidationError("dataset has no feature columns");
    if (labels_.empty()) throw ValidationError("dataset has no rows");
    if (values_.size() != labels_.size() * cols)
        throw ValidationError("value matrix size does not match rows x features");
    if (label_names_.size() < 2) throw ValidationError("need at least two distinct labels");
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i] >= label_names_.size())
            throw ValidationError("row " + std::to_string(i) + ": label index out of range");

    for (std::size_t f = 0; f < cols; ++f) {
        auto& s = features_[f];
        if (s.kind == FeatureKind::Binary) {
            if ((s.lower && *s.lower != 0) || (s.upper && *s.upper != 1))
                throw ValidationError("binary feature '" + s.name + "' must have bounds [0, 1]");
            s.lower = 0;
            s.upper = 1;
        }
        if (s.kind == FeatureKind::CategoricalMember) {
            if (!s.group || *s.group >= groups_.size())
                throw ValidationError("categorical member '" + s.name + "' has no valid group");
            s.lower = 0;
            s.upper = 1;
            if (s.shift == ShiftDirection::UpOnly || s.shift == ShiftDirection::DownOnly)
                throw ValidationError("categorical member '" + s.name + "' only supports shift both or none");
        } else if (s.group) {
            throw ValidationError("feature '" + s.name + "' is not categorical but names a group");
        }
        if (s.lower && s.upper && *s.lower > *s.upper)
            throw ValidationError("feature '" + s.name + "': lower bound exceeds upper bound");
    }

    for (std::size_t g = 0; g < groups_.size(); ++g) {
        const auto& grp = groups_[g];
        if (grp.members.size() < 2)
            throw ValidationError("categorical group '" + grp.name + "' needs at least two members");
        if (grp.expanded() && grp.levels.size() != grp.members.size())
            throw ValidationError("categorical group '" + grp.name + "': levels do not match members");
        const auto& first = features_.at(grp.members.front());
        for (auto m : grp.members) {
            if (m >= cols || features_[m].group != g)
                throw ValidationError("categorical group '" + grp.name + "' lists a foreign column");
            if (features_[m].shift != first.shift || features_[m].rho != first.rho)
                throw ValidationError("categorical group '" + grp.name + "': members disagree on shift or rho");
        }
    }
    for (std::size_t f = 0; f < cols; ++f) {
        const auto& s = features_[f];
        if (s.group) {
            const auto& m = groups_[*s.group].members;
            if (std::find(m.begin(), m.end(), f) == m.end())
                throw ValidationError("feature '" + s.name + "' missing from its group's member list");
        }
        if (s.rho) {
            if (!(*s.rho > 0.0 && *s.rho <= 1.0))
                throw ValidationError("feature '" + s.name + "': rho must lie in (0, 1]");
            if (*s.rho < minimum_rho(f) - 1e-12)
                throw ValidationError("feature '" + s.name + "': rho " + std::to_string(*s.rho) +
                                      " below the maximal-uncertainty bound " + std::to_string(minimum_rho(f)));
        }
    }

    for (std::size_t i = 0; i < labels_.size(); ++i) {
        for (std::size_t f = 0; f < cols; ++f) {
            const auto& s = features_[f];
            const Value v = values_[i * cols + f];
            if ((s.lower && v < *s.lower) || (s.upper && v > *s.upper))
                throw ValidationError("row " + std::to_string(i) + ", column '" + s.name + "': value " +
                                      std::to_string(v) + " violates bounds");
        }
        for (const auto& grp : groups_) {
            Value sum = 0;
            for (auto m : grp.members) sum += values_[i * cols + m];
            if (sum != 1)
                throw ValidationError("row " + std::to_string(i) + ": group '" + grp.name + "' is not one-hot");
        }
    }
}

std::vector<std::string> Dataset::feature_names() const
{
    std::vector<std::string> names;
    names.reserve(features_.size());
    for (const auto& f : features_) names.push_back(f.name);
    return names;
}

double Dataset::minimum_rho(std::size_t f) const
{
    const auto& s = features_.at(f);
    switch (s.kind) {
    case FeatureKind::Binary: return 0.5;
    case FeatureKind::CategoricalMember: return 1.0 / static_cast<double>(groups_.at(*s.group).members.size());
    case FeatureKind::Integer:
        if (s.lower && s.upper) return 1.0 / static_cast<double>(*s.upper - *s.lower + 1);
        return 0.0;
    }
    return 0.0;
}

Dataset Dataset::with_values(std::vector<Value> values) const
{
    return Dataset(features_, groups_, std::move(values), labels_, label_names_, label_column_);
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const
{
    std::vector<Value> values;
    std::vector<std::size_t> labels;
    values.reserve(rows.size() * num_features());
    for (auto r : rows) {
        if (r >= num_rows()) throw ValidationError("subset row index out of range");
        auto x = row(r);
        values.insert(values.end(), x.begin(), x.end());
        labels.push_back(labels_[r]);
    }
    return Dataset(features_, groups_, std::move(values), std::move(labels), label_names_, label_column_);
}

Dataset Dataset::relabel(const std::vector<std::string>& names) const
{
    std::vector<std::size_t> labels(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        auto it = std::find(names.begin(), names.end(), label_names_[labels_[i]]);
        if (it == names.end())
            throw ValidationError("label '" + label_names_[labels_[i]] + "' unknown to the target label set");
        labels[i] = static_cast<std::size_t>(it - names.begin());
    }
    return Dataset(features_, groups_, values_, std::move(labels), names, label_column_);
}

std::size_t Dataset::count_label(std::size_t k) const
{
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), k));
}

// ---------------------------------------------------------------------------
// ThresholdMap

ThresholdMap::ThresholdMap(std::vector<std::vector<Value>> per_feature) : thresholds_(std::move(per_feature))
{
    offsets_.reserve(thresholds_.size());
    for (auto& t : thresholds_) {
        std::sort(t.begin(), t.end());
        t.erase(std::unique(t.begin(), t.end()), t.end());
        offsets_.push_back(total_);
        total_ += t.size();
    }
}

bool ThresholdMap::contains(std::size_t f, Value theta) const
{
    if (f >= thresholds_.size()) return false;
    return std::binary_search(thresholds_[f].begin(), thresholds_[f].end(), theta);
}

std::size_t ThresholdMap::index_of(std::size_t f, Value theta) const
{
    const auto& t = thresholds_.at(f);
    auto it = std::lower_bound(t.begin(), t.end(), theta);
    if (it == t.end() || *it != theta)
        throw ValidationError("threshold " + std::to_string(theta) + " not in Theta(" + std::to_string(f) + ")");
    return static_cast<std::size_t>(it - t.begin());
}

ThresholdMap compute_thresholds(const Dataset& data)
{
    std::vector<std::vector<Value>> out(data.num_features());
    for (std::size_t f = 0; f < data.num_features(); ++f) {
        if (data.feature(f).kind == FeatureKind::CategoricalMember) {
            out[f] = {0};
            continue;
        }
        Value lo = data.value(0, f), hi = lo;
        for (std::size_t i = 1; i < data.num_rows(); ++i) {
            lo = std::min(lo, data.value(i, f));
            hi = std::max(hi, data.value(i, f));
        }
        for (Value t = lo; t < hi; ++t) out[f].push_back(t);
    }
    return ThresholdMap(std::move(out));
}

// ---------------------------------------------------------------------------
// Schema + CSV

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where)
{
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ValidationError("schema: unknown key '" + it.key() + "' in " + where);
    }
}

struct SchemaColumn {
    std::string name;
    std::string kind;
    std::optional<Value> lower, upper;
    ShiftDirection shift = ShiftDirection::Both;
    std::optional<double> rho;
    std::vector<Value> levels;
    std::string group;
};

struct Schema {
    std::string label;
    std::vector<SchemaColumn> columns;
};

template <class T>
T get_as(const json& j, const char* key, const std::string& where)
{
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("schema: key '" + std::string(key) + "' in " + where + " has the wrong type");
    }
}

Schema parse_schema(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("schema: malformed JSON: ") + e.what());
    }
    if (!root.is_object()) throw ValidationError("schema: top level must be an object");
    reject_unknown_keys(root, {"version", "label", "columns"}, "schema root");
    if (!root.contains("version") || get_as<int>(root, "version", "root") != 1)
        throw ValidationError("schema: unsupported or missing version (expected 1)");
    if (!root.contains("label") || !root.contains("columns"))
        throw ValidationError("schema: 'label' and 'columns' are required");
    Schema schema;
    schema.label = get_as<std::string>(root, "label", "root");
    if (!root["columns"].is_array()) throw ValidationError("schema: 'columns' must be an array");
    for (const auto& c : root["columns"]) {
        if (!c.is_object()) throw ValidationError("schema: column entries must be objects");
        if (!c.contains("name") || !c.contains("kind"))
            throw ValidationError("schema: every column needs 'name' and 'kind'");
        SchemaColumn col;
        col.name = get_as<std::string>(c, "name", "column");
        const std::string where = "column '" + col.name + "'";
        col.kind = get_as<std::string>(c, "kind", where);
        if (col.kind == "integer")
            reject_unknown_keys(c, {"name", "kind", "lower", "upper", "shift", "rho"}, where);
        else if (col.kind == "binary")
            reject_unknown_keys(c, {"name", "kind", "shift", "rho"}, where);
        else if (col.kind == "categorical")
            reject_unknown_keys(c, {"name", "kind", "levels", "shift", "rho"}, where);
        else if (col.kind == "categorical-member")
            reject_unknown_keys(c, {"name", "kind", "group", "shift", "rho"}, where);
        else
            throw ValidationError("schema: " + where + " has unknown kind '" + col.kind + "'");
        if (c.contains("lower")) col.lower = get_as<Value>(c, "lower", where);
        if (c.contains("upper")) col.upper = get_as<Value>(c, "upper", where);
        if (c.contains("shift")) col.shift = parse_shift_direction(get_as<std::string>(c, "shift", where));
        if (c.contains("rho")) col.rho = get_as<double>(c, "rho", where);
        if (col.kind == "categorical") {
            if (!c.contains("levels")) throw ValidationError("schema: " + where + " needs 'levels'");
            col.levels = get_as<std::vector<Value>>(c, "levels", where);
            std::set<Value> uniq(col.levels.begin(), col.levels.end());
            if (col.levels.size() < 2 || uniq.size() != col.levels.size())
                throw ValidationError("schema: " + where + " needs at least two distinct levels");
        }
        if (col.kind == "categorical-member") {
            if (!c.contains("group")) throw ValidationError("schema: " + where + " needs 'group'");
            col.group = get_as<std::string>(c, "group", where);
        }
        schema.columns.push_back(std::move(col));
    }
    if (schema.columns.empty()) throw ValidationError("schema: no columns");
    return schema;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        cells.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

std::optional<Value> parse_int(std::string_view s)
{
    Value v = 0;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

/// Integers sort numerically, anything else lexicographically.
std::vector<std::string> order_labels(std::set<std::string> raw)
{
    std::vector<std::string> names(raw.begin(), raw.end());
    bool numeric = std::all_of(names.begin(), names.end(), [](const std::string& s) { return parse_int(s).has_value(); });
    if (numeric)
        std::sort(names.begin(), names.end(),
                  [](const std::string& a, const std::string& b) { return *parse_int(a) < *parse_int(b); });
    return names;
}

std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& content)
{
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + p.string() + "'");
    out << content;
}

} // namespace

Dataset parse_dataset(const std::string& csv_text, const std::string& schema_json)
{
    const Schema schema = parse_schema(schema_json);

    std::vector<std::string> lines;
    {
        std::istringstream in(csv_text);
        std::string line;
        while (std::getline(in, line)) {
            if (!trim(line).empty()) lines.push_back(line);
        }
    }
    if (lines.empty()) throw ValidationError("csv: missing header row");
    const auto header = split_csv_line(lines.front());
    std::map<std::string, std::size_t> col_index;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (!col_index.emplace(header[c], c).second)
            throw ValidationError("csv: duplicate header column '" + header[c] + "'");
    }
    std::set<std::string> expected{schema.label};
    for (const auto& c : schema.columns) {
        if (!expected.insert(c.name).second) throw ValidationError("schema: duplicate column '" + c.name + "'");
    }
    for (const auto& h : header)
        if (!expected.count(h)) throw ValidationError("csv: header column '" + h + "' not in schema");
    for (const auto& e : expected)
        if (!col_index.count(e)) throw ValidationError("csv: schema column '" + e + "' missing from header");

    // Expand schema columns into feature columns.
    std::vector<FeatureSchema> features;
    std::vector<CategoricalGroup> groups;
    std::map<std::string, std::size_t> member_group;
    struct Source {
        std::size_t csv_col;
        std::size_t first_feature;
        const SchemaColumn* col;
    };
    std::vector<Source> sources;
    for (const auto& c : schema.columns) {
        Source src{col_index.at(c.name), features.size(), &c};
        if (c.kind == "categorical") {
            const std::size_t g = groups.size();
            CategoricalGroup grp{c.name, {}, c.levels};
            for (Value level : c.levels) {
                grp.members.push_back(features.size());
                FeatureSchema fs;
                fs.name = c.name + "=" + std::to_string(level);
                fs.kind = FeatureKind::CategoricalMember;
                fs.shift = c.shift;
                fs.rho = c.rho;
                fs.group = g;
                features.push_back(std::move(fs));
            }
            groups.push_back(std::move(grp));
        } else {
            FeatureSchema fs;
            fs.name = c.name;
            fs.kind = c.kind == "binary" ? FeatureKind::Binary
                      : c.kind == "integer" ? FeatureKind::Integer
                                            : FeatureKind::CategoricalMember;
            fs.lower = c.lower;
            fs.upper = c.upper;
            fs.shift = c.shift;
            fs.rho = c.rho;
            if (fs.kind == FeatureKind::CategoricalMember) {
                auto [it, inserted] = member_group.emplace(c.group, groups.size());
                if (inserted) groups.push_back(CategoricalGroup{c.group, {}, {}});
                fs.group = it->second;
                groups[it->second].members.push_back(features.size());
            }
            features.push_back(std::move(fs));
        }
        sources.push_back(src);
    }

    const std::size_t label_col = col_index.at(schema.label);
    std::vector<Value> values;
    std::vector<std::string> raw_labels;
    std::set<std::string> label_set;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_csv_line(lines[r]);
        if (cells.size() != header.size())
            throw ValidationError("csv row " + std::to_string(r) + ": expected " + std::to_string(header.size()) +
                                  " cells, found " + std::to_string(cells.size()));
        std::vector<Value> row(features.size(), 0);
        for (const auto& src : sources) {
            const auto& cell = cells[src.csv_col];
            auto v = parse_int(cell);
            if (!v)
                throw ValidationError("csv row " + std::to_string(r) + ", column '" + src.col->name +
                                      "': cannot parse '" + cell + "' as an integer");
            if (src.col->kind == "categorical") {
                auto it = std::find(src.col->levels.begin(), src.col->levels.end(), *v);
                if (it == src.col->levels.end())
                    throw ValidationError("csv row " + std::to_string(r) + ", column '" + src.col->name +
                                          "': unknown categorical level " + cell);
                row[src.first_feature + static_cast<std::size_t>(it - src.col->levels.begin())] = 1;
            } else {
                row[src.first_feature] = *v;
            }
        }
        values.insert(values.end(), row.begin(), row.end());
        const auto& lab = cells[label_col];
        if (lab.empty()) throw ValidationError("csv row " + std::to_string(r) + ": empty label");
        raw_labels.push_back(lab);
        label_set.insert(lab);
    }
    auto names = order_labels(label_set);
    std::vector<std::size_t> labels;
    labels.reserve(raw_labels.size());
    for (const auto& l : raw_labels)
        labels.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), l) - names.begin()));
    return Dataset(std::move(features), std::move(groups), std::move(values), std::move(labels), std::move(names),
                   schema.label);
}

Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path)
{
    return parse_dataset(read_file(csv_path), read_file(schema_path));
}

std::string schema_to_json(const Dataset& data)
{
    json root;
    root["version"] = 1;
    root["label"] = data.label_column();
    json cols = json::array();
    std::set<std::size_t> emitted_groups;
    for (std::size_t f = 0; f < data.num_features(); ++f) {
        const auto& s = data.feature(f);
        json c;
        if (s.kind == FeatureKind::CategoricalMember && data.groups()[*s.group].expanded()) {
            if (!emitted_groups.insert(*s.group).second) continue;
            const auto& g = data.groups()[*s.group];
            c["name"] = g.name;
            c["kind"] = "categorical";
            c["levels"] = g.levels;
        } else {
            c["name"] = s.name;
            c["kind"] = s.kind == FeatureKind::Integer ? "integer"
                        : s.kind == FeatureKind::Binary ? "binary"
                                                        : "categorical-member";
            if (s.kind == FeatureKind::Integer) {
                if (s.lower) c["lower"] = *s.lower;
                if (s.upper) c["upper"] = *s.upper;
            }
            if (s.kind == FeatureKind::CategoricalMember) c["group"] = data.groups()[*s.group].name;
        }
        c["shift"] = to_string(s.shift);
        if (s.rho) c["rho"] = *s.rho;
        cols.push_back(std::move(c));
    }
    root["columns"] = std::move(cols);
    return root.dump(2) + "\n";
}

std::string dataset_to_csv(const Dataset& data)
{
    std::vector<std::string> header;
    std::set<std::size_t> emitted_groups;
    for (std::size_t f = 0; f < data.num_features(); ++f) {
        const auto& s = data.feature(f);
        if (s.kind == FeatureKind::CategoricalMember && data.groups()[*s.group].expanded()) {
            if (emitted_groups.insert(*s.group).second) header.push_back(data.groups()[*s.group].name);
        } else {
            header.push_back(s.name);
        }
    }
    header.push_back(data.label_column());
    std::ostringstream out;
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << "\n";
    for (std::size_t i = 0; i < data.num_rows(); ++i) {
        emitted_groups.clear();
        bool first = true;
        for (std::size_t f = 0; f < data.num_features(); ++f) {
            const auto& s = data.feature(f);
            if (s.kind == FeatureKind::CategoricalMember && data.groups()[*s.group].expanded()) {
                if (!emitted_groups.insert(*s.group).second) continue;
                const auto& g = data.groups()[*s.group];
                Value level = g.levels.front();
                for (std::size_t k = 0; k < g.members.size(); ++k)
                    if (data.value(i, g.members[k]) == 1) level = g.levels[k];
                out << (first ? "" : ",") << level;
            } else {
                out << (first ? "" : ",") << data.value(i, f);
            }
            first = false;
        }
        out << "," << data.label_names()[data.label(i)] << "\n";
    }
    return out.str();
}

void export_dataset(const Dataset& data, const std::filesystem::path& csv_path,
                    const std::filesystem::path& schema_path)
{
    write_file(csv_path, dataset_to_csv(data));
    write_file(schema_path, schema_to_json(data));
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double fraction, std::uint64_t seed)
{
    if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("split fraction must lie in (0, 1)");
    const std::size_t n = data.num_rows();
    if (n < 2) throw ValidationError("cannot split a dataset with fewer than two rows");
    auto n_train = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    CounterRng rng(derive_seed(seed, 0x5eed));
    for (std::size_t k = n - 1; k > 0; --k) std::swap(order[k], order[rng.uniform_index(k + 1)]);

    std::span<const std::size_t> all(order);
    return {data.subset(all.first(n_train)), data.subset(all.subspan(n_train))};
}

} // namespace robtree
