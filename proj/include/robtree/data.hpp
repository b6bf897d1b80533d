#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace robtree {

using Value = std::int64_t;

enum class FeatureKind { Integer, Binary, CategoricalMember };

/// Which directions a feature is allowed to drift in at deployment.
enum class ShiftDirection { Both, UpOnly, DownOnly, None };

const char* to_string(FeatureKind kind) noexcept;
const char* to_string(ShiftDirection dir) noexcept;
ShiftDirection parse_shift_direction(const std::string& text);

/// Type information for one (one-hot expanded) feature column.
struct FeatureSchema {
    std::string name;
    FeatureKind kind = FeatureKind::Integer;
    std::optional<Value> lower;
    std::optional<Value> upper;
    ShiftDirection shift = ShiftDirection::Both;
    /// Probability that the observed value is the true one; broadcast over samples.
    std::optional<double> rho;
    /// Index into Dataset::groups() for categorical members.
    std::optional<std::size_t> group;

    bool allows_up() const noexcept { return shift == ShiftDirection::Both || shift == ShiftDirection::UpOnly; }
    bool allows_down() const noexcept { return shift == ShiftDirection::Both || shift == ShiftDirection::DownOnly; }

    bool operator==(const FeatureSchema&) const = default;
};

/// A one-hot encoded categorical feature: the member columns and, when the
/// group was expanded from a single source column, the level codes.
struct CategoricalGroup {
    std::string name;
    std::vector<std::size_t> members;
    std::vector<Value> levels;

    bool expanded() const noexcept { return !levels.empty(); }
    bool operator==(const CategoricalGroup&) const = default;
};

/// Immutable, validated integer dataset with dense label indices.
class Dataset {
public:
    Dataset(std::vector<FeatureSchema> features, std::vector<CategoricalGroup> groups, std::vector<Value> values,
            std::vector<std::size_t> labels, std::vector<std::string> label_names,
            std::string label_column = "label");

    std::size_t num_rows() const noexcept { return labels_.size(); }
    std::size_t num_features() const noexcept { return features_.size(); }
    std::size_t num_labels() const noexcept { return label_names_.size(); }

    Value value(std::size_t row, std::size_t feature) const { return values_[row * features_.size() + feature]; }
    std::span<const Value> row(std::size_t i) const
    {
        return {values_.data() + i * features_.size(), features_.size()};
    }
    std::span<const Value> values() const noexcept { return values_; }
    std::size_t label(std::size_t row) const { return labels_[row]; }
    std::span<const std::size_t> labels() const noexcept { return labels_; }

    const std::vector<FeatureSchema>& features() const noexcept { return features_; }
    const FeatureSchema& feature(std::size_t f) const { return features_[f]; }
    const std::vector<CategoricalGroup>& groups() const noexcept { return groups_; }
    const std::vector<std::string>& label_names() const noexcept { return label_names_; }
    const std::string& label_column() const noexcept { return label_column_; }
    std::vector<std::string> feature_names() const;
    /// Smallest admissible certainty for feature f: 1/2 for binary, 1/(U-L+1)
    /// with two bounds, 1/|group| for categorical members, otherwise 0.
    double minimum_rho(std::size_t f) const;

    /// Same schema and labels, different covariates (validated).
    Dataset with_values(std::vector<Value> values) const;
    /// Rows selected by index, in the given order; label set is preserved.
    Dataset subset(std::span<const std::size_t> rows) const;
    /// Re-index labels against `names`; throws if a row's label is unknown there.
    Dataset relabel(const std::vector<std::string>& names) const;

    std::size_t count_label(std::size_t k) const;

    bool operator==(const Dataset&) const = default;

private:
    std::vector<FeatureSchema> features_;
    std::vector<CategoricalGroup> groups_;
    std::vector<Value> values_;
    std::vector<std::size_t> labels_;
    std::vector<std::string> label_names_;
    std::string label_column_;
};

/// Per feature, the sorted integer thresholds a branching node may test.
class ThresholdMap {
public:
    ThresholdMap() = default;
    explicit ThresholdMap(std::vector<std::vector<Value>> per_feature);

    std::size_t num_features() const noexcept { return thresholds_.size(); }
    const std::vector<Value>& of(std::size_t f) const { return thresholds_[f]; }
    bool contains(std::size_t f, Value theta) const;
    /// Position of theta within of(f); theta must be contained.
    std::size_t index_of(std::size_t f, Value theta) const;
    /// Total number of (feature, threshold) pairs.
    std::size_t total() const noexcept { return total_; }
    /// Offset of feature f's block in a flat (feature, threshold) array.
    std::size_t offset(std::size_t f) const { return offsets_[f]; }

    bool operator==(const ThresholdMap&) const = default;

private:
    std::vector<std::vector<Value>> thresholds_;
    std::vector<std::size_t> offsets_;
    std::size_t total_ = 0;
};

/// Reads a CSV file plus its JSON schema sidecar. Categorical source columns
/// are expanded into member columns named "<column>=<level>" in schema order.
Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path);
Dataset parse_dataset(const std::string& csv_text, const std::string& schema_json);

/// Writes CSV and schema so that load_dataset reproduces `data` exactly.
void export_dataset(const Dataset& data, const std::filesystem::path& csv_path,
                    const std::filesystem::path& schema_path);
std::string dataset_to_csv(const Dataset& data);
std::string schema_to_json(const Dataset& data);

/// Theta(f) = {c_f, ..., d_f - 1} from the observed range; one-hot members get {0}.
ThresholdMap compute_thresholds(const Dataset& data);

/// Deterministic shuffle, then ceil(fraction * n) training rows (at most n - 1).
std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double fraction, std::uint64_t seed);

} // namespace robtree
