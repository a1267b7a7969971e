#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace canopy {

enum class Task { regression, classification };

struct ColumnKind {
    enum class Type { numeric, categorical };
    Type type = Type::numeric;
    int cardinality = 0;  // categorical only

    static ColumnKind numeric() { return {}; }
    static ColumnKind categorical(int levels) { return {Type::categorical, levels}; }
    bool is_categorical() const { return type == Type::categorical; }
    bool operator==(const ColumnKind&) const = default;
};

/// A feature column. Categorical codes are stored as exact small doubles.
struct Column {
    std::string name;
    ColumnKind kind;
    std::vector<double> values;
    std::vector<std::uint8_t> missing;
    std::vector<std::string> levels;  // categorical: label of each code
};

struct Target {
    std::string name;
    Task task = Task::regression;
    std::vector<double> y;             // regression
    std::vector<int> labels;           // classification codes
    std::vector<std::string> classes;  // classification: label of each code
};

/// Column declarations and level dictionaries shared by a dataset and every
/// model trained on it.
struct Schema {
    std::vector<std::string> names;
    std::vector<ColumnKind> kinds;
    std::vector<std::vector<std::string>> levels;
    std::string target_name;
    Task task = Task::regression;
    std::vector<std::string> classes;

    std::size_t p() const { return names.size(); }
    int n_classes() const { return static_cast<int>(classes.size()); }
    bool operator==(const Schema&) const = default;
};

/// Immutable columnar table with a regression or classification target.
class Dataset {
public:
    Dataset() = default;
    /// Validates lengths, codes and target; throws ArgumentError.
    Dataset(std::vector<Column> columns, Target target);

    std::size_t n() const { return n_; }
    std::size_t p() const { return columns_.size(); }
    Task task() const { return target_.task; }
    int n_classes() const { return static_cast<int>(target_.classes.size()); }
    bool degenerate() const { return n_ == 0 || (task() == Task::classification && n_classes() < 2); }

    const Column& column(std::size_t j) const { return columns_[j]; }
    const std::vector<Column>& columns() const { return columns_; }
    const Target& target() const { return target_; }

    double value(std::size_t i, std::size_t j) const { return columns_[j].values[i]; }
    bool missing(std::size_t i, std::size_t j) const { return columns_[j].missing[i] != 0; }
    double y(std::size_t i) const { return target_.y[i]; }
    int label(std::size_t i) const { return target_.labels[i]; }
    /// Response as a double: y for regression, class code for classification.
    double response(std::size_t i) const {
        return task() == Task::regression ? target_.y[i] : static_cast<double>(target_.labels[i]);
    }

    /// Rows in the given order; level dictionaries and classes are kept.
    Dataset subset(std::span<const std::uint32_t> rows) const;
    /// Same rows, only the listed feature columns (in the given order).
    Dataset select_columns(std::span<const int> vars) const;
    /// Copy with one feature column replaced (same kind and length).
    Dataset with_column(std::size_t j, Column column) const;

    Schema schema() const;
    /// Content hash over values, masks and target.
    std::uint64_t fingerprint() const;
    /// Index of a feature column by name, or -1.
    int find(const std::string& name) const;

private:
    std::size_t n_ = 0;
    std::vector<Column> columns_;
    Target target_;
};

/// Declared kinds for named columns; order is irrelevant.
struct SchemaDecl {
    std::vector<std::pair<std::string, ColumnKind::Type>> entries;
};

SchemaDecl read_schema_file(const std::string& path);
SchemaDecl parse_schema(const std::string& text);

struct CsvOptions {
    /// Categorical levels and classes are coded against this schema when given
    /// (unseen feature levels become missing, unseen classes are a SchemaError).
    const Schema* reference = nullptr;
    /// Allow the target column to be absent (prediction input).
    bool target_optional = false;
};

/// Parse CSV text. Columns present in the file but absent from the schema are
/// ignored. An empty schema infers kinds: numeric when every non-empty cell
/// parses as a number, categorical otherwise.
Dataset parse_csv(const std::string& text, const SchemaDecl& schema, const std::string& target_column,
                  const CsvOptions& options = {});
Dataset load_csv(const std::string& path, const SchemaDecl& schema, const std::string& target_column,
                 const CsvOptions& options = {});

std::string to_csv(const Dataset& ds);
void write_csv(const Dataset& ds, const std::string& path);

/// CSV field text, quoted when it contains separators, quotes or edge spaces.
std::string csv_field(const std::string& s);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

/// Uniform random partition; both parts keep the original row order.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, std::size_t n_train, std::uint64_t seed);
/// Index form of split_train_test.
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> split_indices(std::size_t n, std::size_t n_train,
                                                                                 std::uint64_t seed);

struct ResampleKind {
    enum class Type { bootstrap, subsample, blb, identity };
    Type type = Type::bootstrap;
    std::size_t size = 0;  // bootstrap: draws (0 means n); subsample: k; blb: m distinct rows

    static ResampleKind bootstrap(std::size_t draws = 0) { return {Type::bootstrap, draws}; }
    static ResampleKind subsample(std::size_t k) { return {Type::subsample, k}; }
    static ResampleKind blb(std::size_t m) { return {Type::blb, m}; }
    static ResampleKind identity() { return {Type::identity, 0}; }
    bool operator==(const ResampleKind&) const = default;
};

std::string to_string(ResampleKind kind);
/// Inverse of to_string: "bootstrap", "bootstrap:N", "identity", "subsample:K", "blb:M".
ResampleKind parse_resample_kind(const std::string& text);

struct ResamplePlan {
    ResampleKind kind;
    std::vector<std::uint32_t> multiplicities;
    std::vector<std::uint32_t> oob_rows;

    std::size_t sample_size() const;
};

ResamplePlan draw_resample(std::size_t n, ResampleKind kind, std::uint64_t seed);
/// Plan from explicit multiplicities; oob_rows is derived.
ResamplePlan make_plan(ResampleKind kind, std::vector<std::uint32_t> multiplicities);

}  // namespace canopy
