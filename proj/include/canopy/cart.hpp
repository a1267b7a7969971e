#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canopy/data.hpp"

namespace canopy {

class Rng;

/// Binary rule on one variable. Numeric: left iff x <= threshold (inverted when
/// `reversed`). Categorical: per-level side, 1 left, 0 right, 2 not observed at
/// the node (routed like a missing value).
struct Split {
    int variable = -1;
    bool categorical = false;
    double threshold = 0.0;
    bool reversed = false;
    std::vector<std::uint8_t> levels;
    double decrease = 0.0;

    /// 1 left, 0 right, -1 undetermined (missing value or unseen level).
    int direction(bool missing, double x) const {
        if (missing) return -1;
        if (!categorical) return ((x <= threshold) != reversed) ? 1 : 0;
        const auto code = static_cast<std::size_t>(x);
        if (x < 0 || code >= levels.size() || levels[code] > 1) return -1;
        return levels[code];
    }
    bool operator==(const Split&) const = default;
};

struct Surrogate {
    Split split;
    double agreement = 0.0;  // training weight routed like the primary split
    double baseline = 0.0;   // weight of the majority direction on the same rows
    bool operator==(const Surrogate&) const = default;
};

struct Node {
    int left = -1;
    int right = -1;
    Split split;  // meaningful only when left >= 0
    std::vector<Split> competing;
    std::vector<Surrogate> surrogates;
    bool majority_left = true;
    double weight = 0.0;                // training weight reaching the node
    double value = 0.0;                 // mean response, or majority class code
    std::vector<double> distribution;   // classification: class proportions
    double impurity = 0.0;              // V(t) or Phi(t)
    double risk = 0.0;                  // misclassified weight, or sum of squared deviations
    double error = 0.0;                 // risk divided by the root weight
    int depth = 0;

    bool is_leaf() const { return left < 0; }
    bool operator==(const Node&) const = default;
};

enum class SplitMode { exhaustive, extra_randomized };

struct GrowParams {
    int min_node_size = 1;   // nodes with less training weight are not split
    int min_child_size = 1;  // splits leaving a child lighter than this are inadmissible
    int mtry = 0;            // candidate variables drawn per node; 0 draws all
    SplitMode split_mode = SplitMode::exhaustive;
    int random_splits = 1;   // extra-randomized: thresholds drawn per variable
    int max_surrogates = 0;
    bool competing = false;
    std::vector<int> variables;  // allowed split variables; empty means all

    bool operator==(const GrowParams&) const = default;
};

/// Defaults for a standalone CART tree: competing splits and five surrogates.
GrowParams cart_defaults();

/// Row accessor over a dataset.
struct DatasetRow {
    const Dataset* ds;
    std::size_t i;
    bool missing(int j) const { return ds->missing(i, static_cast<std::size_t>(j)); }
    double value(int j) const { return ds->value(i, static_cast<std::size_t>(j)); }
};

class Tree {
public:
    Tree() = default;
    Tree(std::shared_ptr<const Schema> schema, GrowParams params, std::vector<Node> nodes);

    const std::vector<Node>& nodes() const { return nodes_; }
    const Node& node(std::size_t t) const { return nodes_[t]; }
    const Node& root() const { return nodes_.front(); }
    const Schema& schema() const { return *schema_; }
    const std::shared_ptr<const Schema>& schema_ptr() const { return schema_; }
    const GrowParams& params() const { return params_; }
    Task task() const { return schema_->task; }

    std::size_t size() const { return nodes_.size(); }
    std::size_t leaf_count() const;
    /// Distinct variables used by primary splits, ascending.
    std::vector<int> split_variables() const;

    /// Leaf reached by `row`. `internal(t)` decides whether node t may be
    /// descended (used to evaluate pruned subtrees in place).
    template <class Row, class Internal>
    std::size_t route(const Row& row, bool use_surrogates, Internal&& internal) const {
        std::size_t t = 0;
        while (nodes_[t].left >= 0 && internal(t)) {
            const Node& nd = nodes_[t];
            const int j = nd.split.variable;
            int dir = nd.split.direction(row.missing(j), row.value(j));
            if (dir < 0 && use_surrogates) {
                for (const auto& s : nd.surrogates) {
                    const int k = s.split.variable;
                    dir = s.split.direction(row.missing(k), row.value(k));
                    if (dir >= 0) break;
                }
            }
            if (dir < 0) dir = nd.majority_left ? 1 : 0;
            t = static_cast<std::size_t>(dir ? nd.left : nd.right);
        }
        return t;
    }
    template <class Row>
    std::size_t leaf_for(const Row& row, bool use_surrogates = true) const {
        return route(row, use_surrogates, [](std::size_t) { return true; });
    }
    template <class Row>
    double predict(const Row& row) const {
        return nodes_[leaf_for(row)].value;
    }
    double predict(const Dataset& ds, std::size_t i) const { return predict(DatasetRow{&ds, i}); }

    bool operator==(const Tree& other) const;

private:
    std::shared_ptr<const Schema> schema_;
    GrowParams params_;
    std::vector<Node> nodes_;
};

/// Rows sorted by value for every column, observed cells only; shared by all
/// trees grown on one dataset.
class ColumnOrder {
public:
    explicit ColumnOrder(const Dataset& ds);
    std::span<const std::uint32_t> sorted(std::size_t j) const { return order_[j]; }

private:
    std::vector<std::vector<std::uint32_t>> order_;
};

/// Grow a tree on the rows with positive weight; a weight w acts as w copies of
/// the row. `rng` drives mtry draws and extra-randomized thresholds and may be
/// null when neither is used.
Tree grow_tree(const Dataset& ds, std::span<const std::uint32_t> weights, const GrowParams& params, Rng* rng,
               const ColumnOrder* order = nullptr, std::shared_ptr<const Schema> schema = nullptr);

/// Unweighted tree on every row of ds.
Tree grow_maximal(const Dataset& ds, const GrowParams& params);

struct NodeStats {
    double weight = 0.0;
    std::vector<std::int64_t> counts;  // classification
    double sum = 0.0;                  // regression (centered at `center`)
    double center = 0.0;
};

/// Best split over candidate variables at a node given by its weighted rows
/// (rows with weight 0 are ignored). Exhaustive search.
std::optional<Split> best_split_at(const Dataset& ds, std::span<const std::uint32_t> rows,
                                   std::span<const std::uint32_t> weights, std::span<const int> candidates,
                                   int min_child_size);
/// Best split per variable, ranked by decreasing decrease, ties to the lower index.
std::vector<Split> competing_splits_at(const Dataset& ds, std::span<const std::uint32_t> rows,
                                       std::span<const std::uint32_t> weights, int min_child_size);
/// Surrogates for `primary` among the other variables, ranked by agreement.
std::vector<Surrogate> surrogate_splits_at(const Dataset& ds, std::span<const std::uint32_t> rows,
                                           std::span<const std::uint32_t> weights, const Split& primary,
                                           int max_surrogates);
/// One extra-randomized draw at a node: per candidate, S random cut points; best kept.
std::optional<Split> extra_randomized_split(const Dataset& ds, std::span<const std::uint32_t> rows,
                                            std::span<const std::uint32_t> weights, std::span<const int> candidates,
                                            int random_splits, int min_child_size, Rng& rng);

/// Gini index of class proportions.
double gini(std::span<const double> proportions);

struct PruningSequence {
    std::vector<double> alphas;   // alpha_1 = 0 < alpha_2 < ...
    std::vector<int> leaves;      // |T_k|
    std::vector<double> errors;   // err(T_k)
    /// Per node of T_max: node t is internal in T_k (1-based k) iff k < collapse_step[t].
    std::vector<int> collapse_step;

    std::size_t size() const { return alphas.size(); }
    bool internal_in(std::size_t node, std::size_t k) const { return static_cast<std::size_t>(collapse_step[node]) > k; }
};

PruningSequence prune_sequence(const Tree& t_max);
/// Materialize T_k (1-based) as a standalone tree with renumbered nodes.
Tree subtree(const Tree& t_max, const PruningSequence& seq, std::size_t k);
/// Index k (1-based) of the subtree in force at penalty alpha.
std::size_t subtree_at(const PruningSequence& seq, double alpha);

enum class CvRule { min, one_se };

struct CvPoint {
    double alpha = 0.0;
    double beta = 0.0;
    int leaves = 0;
    double error = 0.0;
    double se = 0.0;
};

struct CvResult {
    Tree maximal;
    PruningSequence sequence;
    std::vector<CvPoint> curve;
    std::size_t chosen_min = 1;     // 1-based index into the sequence
    std::size_t chosen_one_se = 1;
    Tree tree;                      // subtree selected by the requested rule
    std::size_t chosen = 1;
};

/// Penalty factor applied to alpha_K for the last CV evaluation point.
inline constexpr double kCvLastAlphaFactor = 1e6;

CvResult select_subtree_cv(const Dataset& ds, const GrowParams& params, int folds, CvRule rule, std::uint64_t seed,
                           int workers = 1);

/// Training error: misclassification rate or mean squared error.
double tree_error(const Tree& tree, const Dataset& ds);

void write_tree(std::ostream& out, const Tree& tree);
Tree read_tree(std::istream& in);
void save_tree(const Tree& tree, const std::string& path);
Tree load_tree(const std::string& path);

}  // namespace canopy
