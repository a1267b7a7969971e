#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canopy/cart.hpp"
#include "canopy/data.hpp"

namespace canopy {

struct ForestParams {
    int ntree = 500;
    int mtry = 0;      // 0: floor(sqrt(k)) for classification, floor(k/3) for regression, at least 1
    int nodesize = 0;  // 0: 1 for classification, 5 for regression
    std::optional<ResampleKind> resample;  // default: bootstrap, identity for extra-randomized
    SplitMode split_mode = SplitMode::exhaustive;
    int random_splits = 1;
    std::uint64_t seed = 1;
    std::vector<int> variables;  // restrict splitting to these variables; empty means all

    bool operator==(const ForestParams&) const = default;
};

/// Copy of `params` with every default filled in for `ds`. Throws ArgumentError
/// on invalid values.
ForestParams resolve(const ForestParams& params, const Dataset& ds);

struct ForestTree {
    Tree tree;
    ResampleKind kind;
    std::vector<std::uint32_t> inbag;  // multiplicity per dataset row
    std::uint64_t seed = 0;

    bool operator==(const ForestTree&) const = default;
};

struct ForestPrediction {
    double value = 0.0;          // mean prediction, or winning class code
    std::vector<double> votes;   // classification: votes per class
};

struct EvalReport {
    double error = 0.0;
    std::vector<double> losses;  // per row; NaN where the row was not evaluated
    std::size_t evaluated = 0;
    std::size_t excluded = 0;
};

class Forest {
public:
    Forest() = default;

    const Schema& schema() const { return *schema_; }
    const std::shared_ptr<const Schema>& schema_ptr() const { return schema_; }
    Task task() const { return schema_->task; }
    const ForestParams& params() const { return params_; }
    const std::vector<ForestTree>& trees() const { return trees_; }
    std::size_t ntree() const { return trees_.size(); }

    template <class Row>
    ForestPrediction predict(const Row& row) const {
        ForestPrediction out;
        if (task() == Task::classification) {
            out.votes.assign(static_cast<std::size_t>(schema_->n_classes()), 0.0);
            for (const auto& ft : trees_) out.votes[static_cast<std::size_t>(ft.tree.predict(row))] += 1.0;
            std::size_t best = 0;
            for (std::size_t c = 1; c < out.votes.size(); ++c)
                if (out.votes[c] > out.votes[best]) best = c;
            out.value = static_cast<double>(best);
        } else {
            double sum = 0;
            for (const auto& ft : trees_) sum += ft.tree.predict(row);
            out.value = sum / static_cast<double>(trees_.size());
        }
        return out;
    }
    ForestPrediction predict(const Dataset& ds, std::size_t i) const { return predict(DatasetRow{&ds, i}); }

    /// OOB aggregation state of the training data.
    bool oob_available() const { return oob_available_; }
    std::uint64_t training_fingerprint() const { return training_fingerprint_; }
    /// Rows the forest was trained on; empty means every row.
    const std::vector<std::uint32_t>& training_rows() const { return training_rows_; }
    const std::vector<double>& oob_sums() const { return oob_sums_; }
    const std::vector<std::uint32_t>& oob_counts() const { return oob_counts_; }

    bool operator==(const Forest&) const;

private:
    friend class ForestAccess;

    std::shared_ptr<const Schema> schema_;
    ForestParams params_;
    std::vector<ForestTree> trees_;
    bool oob_available_ = false;
    std::uint64_t training_fingerprint_ = 0;
    std::size_t training_n_ = 0;
    std::vector<std::uint32_t> training_rows_;
    std::vector<double> oob_sums_;  // regression: n sums; classification: n x L votes
    std::vector<std::uint32_t> oob_counts_;
};

struct TrainOptions {
    int workers = 1;
    /// Train on these rows only (sorted, distinct); empty means every row.
    std::vector<std::uint32_t> rows;
    std::function<void(std::size_t done, std::size_t total)> progress;
};

Forest train_forest(const Dataset& ds, const ForestParams& params, const TrainOptions& options = {});

/// Fingerprint of a training set restricted to `rows` (empty or full means the
/// dataset fingerprint).
std::uint64_t training_fingerprint(const Dataset& ds, std::span<const std::uint32_t> rows);

/// OOB error of the forest on its training data.
EvalReport oob_error(const Forest& f, const Dataset& ds);
/// Error of the forest on a labelled dataset.
EvalReport test_error(const Forest& f, const Dataset& ds);
/// OOB error of each tree; NaN for trees with an empty OOB set.
std::vector<double> tree_oob_errors(const Forest& f, const Dataset& ds);

Forest merge_forests(std::span<const Forest> forests);

void write_forest(std::ostream& out, const Forest& f);
Forest read_forest(std::istream& in);
void save_forest(const Forest& f, const std::string& path);
Forest load_forest(const std::string& path);

void write_forest_params(class TokenWriter& w, const ForestParams& p);
ForestParams read_forest_params(class TokenReader& r);

}  // namespace canopy
