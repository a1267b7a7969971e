#include "canopy/data.hpp"

#include <bit>
#include <cstring>
#include <numeric>

#include "canopy/errors.hpp"
#include "canopy/random.hpp"

namespace canopy {

Dataset::Dataset(std::vector<Column> columns, Target target) : columns_(std::move(columns)), target_(std::move(target)) {
    n_ = target_.task == Task::regression ? target_.y.size() : target_.labels.size();
    const int n_classes = static_cast<int>(target_.classes.size());
    if (target_.task == Task::classification) {
        if (!target_.y.empty() && target_.y.size() != n_) throw ArgumentError("target length mismatch");
        for (int c : target_.labels)
            if (c < 0 || c >= n_classes) throw ArgumentError("class code out of range");
    } else {
        for (double v : target_.y)
            if (v != v) throw TargetMissingError("regression target contains NaN");
    }
    for (auto& col : columns_) {
        if (col.values.size() != n_) throw ArgumentError("column '" + col.name + "' has wrong length");
        if (col.missing.empty()) col.missing.assign(n_, 0);
        if (col.missing.size() != n_) throw ArgumentError("missing mask of '" + col.name + "' has wrong length");
        if (col.kind.is_categorical()) {
            if (col.kind.cardinality < 1) throw ArgumentError("categorical cardinality must be positive");
            if (col.levels.empty())
                for (int c = 0; c < col.kind.cardinality; ++c) col.levels.push_back(std::to_string(c));
            if (static_cast<int>(col.levels.size()) != col.kind.cardinality)
                throw ArgumentError("level dictionary of '" + col.name + "' does not match cardinality");
            for (std::size_t i = 0; i < n_; ++i) {
                if (col.missing[i]) continue;
                const double v = col.values[i];
                if (!(v >= 0) || v >= col.kind.cardinality || v != static_cast<double>(static_cast<int>(v)))
                    throw ArgumentError("category code out of range in '" + col.name + "'");
            }
        }
        for (std::size_t i = 0; i < n_; ++i)
            if (col.missing[i]) col.values[i] = 0.0;
    }
}

Dataset Dataset::subset(std::span<const std::uint32_t> rows) const {
    std::vector<Column> cols;
    cols.reserve(columns_.size());
    for (const auto& c : columns_) {
        Column out{c.name, c.kind, {}, {}, c.levels};
        out.values.reserve(rows.size());
        out.missing.reserve(rows.size());
        for (auto r : rows) {
            out.values.push_back(c.values[r]);
            out.missing.push_back(c.missing[r]);
        }
        cols.push_back(std::move(out));
    }
    Target t{target_.name, target_.task, {}, {}, target_.classes};
    for (auto r : rows) {
        if (task() == Task::regression)
            t.y.push_back(target_.y[r]);
        else
            t.labels.push_back(target_.labels[r]);
    }
    return Dataset(std::move(cols), std::move(t));
}

Dataset Dataset::select_columns(std::span<const int> vars) const {
    std::vector<Column> cols;
    cols.reserve(vars.size());
    for (int j : vars) {
        if (j < 0 || static_cast<std::size_t>(j) >= p()) throw ArgumentError("column index out of range");
        cols.push_back(columns_[static_cast<std::size_t>(j)]);
    }
    return Dataset(std::move(cols), target_);
}

Dataset Dataset::with_column(std::size_t j, Column column) const {
    if (j >= p()) throw ArgumentError("column index out of range");
    if (!(column.kind == columns_[j].kind)) throw ArgumentError("replacement column kind differs");
    std::vector<Column> cols = columns_;
    cols[j] = std::move(column);
    return Dataset(std::move(cols), target_);
}

Schema Dataset::schema() const {
    Schema s;
    for (const auto& c : columns_) {
        s.names.push_back(c.name);
        s.kinds.push_back(c.kind);
        s.levels.push_back(c.levels);
    }
    s.target_name = target_.name;
    s.task = target_.task;
    s.classes = target_.classes;
    return s;
}

std::uint64_t Dataset::fingerprint() const {
    std::uint64_t h = mix64(n_ * 0x100000001b3ULL + columns_.size());
    auto feed = [&h](std::uint64_t v) { h = mix64(h ^ v); };
    for (const auto& c : columns_) {
        feed(c.kind.is_categorical() ? static_cast<std::uint64_t>(c.kind.cardinality) + 1 : 0);
        for (std::size_t i = 0; i < n_; ++i) feed(c.missing[i] ? 0x7ff8dead0000beefULL : std::bit_cast<std::uint64_t>(c.values[i]));
    }
    feed(static_cast<std::uint64_t>(target_.task));
    for (std::size_t i = 0; i < n_; ++i)
        feed(task() == Task::regression ? std::bit_cast<std::uint64_t>(target_.y[i])
                                        : static_cast<std::uint64_t>(target_.labels[i]));
    return h;
}

int Dataset::find(const std::string& name) const {
    for (std::size_t j = 0; j < columns_.size(); ++j)
        if (columns_[j].name == name) return static_cast<int>(j);
    return -1;
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> split_indices(std::size_t n, std::size_t n_train,
                                                                                 std::uint64_t seed) {
    if (n_train == 0 || n_train >= n) throw ArgumentError("n_train must satisfy 0 < n_train < n");
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(derive_seed(seed, {0x53504c4954ULL}));
    rng.partial_shuffle(std::span<std::uint32_t>(order), n_train);
    std::vector<std::uint8_t> in_train(n, 0);
    for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = 1;
    std::vector<std::uint32_t> train, test;
    train.reserve(n_train);
    test.reserve(n - n_train);
    for (std::uint32_t i = 0; i < n; ++i) (in_train[i] ? train : test).push_back(i);
    return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, std::size_t n_train, std::uint64_t seed) {
    auto [train, test] = split_indices(ds.n(), n_train, seed);
    return {ds.subset(train), ds.subset(test)};
}

}  // namespace canopy
