#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>

#include "canopy/ensemble.hpp"
#include "canopy/errors.hpp"
#include "canopy/parallel.hpp"
#include "canopy/random.hpp"
#include "forest_access.hpp"

namespace canopy {
namespace {

std::size_t class_of(std::span<const double> votes) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c)
        if (votes[c] > votes[best]) best = c;
    return best;
}

GrowParams grow_params_for(const ForestParams& p, std::size_t allowed) {
    GrowParams g;
    g.min_node_size = p.nodesize;
    g.min_child_size = 1;
    g.mtry = static_cast<std::size_t>(p.mtry) >= allowed ? 0 : p.mtry;
    g.split_mode = p.split_mode;
    g.random_splits = p.random_splits;
    g.max_surrogates = 0;
    g.competing = false;
    g.variables = p.variables;
    return g;
}

}  // namespace

ForestParams resolve(const ForestParams& params, const Dataset& ds) {
    ForestParams p = params;
    if (p.ntree < 1) throw ArgumentError("ntree must be at least 1");
    std::sort(p.variables.begin(), p.variables.end());
    p.variables.erase(std::unique(p.variables.begin(), p.variables.end()), p.variables.end());
    for (int j : p.variables)
        if (j < 0 || static_cast<std::size_t>(j) >= ds.p()) throw ArgumentError("variable index out of range");
    const std::size_t k = p.variables.empty() ? ds.p() : p.variables.size();
    if (k == 0) throw ArgumentError("no candidate variables");
    if (p.mtry == 0) {
        const double kd = static_cast<double>(k);
        const auto m = ds.task() == Task::classification ? std::floor(std::sqrt(kd)) : std::floor(kd / 3.0);
        p.mtry = std::max(1, static_cast<int>(m));
    }
    if (p.mtry < 1 || static_cast<std::size_t>(p.mtry) > k)
        throw ArgumentError("mtry must lie in 1.." + std::to_string(k));
    if (p.nodesize == 0) p.nodesize = ds.task() == Task::classification ? 1 : 5;
    if (p.nodesize < 1) throw ArgumentError("nodesize must be positive");
    if (p.random_splits < 1) throw ArgumentError("random_splits must be at least 1");
    if (!p.resample)
        p.resample = p.split_mode == SplitMode::extra_randomized ? ResampleKind::identity() : ResampleKind::bootstrap();
    return p;
}

std::uint64_t training_fingerprint(const Dataset& ds, std::span<const std::uint32_t> rows) {
    std::uint64_t h = ds.fingerprint();
    if (rows.empty() || rows.size() == ds.n()) return h;
    h = mix64(h ^ 0x726f777375627365ULL);
    for (auto r : rows) h = mix64(h ^ r);
    return h;
}

Forest train_forest(const Dataset& ds, const ForestParams& params, const TrainOptions& options) {
    if (ds.n() == 0) throw ArgumentError("cannot train on an empty dataset");
    const ForestParams rp = resolve(params, ds);
    const std::size_t n = ds.n();
    std::vector<std::uint32_t> rows = options.rows;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i] >= n || (i > 0 && rows[i] <= rows[i - 1]))
            throw ArgumentError("training rows must be sorted, distinct and in range");
    if (rows.size() == n) rows.clear();
    const std::size_t n_train = rows.empty() ? n : rows.size();
    if (n_train == 0) throw ArgumentError("empty training row set");

    const std::size_t allowed = rp.variables.empty() ? ds.p() : rp.variables.size();
    const GrowParams gp = grow_params_for(rp, allowed);
    const ColumnOrder order(ds);
    auto schema = std::make_shared<const Schema>(ds.schema());

    Forest f;
    ForestAccess::schema(f) = schema;
    ForestAccess::params(f) = rp;
    auto& trees = ForestAccess::trees(f);
    const auto q = static_cast<std::size_t>(rp.ntree);
    std::vector<std::optional<ForestTree>> slots(q);
    std::mutex progress_mutex;
    std::size_t done = 0;
    parallel_for(q, options.workers, [&](std::size_t l) {
        const std::uint64_t tree_seed = derive_seed(rp.seed, {l});
        const ResamplePlan plan = draw_resample(n_train, *rp.resample, derive_seed(tree_seed, {0}));
        std::vector<std::uint32_t> inbag;
        if (rows.empty()) {
            inbag = plan.multiplicities;
        } else {
            inbag.assign(n, 0);
            for (std::size_t i = 0; i < n_train; ++i) inbag[rows[i]] = plan.multiplicities[i];
        }
        Rng rng(derive_seed(tree_seed, {1}));
        Tree tree = grow_tree(ds, inbag, gp, &rng, &order, schema);
        slots[l] = ForestTree{std::move(tree), *rp.resample, std::move(inbag), tree_seed};
        if (options.progress) {
            std::lock_guard lock(progress_mutex);
            options.progress(++done, q);
        }
    });
    trees.reserve(q);
    for (auto& s : slots) trees.push_back(std::move(*s));

    const std::size_t L = ds.task() == Task::classification ? static_cast<std::size_t>(ds.n_classes()) : 1;
    auto& sums = ForestAccess::oob_sums(f);
    auto& counts = ForestAccess::oob_counts(f);
    sums.assign(n * L, 0.0);
    counts.assign(n, 0);
    std::vector<std::uint8_t> in_training(n, rows.empty() ? 1 : 0);
    for (auto r : rows) in_training[r] = 1;
    for (const auto& ft : trees) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!in_training[i] || ft.inbag[i] != 0) continue;
            const double pred = ft.tree.predict(ds, i);
            if (ds.task() == Task::classification)
                sums[i * L + static_cast<std::size_t>(pred)] += 1.0;
            else
                sums[i] += pred;
            ++counts[i];
        }
    }
    ForestAccess::oob_available(f) = true;
    ForestAccess::fingerprint(f) = training_fingerprint(ds, rows);
    ForestAccess::training_n(f) = n;
    ForestAccess::rows(f) = std::move(rows);
    return f;
}

EvalReport oob_error(const Forest& f, const Dataset& ds) {
    if (!f.oob_available()) throw UnavailableError("OOB error is unavailable for this forest");
    if (ForestAccess::training_n(f) != ds.n() || f.training_fingerprint() != training_fingerprint(ds, f.training_rows()))
        throw ArgumentError("dataset differs from the forest's training data");
    const std::size_t n = ds.n();
    const bool cls = ds.task() == Task::classification;
    const std::size_t L = cls ? static_cast<std::size_t>(ds.n_classes()) : 1;
    std::vector<std::uint8_t> in_training(n, f.training_rows().empty() ? 1 : 0);
    for (auto r : f.training_rows()) in_training[r] = 1;
    EvalReport rep;
    rep.losses.assign(n, std::numeric_limits<double>::quiet_NaN());
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!in_training[i]) continue;
        const auto c = f.oob_counts()[i];
        if (c == 0) {
            ++rep.excluded;
            continue;
        }
        double loss;
        if (cls) {
            const auto pred = class_of(std::span<const double>(f.oob_sums()).subspan(i * L, L));
            loss = static_cast<int>(pred) != ds.label(i) ? 1.0 : 0.0;
        } else {
            const double pred = f.oob_sums()[i] / c;
            loss = (pred - ds.y(i)) * (pred - ds.y(i));
        }
        rep.losses[i] = loss;
        total += loss;
        ++rep.evaluated;
    }
    if (rep.evaluated == 0) throw DegenerateError("no row is out-of-bag for any tree");
    rep.error = total / static_cast<double>(rep.evaluated);
    return rep;
}

EvalReport test_error(const Forest& f, const Dataset& ds) {
    if (ds.p() != f.schema().p() || ds.task() != f.task()) throw SchemaError("dataset does not match the forest schema");
    if (ds.n() == 0) throw DegenerateError("cannot evaluate on an empty dataset");
    EvalReport rep;
    rep.losses.resize(ds.n());
    double total = 0;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const double pred = f.predict(ds, i).value;
        const double loss = ds.task() == Task::classification ? (pred != ds.label(i) ? 1.0 : 0.0)
                                                              : (pred - ds.y(i)) * (pred - ds.y(i));
        rep.losses[i] = loss;
        total += loss;
    }
    rep.evaluated = ds.n();
    rep.error = total / static_cast<double>(ds.n());
    return rep;
}

std::vector<double> tree_oob_errors(const Forest& f, const Dataset& ds) {
    if (f.training_fingerprint() != training_fingerprint(ds, f.training_rows()))
        throw ArgumentError("dataset differs from the forest's training data");
    const std::size_t n = ds.n();
    std::vector<std::uint8_t> in_training(n, f.training_rows().empty() ? 1 : 0);
    for (auto r : f.training_rows()) in_training[r] = 1;
    std::vector<double> out;
    out.reserve(f.ntree());
    for (const auto& ft : f.trees()) {
        double loss = 0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!in_training[i] || ft.inbag[i] != 0) continue;
            const double pred = ft.tree.predict(ds, i);
            loss += ds.task() == Task::classification ? (pred != ds.label(i) ? 1.0 : 0.0)
                                                      : (pred - ds.y(i)) * (pred - ds.y(i));
            ++count;
        }
        out.push_back(count ? loss / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

Forest merge_forests(std::span<const Forest> forests) {
    if (forests.empty()) throw ArgumentError("nothing to merge");
    const Forest& first = forests.front();
    for (const auto& f : forests)
        if (!(f.schema() == first.schema())) throw ArgumentError("forests have incompatible schemas");
    Forest out;
    ForestAccess::schema(out) = first.schema_ptr();
    ForestAccess::params(out) = first.params();
    auto& trees = ForestAccess::trees(out);
    for (const auto& f : forests)
        for (const auto& ft : f.trees()) {
            trees.push_back(ft);
            trees.back().tree = Tree(first.schema_ptr(), ft.tree.params(), ft.tree.nodes());
        }
    ForestAccess::params(out).ntree = static_cast<int>(trees.size());

    bool same = true;
    for (const auto& f : forests)
        same = same && f.oob_available() && f.training_fingerprint() == first.training_fingerprint() &&
               f.training_rows() == first.training_rows() &&
               ForestAccess::training_n(f) == ForestAccess::training_n(first);
    ForestAccess::training_n(out) = ForestAccess::training_n(first);
    if (same) {
        ForestAccess::oob_available(out) = true;
        ForestAccess::fingerprint(out) = first.training_fingerprint();
        ForestAccess::rows(out) = first.training_rows();
        auto sums = first.oob_sums();
        auto counts = first.oob_counts();
        for (std::size_t k = 1; k < forests.size(); ++k) {
            for (std::size_t i = 0; i < sums.size(); ++i) sums[i] += forests[k].oob_sums()[i];
            for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += forests[k].oob_counts()[i];
        }
        ForestAccess::oob_sums(out) = std::move(sums);
        ForestAccess::oob_counts(out) = std::move(counts);
    } else {
        ForestAccess::oob_available(out) = false;
        ForestAccess::fingerprint(out) = 0;
        std::vector<std::uint32_t> all;
        bool everything = false;
        for (const auto& f : forests) {
            if (f.training_rows().empty()) everything = true;
            all.insert(all.end(), f.training_rows().begin(), f.training_rows().end());
        }
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        if (everything) all.clear();
        ForestAccess::rows(out) = std::move(all);
    }
    return out;
}

bool Forest::operator==(const Forest& o) const {
    return *schema_ == *o.schema_ && params_ == o.params_ && trees_ == o.trees_ && oob_available_ == o.oob_available_ &&
           training_fingerprint_ == o.training_fingerprint_ && training_n_ == o.training_n_ &&
           training_rows_ == o.training_rows_ && oob_sums_ == o.oob_sums_ && oob_counts_ == o.oob_counts_;
}

}  // namespace canopy
