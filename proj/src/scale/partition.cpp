#include <algorithm>
#include <cmath>
#include <numeric>

#include "canopy/errors.hpp"
#include "canopy/importance.hpp"
#include "canopy/parallel.hpp"
#include "canopy/random.hpp"
#include "canopy/scale.hpp"

namespace canopy {
namespace {

// Deal `order` round-robin into Q blocks.
std::vector<std::vector<std::uint32_t>> deal(const std::vector<std::uint32_t>& order, std::size_t Q) {
    std::vector<std::vector<std::uint32_t>> blocks(Q);
    for (std::size_t t = 0; t < order.size(); ++t) blocks[t % Q].push_back(order[t]);
    return blocks;
}

std::vector<std::vector<std::uint32_t>> chunk(const std::vector<std::uint32_t>& order, std::size_t Q) {
    std::vector<std::vector<std::uint32_t>> blocks(Q);
    const std::size_t n = order.size();
    std::size_t start = 0;
    for (std::size_t k = 0; k < Q; ++k) {
        const std::size_t len = n / Q + (k < n % Q ? 1 : 0);
        blocks[k].assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(start + len));
        start += len;
    }
    return blocks;
}

double divergence(const Dataset& ds, const std::vector<std::uint32_t>& rows) {
    const std::size_t n = ds.n();
    if (ds.task() == Task::classification) {
        const auto L = static_cast<std::size_t>(ds.n_classes());
        std::vector<double> all(L, 0.0), part(L, 0.0);
        for (std::size_t i = 0; i < n; ++i) all[static_cast<std::size_t>(ds.label(i))] += 1.0;
        for (auto i : rows) part[static_cast<std::size_t>(ds.label(i))] += 1.0;
        double tv = 0;
        for (std::size_t c = 0; c < L; ++c)
            tv += std::fabs(part[c] / static_cast<double>(rows.size()) - all[c] / static_cast<double>(n));
        return tv / 2;
    }
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += ds.y(i);
    mean /= static_cast<double>(n);
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) ss += (ds.y(i) - mean) * (ds.y(i) - mean);
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    double bm = 0;
    for (auto i : rows) bm += ds.y(i);
    bm /= static_cast<double>(rows.size());
    const double gap = std::fabs(bm - mean);
    if (sd == 0) return gap == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    return gap / sd;
}

}  // namespace

std::string to_string(BlockStrategy s) {
    switch (s) {
        case BlockStrategy::contiguous: return "contiguous";
        case BlockStrategy::random: return "random";
        case BlockStrategy::stratified: return "stratified";
    }
    return "contiguous";
}

BlockStrategy parse_block_strategy(const std::string& text) {
    if (text == "contiguous") return BlockStrategy::contiguous;
    if (text == "random") return BlockStrategy::random;
    if (text == "stratified") return BlockStrategy::stratified;
    throw ArgumentError("unknown block strategy: " + text);
}

PartitionPlan make_partition(const Dataset& ds, std::size_t Q, BlockStrategy strategy, std::uint64_t seed) {
    const std::size_t n = ds.n();
    if (Q < 1 || Q > n) throw ArgumentError("block count must lie in 1..n");
    PartitionPlan plan;
    plan.strategy = strategy;
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(seed);
    switch (strategy) {
        case BlockStrategy::contiguous:
            plan.blocks = chunk(order, Q);
            break;
        case BlockStrategy::random:
            rng.shuffle(std::span<std::uint32_t>(order));
            plan.blocks = chunk(order, Q);
            break;
        case BlockStrategy::stratified:
            if (ds.task() == Task::classification) {
                rng.shuffle(std::span<std::uint32_t>(order));
                std::stable_sort(order.begin(), order.end(),
                                 [&](std::uint32_t a, std::uint32_t b) { return ds.label(a) < ds.label(b); });
            } else {
                std::stable_sort(order.begin(), order.end(),
                                 [&](std::uint32_t a, std::uint32_t b) { return ds.y(a) < ds.y(b); });
            }
            plan.blocks = deal(order, Q);
            break;
    }
    for (auto& b : plan.blocks) std::sort(b.begin(), b.end());
    return plan;
}

std::uint64_t block_seed(std::uint64_t seed, std::size_t k) { return derive_seed(seed, {k}); }

MapOutput map_block(const Dataset& ds, const PartitionPlan& plan, std::size_t k, const ForestParams& params,
                    std::uint64_t seed, int workers) {
    if (k >= plan.size()) throw ArgumentError("block index out of range");
    const auto& rows = plan.blocks[k];
    if (rows.empty()) throw ArgumentError("empty block");
    MapOutput out;
    out.block = k;
    ForestParams fp = params;
    fp.seed = block_seed(seed, k);
    TrainOptions topts;
    topts.workers = workers;
    topts.rows = rows;
    out.forest = train_forest(ds, fp, topts);
    out.divergence = divergence(ds, rows);
    try {
        out.oob_error = oob_error(out.forest, ds).error;
        out.oob_defined = true;
    } catch (const DegenerateError&) {
        out.oob_defined = false;
    }
    return out;
}

Forest reduce_blocks(const std::vector<MapOutput>& outputs) {
    std::vector<Forest> forests;
    forests.reserve(outputs.size());
    for (const auto& o : outputs) forests.push_back(o.forest);
    return merge_forests(forests);
}

PartitionedResult train_partitioned(const Dataset& ds, const PartitionPlan& plan, const ForestParams& params,
                                    std::uint64_t seed, int workers) {
    const std::size_t Q = plan.size();
    if (Q == 0) throw ArgumentError("partition has no blocks");
    std::vector<std::uint8_t> seen(ds.n(), 0);
    for (const auto& b : plan.blocks) {
        if (b.empty()) throw ArgumentError("empty block");
        for (auto i : b) {
            if (i >= ds.n() || seen[i]) throw ArgumentError("blocks must be disjoint row sets");
            seen[i] = 1;
        }
    }
    PartitionedResult res;
    res.blocks.resize(Q);
    const int outer = static_cast<int>(std::min<std::size_t>(Q, static_cast<std::size_t>(std::max(workers, 1))));
    const int inner = std::max(1, std::max(workers, 1) / outer);
    parallel_for(Q, outer, [&](std::size_t k) { res.blocks[k] = map_block(ds, plan, k, params, seed, inner); });
    res.forest = reduce_blocks(res.blocks);

    double sum = 0;
    std::size_t defined = 0;
    for (const auto& b : res.blocks) {
        if (b.oob_defined) {
            sum += b.oob_error;
            ++defined;
        }
        const double limit = ds.task() == Task::classification ? kClassDivergenceLimit : kMeanGapLimit;
        if (b.divergence > limit) res.heterogeneous = true;
    }
    res.mean_block_oob_defined = defined > 0;
    res.mean_block_oob = defined ? sum / static_cast<double>(defined) : 0.0;
    return res;
}

BlbResult train_blb(const Dataset& ds, std::size_t m, std::size_t subsamples, const ForestParams& params,
                    std::uint64_t seed, int workers) {
    const std::size_t n = ds.n();
    if (m < 1 || m > n) throw ArgumentError("blb size must satisfy 0 < m <= n");
    if (subsamples < 1) throw ArgumentError("at least one subsample is required");
    BlbResult res;
    std::vector<Forest> forests;
    for (std::size_t s = 0; s < subsamples; ++s) {
        std::vector<std::uint32_t> all(n);
        std::iota(all.begin(), all.end(), 0u);
        Rng rng(derive_seed(seed, {s, 0}));
        rng.partial_shuffle(std::span<std::uint32_t>(all), m);
        std::vector<std::uint32_t> support(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m));
        std::sort(support.begin(), support.end());
        ForestParams fp = params;
        fp.seed = derive_seed(seed, {s, 1});
        fp.resample = ResampleKind::bootstrap(n);
        TrainOptions topts;
        topts.workers = workers;
        topts.rows = support;
        forests.push_back(train_forest(ds, fp, topts));
        res.supports.push_back(std::move(support));
    }
    res.forest = merge_forests(forests);
    return res;
}

std::string block_manifest_csv(const PartitionedResult& r) {
    std::string out = "block,key,rows,oob_error,divergence\n";
    for (const auto& b : r.blocks) {
        out += std::to_string(b.block) + ',' + std::to_string(b.key) + ',' +
               std::to_string(b.forest.training_rows().empty() ? b.forest.trees().front().inbag.size()
                                                               : b.forest.training_rows().size()) +
               ',' + (b.oob_defined ? format_double(b.oob_error) : std::string("NA")) + ',' +
               format_double(b.divergence) + '\n';
    }
    return out;
}

BlockImportance block_importance(const Dataset& ds, const PartitionedResult& r, std::uint64_t seed, int workers) {
    BlockImportance out;
    for (const auto& b : r.blocks) {
        try {
            out.vi.push_back(variable_importance(b.forest, ds, seed, workers, b.block).vi);
            out.defined.push_back(true);
        } catch (const DegenerateError&) {
            out.vi.emplace_back(ds.p(), 0.0);
            out.defined.push_back(false);
        }
    }
    return out;
}

std::string block_importance_csv(const Dataset& ds, const BlockImportance& bi) {
    std::string out = "variable";
    for (std::size_t k = 0; k < bi.vi.size(); ++k) out += ",block_" + std::to_string(k);
    out += '\n';
    for (std::size_t j = 0; j < ds.p(); ++j) {
        out += csv_field(ds.column(j).name);
        for (std::size_t k = 0; k < bi.vi.size(); ++k)
            out += ',' + (bi.defined[k] ? format_double(bi.vi[k][j]) : std::string("NA"));
        out += '\n';
    }
    return out;
}

}  // namespace canopy
