#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "canopy/data.hpp"
#include "canopy/ensemble.hpp"

namespace canopy {

enum class BlockStrategy { contiguous, random, stratified };

std::string to_string(BlockStrategy s);
BlockStrategy parse_block_strategy(const std::string& text);

/// Disjoint blocks covering every row; each block is sorted ascending and
/// block sizes differ by at most one.
struct PartitionPlan {
    BlockStrategy strategy = BlockStrategy::contiguous;
    std::vector<std::vector<std::uint32_t>> blocks;

    std::size_t size() const { return blocks.size(); }
};

PartitionPlan make_partition(const Dataset& ds, std::size_t blocks, BlockStrategy strategy, std::uint64_t seed);

/// Seed of the sub-forest trained on block k.
std::uint64_t block_seed(std::uint64_t seed, std::size_t k);

/// Result of the map phase for one block.
struct MapOutput {
    int key = 1;
    std::size_t block = 0;
    Forest forest;
    double oob_error = 0.0;
    bool oob_defined = false;
    double divergence = 0.0;  // distance of the block's Y distribution from the whole data
};

MapOutput map_block(const Dataset& ds, const PartitionPlan& plan, std::size_t k, const ForestParams& params,
                    std::uint64_t seed, int workers = 1);

/// Concatenates the sub-forests in block order.
Forest reduce_blocks(const std::vector<MapOutput>& outputs);

struct PartitionedResult {
    Forest forest;
    std::vector<MapOutput> blocks;
    double mean_block_oob = 0.0;
    bool mean_block_oob_defined = false;
    bool heterogeneous = false;
};

/// Class-frequency total variation above this (classification) or a block
/// mean further than this many global sds (regression) raises the warning.
inline constexpr double kClassDivergenceLimit = 0.1;
inline constexpr double kMeanGapLimit = 0.5;

/// Map: one forest per block with seed block_seed(seed, k); reduce: merge.
/// Blocks run concurrently on up to `workers` threads.
PartitionedResult train_partitioned(const Dataset& ds, const PartitionPlan& plan, const ForestParams& params,
                                    std::uint64_t seed, int workers = 1);

struct BlbResult {
    Forest forest;
    std::vector<std::vector<std::uint32_t>> supports;  // distinct rows of each subsample
};

/// Per subsample s: m distinct rows drawn with derive_seed(seed, {s, 0}), then a
/// forest of size-n multinomial resamples on them with seed derive_seed(seed, {s, 1}).
BlbResult train_blb(const Dataset& ds, std::size_t m, std::size_t subsamples, const ForestParams& params,
                    std::uint64_t seed, int workers = 1);

/// One line per block: block,rows,oob_error,divergence.
std::string block_manifest_csv(const PartitionedResult& r);

/// Permutation importance of every block forest on its own rows, kept side by
/// side; a block with no out-of-bag rows is undefined.
struct BlockImportance {
    std::vector<std::vector<double>> vi;  // [block][variable]
    std::vector<bool> defined;
};

BlockImportance block_importance(const Dataset& ds, const PartitionedResult& r, std::uint64_t seed, int workers = 1);
/// variable,block_0,...,block_{Q-1}
std::string block_importance_csv(const Dataset& ds, const BlockImportance& bi);

}  // namespace canopy
