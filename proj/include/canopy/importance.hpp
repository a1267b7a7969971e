#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "canopy/data.hpp"
#include "canopy/ensemble.hpp"

namespace canopy {

/// Permutation importance of one forest.
struct ForestImportance {
    std::vector<double> vi;          // per variable or per group
    std::size_t trees_used = 0;
    std::size_t trees_skipped = 0;   // trees with an empty OOB set
};

/// Mean over trees of (OOB error after permuting X^j within the tree's OOB
/// rows) minus (OOB error). One permutation per (tree, variable), drawn from
/// the stream derive_seed(seed, {forest_index, tree, j}).
ForestImportance variable_importance(const Forest& f, const Dataset& ds, std::uint64_t seed, int workers = 1,
                                     std::uint64_t forest_index = 0);

/// Same, with every column of a group permuted jointly. A group's stream is
/// keyed by its smallest variable, so singleton groups reproduce
/// variable_importance exactly.
ForestImportance grouped_importance(const Forest& f, const Dataset& ds, const std::vector<std::vector<int>>& groups,
                                    std::uint64_t seed, int workers = 1, std::uint64_t forest_index = 0);

struct ImportanceReport {
    std::vector<std::string> names;            // variables or group labels
    std::vector<std::vector<int>> members;     // variables of each entry
    std::vector<std::vector<double>> per_forest;  // nrep x entries
    std::vector<double> mean;
    std::vector<double> sd;                    // sample sd; 0 when nrep == 1
    bool sd_defined = true;
    std::vector<int> ranking;                  // entries by decreasing mean, ties to the lower index
    std::vector<std::uint64_t> forest_seeds;
    std::size_t trees_skipped = 0;

    std::size_t nrep() const { return per_forest.size(); }
};

struct ImportanceOptions {
    int nrep = 50;
    int workers = 1;
    std::vector<std::vector<int>> groups;  // empty: single variables
    std::function<void(int done, int total)> progress;
};

/// Trains nrep forests with seeds derive_seed(seed, {r, 0}) and permutes with
/// derive_seed(seed, {r, 1}).
ImportanceReport replicated_importance(const Dataset& ds, const ForestParams& params, std::uint64_t seed,
                                       const ImportanceOptions& options = {});

/// Throws ArgumentError for empty groups, out-of-range indices or overlaps.
void validate_groups(const std::vector<std::vector<int>>& groups, std::size_t p);
/// One group per line, variable names separated by commas or whitespace.
std::vector<std::vector<int>> parse_groups(const std::string& text, const Dataset& ds);

/// Columns: variable,mean_vi,sd_vi,rank (rows in ranking order).
std::string importance_csv(const ImportanceReport& report);
/// Columns: rank,variable,mean_vi.
std::string importance_series_csv(const ImportanceReport& report);

}  // namespace canopy
