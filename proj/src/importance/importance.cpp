#include "canopy/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "canopy/errors.hpp"
#include "canopy/parallel.hpp"
#include "canopy/random.hpp"

namespace canopy {
namespace {

// Row i with the columns of one group read from row `source`.
struct PermutedRow {
    const Dataset* ds;
    std::size_t i;
    std::size_t source;
    const std::uint8_t* in_group;

    std::size_t pick(int j) const { return in_group[j] ? source : i; }
    bool missing(int j) const { return ds->missing(pick(j), static_cast<std::size_t>(j)); }
    double value(int j) const { return ds->value(pick(j), static_cast<std::size_t>(j)); }
};

double loss(const Dataset& ds, std::size_t i, double pred) {
    if (ds.task() == Task::classification) return pred != ds.label(i) ? 1.0 : 0.0;
    const double d = pred - ds.y(i);
    return d * d;
}

ForestImportance permutation_importance(const Forest& f, const Dataset& ds, const std::vector<std::vector<int>>& groups,
                                        std::uint64_t seed, int workers, std::uint64_t forest_index) {
    if (f.training_fingerprint() != training_fingerprint(ds, f.training_rows()))
        throw ArgumentError("dataset differs from the forest's training data");
    const std::size_t n = ds.n();
    const std::size_t G = groups.size();
    std::vector<std::uint8_t> in_training(n, f.training_rows().empty() ? 1 : 0);
    for (auto r : f.training_rows()) in_training[r] = 1;

    std::vector<std::vector<std::uint8_t>> masks(G, std::vector<std::uint8_t>(ds.p(), 0));
    std::vector<int> keys(G);
    for (std::size_t g = 0; g < G; ++g) {
        for (int j : groups[g]) masks[g][static_cast<std::size_t>(j)] = 1;
        keys[g] = *std::min_element(groups[g].begin(), groups[g].end());
    }

    const std::size_t T = f.ntree();
    std::vector<std::vector<double>> diffs(T);
    std::vector<std::uint8_t> used_tree(T, 0);
    parallel_for(T, workers, [&](std::size_t l) {
        const auto& ft = f.trees()[l];
        std::vector<std::uint32_t> oob;
        for (std::size_t i = 0; i < n; ++i)
            if (in_training[i] && ft.inbag[i] == 0) oob.push_back(static_cast<std::uint32_t>(i));
        if (oob.empty()) return;
        used_tree[l] = 1;
        const double count = static_cast<double>(oob.size());
        double base = 0;
        for (auto i : oob) base += loss(ds, i, ft.tree.predict(ds, i));
        base /= count;

        std::vector<std::uint8_t> used(ds.p(), 0);
        for (int j : ft.tree.split_variables()) used[static_cast<std::size_t>(j)] = 1;
        auto& d = diffs[l];
        d.assign(G, 0.0);
        std::vector<std::uint32_t> perm(oob.size());
        for (std::size_t g = 0; g < G; ++g) {
            const bool touches = std::any_of(groups[g].begin(), groups[g].end(),
                                             [&](int j) { return used[static_cast<std::size_t>(j)] != 0; });
            if (!touches) continue;
            std::copy(oob.begin(), oob.end(), perm.begin());
            Rng rng(derive_seed(seed, {forest_index, l, static_cast<std::uint64_t>(keys[g])}));
            rng.shuffle(std::span<std::uint32_t>(perm));
            double permuted = 0;
            for (std::size_t a = 0; a < oob.size(); ++a)
                permuted += loss(ds, oob[a], ft.tree.predict(PermutedRow{&ds, oob[a], perm[a], masks[g].data()}));
            d[g] = permuted / count - base;
        }
    });

    ForestImportance out;
    out.vi.assign(G, 0.0);
    for (std::size_t l = 0; l < T; ++l) {
        if (!used_tree[l]) {
            ++out.trees_skipped;
            continue;
        }
        ++out.trees_used;
        for (std::size_t g = 0; g < G; ++g) out.vi[g] += diffs[l][g];
    }
    if (out.trees_used == 0) throw DegenerateError("no tree has an out-of-bag row");
    for (auto& v : out.vi) v /= static_cast<double>(out.trees_used);
    return out;
}

std::vector<std::vector<int>> singletons(std::size_t p) {
    std::vector<std::vector<int>> g(p);
    for (std::size_t j = 0; j < p; ++j) g[j] = {static_cast<int>(j)};
    return g;
}

}  // namespace

void validate_groups(const std::vector<std::vector<int>>& groups, std::size_t p) {
    if (groups.empty()) throw ArgumentError("no groups given");
    std::vector<std::uint8_t> seen(p, 0);
    for (const auto& g : groups) {
        if (g.empty()) throw ArgumentError("empty variable group");
        for (int j : g) {
            if (j < 0 || static_cast<std::size_t>(j) >= p) throw ArgumentError("group variable out of range");
            if (seen[static_cast<std::size_t>(j)]) throw ArgumentError("variable groups overlap");
            seen[static_cast<std::size_t>(j)] = 1;
        }
    }
}

ForestImportance variable_importance(const Forest& f, const Dataset& ds, std::uint64_t seed, int workers,
                                     std::uint64_t forest_index) {
    return permutation_importance(f, ds, singletons(ds.p()), seed, workers, forest_index);
}

ForestImportance grouped_importance(const Forest& f, const Dataset& ds, const std::vector<std::vector<int>>& groups,
                                    std::uint64_t seed, int workers, std::uint64_t forest_index) {
    validate_groups(groups, ds.p());
    return permutation_importance(f, ds, groups, seed, workers, forest_index);
}

ImportanceReport replicated_importance(const Dataset& ds, const ForestParams& params, std::uint64_t seed,
                                       const ImportanceOptions& options) {
    if (options.nrep < 1) throw ArgumentError("nrep must be at least 1");
    const bool grouped = !options.groups.empty();
    if (grouped) validate_groups(options.groups, ds.p());
    const auto groups = grouped ? options.groups : singletons(ds.p());
    const std::size_t G = groups.size();

    ImportanceReport rep;
    rep.members = groups;
    for (const auto& g : groups) {
        std::string name;
        for (int j : g) {
            if (!name.empty()) name += '+';
            name += ds.column(static_cast<std::size_t>(j)).name;
        }
        rep.names.push_back(name);
    }
    TrainOptions topts;
    topts.workers = options.workers;
    for (int r = 0; r < options.nrep; ++r) {
        const auto ur = static_cast<std::uint64_t>(r);
        ForestParams fp = params;
        fp.seed = derive_seed(seed, {ur, 0});
        rep.forest_seeds.push_back(fp.seed);
        const Forest f = train_forest(ds, fp, topts);
        auto vi = permutation_importance(f, ds, groups, derive_seed(seed, {ur, 1}), options.workers, ur);
        rep.trees_skipped += vi.trees_skipped;
        rep.per_forest.push_back(std::move(vi.vi));
        if (options.progress) options.progress(r + 1, options.nrep);
    }

    const auto R = static_cast<double>(options.nrep);
    rep.mean.assign(G, 0.0);
    rep.sd.assign(G, 0.0);
    for (std::size_t g = 0; g < G; ++g) {
        double s = 0;
        for (const auto& row : rep.per_forest) s += row[g];
        rep.mean[g] = s / R;
        if (options.nrep > 1) {
            double ss = 0;
            for (const auto& row : rep.per_forest) ss += (row[g] - rep.mean[g]) * (row[g] - rep.mean[g]);
            rep.sd[g] = std::sqrt(ss / (R - 1));
        }
    }
    rep.sd_defined = options.nrep > 1;
    rep.ranking.resize(G);
    std::iota(rep.ranking.begin(), rep.ranking.end(), 0);
    std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                     [&](int a, int b) { return rep.mean[static_cast<std::size_t>(a)] > rep.mean[static_cast<std::size_t>(b)]; });
    return rep;
}

std::vector<std::vector<int>> parse_groups(const std::string& text, const Dataset& ds) {
    std::vector<std::vector<int>> groups;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        for (auto& c : line)
            if (c == ',' || c == '\t' || c == '\r') c = ' ';
        std::istringstream words(line);
        std::vector<int> g;
        std::string w;
        while (words >> w) {
            const int j = ds.find(w);
            if (j < 0) throw ArgumentError("unknown variable in groups: " + w);
            g.push_back(j);
        }
        if (!g.empty()) groups.push_back(std::move(g));
    }
    validate_groups(groups, ds.p());
    return groups;
}

std::string importance_csv(const ImportanceReport& report) {
    std::string out = "variable,mean_vi,sd_vi,rank\n";
    for (std::size_t r = 0; r < report.ranking.size(); ++r) {
        const auto g = static_cast<std::size_t>(report.ranking[r]);
        out += csv_field(report.names[g]) + ',' + format_double(report.mean[g]) + ',' + format_double(report.sd[g]) +
               ',' + std::to_string(r + 1) + '\n';
    }
    return out;
}

std::string importance_series_csv(const ImportanceReport& report) {
    std::string out = "rank,variable,mean_vi\n";
    for (std::size_t r = 0; r < report.ranking.size(); ++r) {
        const auto g = static_cast<std::size_t>(report.ranking[r]);
        out += std::to_string(r + 1) + ',' + csv_field(report.names[g]) + ',' + format_double(report.mean[g]) + '\n';
    }
    return out;
}

}  // namespace canopy
