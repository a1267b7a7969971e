#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "canopy/errors.hpp"
#include "canopy/importance.hpp"
#include "synth.hpp"

using namespace canopy;

namespace {

Forest small_forest(const Dataset& ds, int ntree, std::uint64_t seed) {
    ForestParams p;
    p.ntree = ntree;
    p.seed = seed;
    return train_forest(ds, p);
}

}  // namespace

TEST_SUITE("importance") {

TEST_CASE("variables absent from every split have zero importance") {
    const Dataset ds = synth::additive(200, 2);
    ForestParams p;
    p.ntree = 30;
    p.variables = {0, 1, 2};
    const Forest f = train_forest(ds, p);
    const auto vi = variable_importance(f, ds, 5);
    for (std::size_t j = 3; j < ds.p(); ++j) CHECK(vi.vi[j] == 0.0);
    CHECK(vi.vi[0] > 0.0);
    CHECK(vi.trees_used + vi.trees_skipped == 30);
}

TEST_CASE("informative variables outrank noise") {
    const Dataset ds = synth::additive(300, 4);
    const auto vi = variable_importance(small_forest(ds, 100, 3), ds, 8);
    const double weakest_signal = std::min({vi.vi[0], vi.vi[1], vi.vi[2]});
    for (std::size_t j = 3; j < ds.p(); ++j) CHECK(vi.vi[j] < weakest_signal);
}

TEST_CASE("singleton groups reproduce single-variable importance exactly") {
    const Dataset ds = synth::pure_noise(120, 4, 7);
    const Forest f = small_forest(ds, 25, 4);
    const auto single = variable_importance(f, ds, 77);
    const auto grouped = grouped_importance(f, ds, {{0}, {1}, {2}, {3}}, 77);
    CHECK(single.vi == grouped.vi);
    const auto reordered = grouped_importance(f, ds, {{3}, {1}}, 77);
    CHECK(reordered.vi[0] == single.vi[3]);
    CHECK(reordered.vi[1] == single.vi[1]);
}

TEST_CASE("group validation") {
    const Dataset ds = synth::additive(50, 1);
    const Forest f = small_forest(ds, 5, 1);
    CHECK_THROWS_AS(grouped_importance(f, ds, {{0, 1}, {1, 2}}, 1), ArgumentError);
    CHECK_THROWS_AS(grouped_importance(f, ds, {{}}, 1), ArgumentError);
    CHECK_THROWS_AS(grouped_importance(f, ds, {{0, 99}}, 1), ArgumentError);
    const auto groups = parse_groups("x1, x2\n\nx3\n", ds);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0] == std::vector<int>{0, 1});
    CHECK_THROWS_AS(parse_groups("nope\n", ds), ArgumentError);
}

TEST_CASE("a duplicated informative pair matters more jointly than alone") {
    canopy::Rng rng(12);
    const std::size_t n = 300;
    auto cols = synth::uniform_columns(n, 4, rng);
    cols[1].values = cols[0].values;
    cols[1].name = "dup";
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = 3 * cols[0].values[i] + 0.2 * rng.normal();
    const Dataset ds(std::move(cols), synth::regression_target(y));
    double joint = 0, alone = 0;
    for (int r = 0; r < 10; ++r) {
        const Forest f = small_forest(ds, 50, 100 + r);
        joint += grouped_importance(f, ds, {{0, 1}}, r).vi[0];
        const auto single = variable_importance(f, ds, r);
        alone += std::max(single.vi[0], single.vi[1]);
    }
    CHECK(joint > alone);
}

TEST_CASE("permutation leaves the dataset untouched") {
    const Dataset ds = synth::additive(100, 5);
    const auto before = ds.fingerprint();
    const Forest f = small_forest(ds, 10, 2);
    (void)variable_importance(f, ds, 3);
    CHECK(ds.fingerprint() == before);
}

TEST_CASE("monotone transformation keeps the informative ranking") {
    const Dataset ds = synth::additive(300, 6);
    auto col = ds.column(1);
    for (auto& v : col.values) v = std::exp(2 * v) - 7;
    const Dataset moved = ds.with_column(1, col);
    const auto a = variable_importance(small_forest(ds, 60, 9), ds, 4);
    const auto b = variable_importance(small_forest(moved, 60, 9), moved, 4);
    auto top3 = [](const std::vector<double>& vi) {
        std::vector<int> idx(vi.size());
        for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = static_cast<int>(j);
        std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) { return vi[x] > vi[y]; });
        idx.resize(3);
        std::sort(idx.begin(), idx.end());
        return idx;
    };
    CHECK(top3(a.vi) == std::vector<int>{0, 1, 2});
    CHECK(top3(b.vi) == top3(a.vi));
}

TEST_CASE("trees without out-of-bag rows are skipped") {
    const Dataset ds = synth::additive(60, 3);
    ForestParams p;
    p.ntree = 5;
    p.resample = ResampleKind::identity();
    const Forest f = train_forest(ds, p);
    CHECK_THROWS_AS(variable_importance(f, ds, 1), DegenerateError);
    TrainOptions one_row;
    one_row.rows = {0, 1};
    p.resample = ResampleKind::subsample(1);
    const Forest g = train_forest(ds, p, one_row);
    const auto vi = variable_importance(g, ds, 1);
    CHECK(vi.trees_used == 5);
    for (double v : vi.vi) CHECK(v == 0.0);
}

TEST_CASE("replicated importance: spread, ranking, determinism") {
    const Dataset ds = synth::additive(150, 10);
    ForestParams p;
    p.ntree = 20;
    ImportanceOptions opts;
    opts.nrep = 3;
    const auto a = replicated_importance(ds, p, 42, opts);
    opts.workers = 3;
    const auto b = replicated_importance(ds, p, 42, opts);
    CHECK(a.mean == b.mean);
    CHECK(a.sd == b.sd);
    CHECK(a.nrep() == 3);
    CHECK(a.sd_defined);
    for (std::size_t r = 1; r < a.ranking.size(); ++r)
        CHECK(a.mean[static_cast<std::size_t>(a.ranking[r - 1])] >= a.mean[static_cast<std::size_t>(a.ranking[r])]);
    for (double s : a.sd) CHECK(s >= 0.0);
    opts.nrep = 1;
    const auto one = replicated_importance(ds, p, 42, opts);
    CHECK_FALSE(one.sd_defined);
    for (double s : one.sd) CHECK(s == 0.0);
    opts.nrep = 0;
    CHECK_THROWS_AS(replicated_importance(ds, p, 42, opts), ArgumentError);

    const std::string csv = importance_csv(a);
    CHECK(csv.rfind("variable,mean_vi,sd_vi,rank\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
    CHECK(importance_series_csv(a).rfind("rank,variable,mean_vi\n", 0) == 0);
}

TEST_CASE("one group covering every variable gives a single entry") {
    const Dataset ds = synth::additive(80, 2);
    ForestParams p;
    p.ntree = 10;
    ImportanceOptions opts;
    opts.nrep = 2;
    opts.groups = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}};
    const auto rep = replicated_importance(ds, p, 1, opts);
    CHECK(rep.names.size() == 1);
    CHECK(rep.mean[0] > 0.0);
}

}  // TEST_SUITE
