#include <doctest.h>

#include <algorithm>
#include <cstdio>

#include "canopy/errors.hpp"
#include "canopy/select.hpp"
#include "oracles.hpp"
#include "synth.hpp"

using namespace canopy;

namespace {

ImportanceReport fake_report(const std::vector<double>& mean, const std::vector<double>& sd) {
    ImportanceReport r;
    r.mean = mean;
    r.sd = sd;
    r.sd_defined = true;
    for (std::size_t j = 0; j < mean.size(); ++j) {
        r.names.push_back("v" + std::to_string(j));
        r.members.push_back({static_cast<int>(j)});
        r.ranking.push_back(static_cast<int>(j));
    }
    std::stable_sort(r.ranking.begin(), r.ranking.end(), [&](int a, int b) { return mean[a] > mean[b]; });
    return r;
}

std::vector<CurvePoint> curve_of(const std::vector<double>& mean, const std::vector<double>& sd) {
    std::vector<CurvePoint> c;
    for (std::size_t k = 0; k < mean.size(); ++k) c.push_back({k + 1, static_cast<int>(k), mean[k], sd[k], {}});
    return c;
}

bool subset_of(const std::vector<int>& a, const std::vector<int>& b) {
    return std::all_of(a.begin(), a.end(), [&](int v) { return std::find(b.begin(), b.end(), v) != b.end(); });
}

}  // namespace

TEST_SUITE("select") {

TEST_CASE("mean jump on the three-point curve") {
    const std::vector<double> e{0.10, 0.12, 0.11};
    const double t = mean_jump_threshold(e, 1);
    CHECK(t == oracle::exact_mean_jump(e, 1));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.15g", t);
    CHECK(std::string(buf) == "0.015");
    CHECK(mean_jump_threshold(e, 3) == 0.0);
    CHECK(mean_jump_threshold(e, 2) == oracle::exact_mean_jump(e, 2));
    CHECK_THROWS_AS(mean_jump_threshold(e, 0), ArgumentError);
    CHECK_THROWS_AS(mean_jump_threshold(e, 4), ArgumentError);
}

TEST_CASE("mean jump matches exact rational summation on random curves") {
    Rng rng(2024);
    int worst = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t m = 2 + rng.below(60);
        std::vector<double> e(m);
        const double scale = trial % 3 == 0 ? 1e-12 : (trial % 3 == 1 ? 1.0 : 1e8);
        for (auto& v : e) v = scale * rng.uniform();
        const std::size_t mp = 1 + rng.below(m);
        const auto d = oracle::ulp_distance(mean_jump_threshold(e, mp), oracle::exact_mean_jump(e, mp));
        worst = std::max<int>(worst, static_cast<int>(d));
    }
    CHECK(worst <= 1);
}

TEST_CASE("constant importance spread keeps every variable above it") {
    const auto rep = fake_report({0.9, 0.5, 0.3, 0.2, 0.11}, {0.1, 0.1, 0.1, 0.1, 0.1});
    const auto t = threshold_step(rep, 1);
    CHECK(t.leaves == 1);
    CHECK(t.threshold == doctest::Approx(0.1));
    CHECK(t.kept == std::vector<int>{0, 1, 2, 3, 4});
    CHECK_FALSE(t.fallback);
}

TEST_CASE("thresholding falls back to the top variable") {
    const auto rep = fake_report({0.01, 0.03, 0.02}, {0.5, 0.5, 0.5});
    const auto t = threshold_step(rep, 1);
    CHECK(t.fallback);
    CHECK(t.kept == std::vector<int>{1});
    auto single = fake_report({0.2}, {0.05});
    CHECK(threshold_step(single, 1).kept == std::vector<int>{0});
    single.sd_defined = false;
    CHECK_THROWS_AS(threshold_step(single, 1), ArgumentError);
}

TEST_CASE("interpretation rule on stored curves") {
    std::size_t argmin = 0;
    CHECK(interpretation_choice(curve_of({0.5, 0.4, 0.3, 0.2}, {0, 0, 0, 0}), &argmin) == 4);
    CHECK(argmin == 4);
    CHECK(interpretation_choice(curve_of({0.5, 0.21, 0.2, 0.25}, {0, 0, 0.02, 0}), &argmin) == 2);
    CHECK(argmin == 3);
    CHECK(interpretation_choice(curve_of({0.3}, {0.1})) == 1);

    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = 1 + rng.below(20);
        std::vector<double> mean(m), sd(m);
        for (std::size_t k = 0; k < m; ++k) {
            mean[k] = rng.uniform();
            sd[k] = 0.1 * rng.uniform();
        }
        const auto curve = curve_of(mean, sd);
        const std::size_t k = interpretation_choice(curve, &argmin);
        const double bound = mean[argmin - 1] + sd[argmin - 1];
        CHECK(mean[k - 1] <= bound);
        for (std::size_t j = 0; j + 1 < k; ++j) CHECK(mean[j] > bound);
        CHECK(*std::min_element(mean.begin(), mean.end()) == mean[argmin - 1]);
    }
}

TEST_CASE("a threshold larger than any decrease keeps only the top variable") {
    const Dataset ds = synth::additive(150, 3, 4);
    ForestParams p;
    p.ntree = 10;
    const std::vector<double> curve{5.0, 0.0, 5.0};
    const auto r = prediction_step(ds, {0, 1}, curve, p, 2, 7);
    CHECK(r.threshold == 5.0);
    CHECK(r.selected == std::vector<int>{0});
    REQUIRE(r.path.size() == 2);
    CHECK(r.path[0].added);
    CHECK_FALSE(r.path[1].added);
    const auto fb = prediction_step(ds, {0, 1}, std::vector<double>{0.3, 0.2}, p, 2, 7);
    CHECK(fb.threshold_fallback);
    CHECK(fb.threshold == 0.0);
}

TEST_CASE("single variable selects itself at every step") {
    Rng rng(3);
    auto cols = synth::uniform_columns(80, 1, rng);
    std::vector<double> y(80);
    for (std::size_t i = 0; i < 80; ++i) y[i] = cols[0].values[i] + 0.1 * rng.normal();
    const Dataset ds(std::move(cols), synth::regression_target(y));
    VsurfParams vp;
    vp.forest.ntree = 10;
    vp.nrep_vi = 2;
    vp.nrep_interp = 2;
    const auto r = vsurf(ds, vp, 1);
    CHECK(r.threshold.kept == std::vector<int>{0});
    CHECK(r.interpretation.selected == std::vector<int>{0});
    CHECK(r.prediction.selected == std::vector<int>{0});
}

TEST_CASE("selection on the additive model: nesting, determinism, exports") {
    const Dataset ds = synth::additive(200, 8, 6);
    VsurfParams vp;
    vp.forest.ntree = 30;
    vp.nrep_vi = 4;
    vp.nrep_interp = 2;
    const auto a = vsurf(ds, vp, 11);
    SelectOptions two;
    two.workers = 2;
    const auto b = vsurf(ds, vp, 11, two);
    CHECK(a.threshold.kept == b.threshold.kept);
    CHECK(a.interpretation.selected == b.interpretation.selected);
    CHECK(a.prediction.selected == b.prediction.selected);
    CHECK(vi_sd_csv(a) == vi_sd_csv(b));
    CHECK(prediction_csv(a) == prediction_csv(b));

    CHECK(subset_of(a.prediction.selected, a.interpretation.selected));
    CHECK(subset_of(a.interpretation.selected, a.threshold.kept));
    for (int v : {0, 1, 2}) CHECK(std::find(a.threshold.kept.begin(), a.threshold.kept.end(), v) != a.threshold.kept.end());
    CHECK(a.interpretation.curve.size() == a.threshold.kept.size());
    const auto& c = a.interpretation.curve;
    CHECK(interpretation_choice(c) == a.interpretation.selected.size());
    std::vector<double> errs;
    for (const auto& pt : c) errs.push_back(pt.mean);
    CHECK(a.prediction.threshold == oracle::exact_mean_jump(errs, a.interpretation.selected.size()));

    CHECK(vi_mean_csv(a).rfind("rank,variable,mean_vi\n", 0) == 0);
    CHECK(interpretation_csv(a).rfind("k,variable,mean_oob,sd_oob\n", 0) == 0);
    CHECK(prediction_csv(a).rfind("step,variable,mean_oob,sd_oob,added\n", 0) == 0);
    CHECK(selection_text(a).find("interpretation") != std::string::npos);

    vp.steps = SelectSteps::threshold;
    const auto t = vsurf(ds, vp, 11);
    CHECK(t.threshold.kept == a.threshold.kept);
    CHECK(t.interpretation.curve.empty());
    CHECK(parse_select_steps("interpretation") == SelectSteps::interpretation);
    CHECK_THROWS_AS(parse_select_steps("all"), ArgumentError);
}

TEST_CASE("renaming variables leaves the selected indices unchanged") {
    const Dataset ds = synth::additive(120, 4, 5);
    std::vector<Column> cols;
    for (std::size_t j = 0; j < ds.p(); ++j) {
        auto c = ds.column(j);
        c.name = "z" + std::to_string(100 - j);
        cols.push_back(std::move(c));
    }
    const Dataset renamed(std::move(cols), ds.target());
    VsurfParams vp;
    vp.forest.ntree = 15;
    vp.nrep_vi = 3;
    vp.nrep_interp = 2;
    const auto a = vsurf(ds, vp, 2);
    const auto b = vsurf(renamed, vp, 2);
    CHECK(a.threshold.kept == b.threshold.kept);
    CHECK(a.interpretation.selected == b.interpretation.selected);
    CHECK(a.prediction.selected == b.prediction.selected);
}

}  // TEST_SUITE
