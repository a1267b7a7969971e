// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance            run every criterion
//   acceptance --only N   run criterion N

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "canopy/cart.hpp"
#include "canopy/cli.hpp"
#include "canopy/ensemble.hpp"
#include "canopy/importance.hpp"
#include "canopy/random.hpp"
#include "canopy/scale.hpp"
#include "canopy/select.hpp"
#include "oracles.hpp"
#include "synth.hpp"

using namespace canopy;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kCartOneSeTarget = 0.096, kCartMinTarget = 0.086, kCartTol = 0.02;
constexpr int kCartLeavesLo = 10, kCartLeavesHi = 30;
constexpr double kRfTarget = 0.052, kBagTarget = 0.060, kEnsembleTol = 0.015;
constexpr int kOrderingSeedsRequired = 4;
constexpr double kInterpTarget = 0.056, kPredTarget = 0.060, kVsurfTol = 0.02;
constexpr std::size_t kKeptLo = 40, kKeptHi = 57, kInterpLo = 20, kInterpHi = 40, kPredLo = 8, kPredHi = 25;
constexpr int kVsurfNrepVi = 10, kVsurfNrepInterp = 5;
constexpr int kPruningDatasets = 200;
constexpr double kOobGap = 0.03, kNoiseTol = 0.03;
constexpr int kOobDatasets = 20;
constexpr double kImportanceShare = 0.95;
constexpr int kImportanceReps = 20, kImportanceNrep = 50;
constexpr double kMergeTol = 0.015;
constexpr int kMeanJumpCurves = 10000;
constexpr std::int64_t kMeanJumpUlps = 1;
constexpr double kBudget1 = 60, kBudget2 = 300, kBudget3 = 1800, kBudget4 = 60;

constexpr std::size_t kSpamTrain = 2300;
constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const Dataset& spam() {
    static const Dataset ds = load_csv(std::string(CANOPY_DATA_DIR) + "/spambase.csv",
                                       read_schema_file(std::string(CANOPY_DATA_DIR) + "/spambase.schema"), "type");
    return ds;
}

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& text) { detail += (detail.empty() ? "" : "; ") + text; }
};

std::string f4(double x) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4f", x);
    return b;
}

bool within(double x, double target, double tol) { return std::fabs(x - target) <= tol; }

// Rows whose feature vectors repeat with a different label bound the training
// error of any tree from below.
std::size_t conflict_floor(const Dataset& ds) {
    std::map<std::vector<double>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        std::vector<double> x(ds.p());
        for (std::size_t j = 0; j < ds.p(); ++j) x[j] = ds.value(i, j);
        auto& counts = groups[x];
        counts.resize(static_cast<std::size_t>(ds.n_classes()), 0);
        ++counts[static_cast<std::size_t>(ds.label(i))];
    }
    std::size_t floor = 0;
    for (const auto& [x, counts] : groups) {
        std::size_t total = 0, top = 0;
        for (auto c : counts) {
            total += c;
            top = std::max(top, c);
        }
        floor += total - top;
    }
    return floor;
}

struct CartOutcome {
    double one_se = 0, min = 0, maximal_train = 0, best = 0;
    int leaves = 0;
    std::size_t floor = 0, n = 0;
};

CartOutcome spam_cart(std::uint64_t seed) {
    const auto [train, test] = split_train_test(spam(), kSpamTrain, seed);
    const CvResult cv = select_subtree_cv(train, cart_defaults(), 10, CvRule::one_se, seed);
    const Tree t_min = subtree(cv.maximal, cv.sequence, cv.chosen_min);
    CartOutcome o;
    o.one_se = tree_error(cv.tree, test);
    o.min = tree_error(t_min, test);
    o.leaves = static_cast<int>(cv.tree.leaf_count());
    o.maximal_train = tree_error(cv.maximal, train);
    o.best = std::min({o.one_se, o.min, tree_error(cv.maximal, test)});
    o.floor = conflict_floor(train);
    o.n = train.n();
    return o;
}

Verdict criterion1() {
    Verdict v;
    const auto t0 = Clock::now();
    for (auto seed : kSeeds) {
        const CartOutcome o = spam_cart(seed);
        const std::string tag = "seed " + std::to_string(seed);
        v.require(within(o.one_se, kCartOneSeTarget, kCartTol), tag + " one-se test " + f4(o.one_se));
        v.require(o.leaves >= kCartLeavesLo && o.leaves <= kCartLeavesHi,
                  tag + " one-se leaves " + std::to_string(o.leaves));
        v.require(within(o.min, kCartMinTarget, kCartTol), tag + " min test " + f4(o.min));
        const auto wrong = static_cast<std::size_t>(std::llround(o.maximal_train * static_cast<double>(o.n)));
        if (seed == kSeeds[0])
            v.require(o.maximal_train == 0.0, tag + " maximal train error " + f4(o.maximal_train));
        else
            v.require(wrong == o.floor, tag + " maximal train errors " + std::to_string(wrong) + " above floor " +
                                            std::to_string(o.floor));
        if (seed == kSeeds[0])
            v.note("seed 1: one-se " + f4(o.one_se) + " (" + std::to_string(o.leaves) + " leaves), min " + f4(o.min) +
                   ", maximal train " + f4(o.maximal_train));
    }
    const double secs = seconds_since(t0) / static_cast<double>(std::size(kSeeds));
    v.require(secs < kBudget1, "runtime per split " + f4(secs) + "s");
    v.note("per split " + f4(secs) + "s");
    return v;
}

Verdict criterion2() {
    Verdict v;
    int ordered = 0;
    double worst_split = 0;
    for (auto seed : kSeeds) {
        const auto t0 = Clock::now();
        const auto [train, test] = split_train_test(spam(), kSpamTrain, seed);
        ForestParams rf;
        rf.seed = seed;
        ForestParams bag = rf;
        bag.mtry = static_cast<int>(train.p());
        const double e_rf = test_error(train_forest(train, rf), test).error;
        const double e_bag = test_error(train_forest(train, bag), test).error;
        const double e_cart = spam_cart(seed).best;
        worst_split = std::max(worst_split, seconds_since(t0));
        const std::string tag = "seed " + std::to_string(seed);
        v.require(within(e_rf, kRfTarget, kEnsembleTol), tag + " rf " + f4(e_rf));
        v.require(within(e_bag, kBagTarget, kEnsembleTol), tag + " bagging " + f4(e_bag));
        if (e_rf <= e_bag && e_bag <= e_cart) ++ordered;
        if (seed == kSeeds[0]) v.note("seed 1: rf " + f4(e_rf) + ", bagging " + f4(e_bag) + ", cart " + f4(e_cart));
    }
    v.require(ordered >= kOrderingSeedsRequired, "ordering held in " + std::to_string(ordered) + " of 5 seeds");
    v.note("ordering " + std::to_string(ordered) + "/5");
    v.require(worst_split < kBudget2, "runtime per split " + f4(worst_split) + "s");
    v.note("slowest split " + f4(worst_split) + "s");
    return v;
}

Verdict criterion3() {
    Verdict v;
    const auto t0 = Clock::now();
    const std::uint64_t seed = kSeeds[0];
    const auto [train, test] = split_train_test(spam(), kSpamTrain, seed);
    VsurfParams vp;
    vp.forest.seed = seed;
    vp.nrep_vi = kVsurfNrepVi;
    vp.nrep_interp = kVsurfNrepInterp;
    const SelectionReport r = vsurf(train, vp, seed);
    const double secs = seconds_since(t0);
    auto set_error = [&](const std::vector<int>& vars) {
        ForestParams p;
        p.seed = seed;
        p.variables = vars;
        return test_error(train_forest(train, p), test).error;
    };
    const double e_interp = set_error(r.interpretation.selected);
    const double e_pred = set_error(r.prediction.selected);
    const std::size_t kept = r.threshold.kept.size(), interp = r.interpretation.selected.size(),
                      pred = r.prediction.selected.size();
    v.require(kept >= kKeptLo && kept <= kKeptHi, "kept " + std::to_string(kept));
    v.require(interp >= kInterpLo && interp <= kInterpHi, "interpretation size " + std::to_string(interp));
    v.require(pred >= kPredLo && pred <= kPredHi, "prediction size " + std::to_string(pred));
    v.require(within(e_interp, kInterpTarget, kVsurfTol), "interpretation test " + f4(e_interp));
    v.require(within(e_pred, kPredTarget, kVsurfTol), "prediction test " + f4(e_pred));
    v.require(secs < kBudget3, "runtime " + f4(secs) + "s");
    v.note("sets " + std::to_string(kept) + "/" + std::to_string(interp) + "/" + std::to_string(pred) +
           ", test " + f4(e_interp) + "/" + f4(e_pred) + ", nrep " + std::to_string(kVsurfNrepVi) + "/" +
           std::to_string(kVsurfNrepInterp) + ", " + f4(secs) + "s");
    return v;
}

Verdict criterion4() {
    Verdict v;
    const auto t0 = Clock::now();
    Rng rng(4242);
    int failures = 0;
    std::size_t steps = 0;
    for (int rep = 0; rep < kPruningDatasets; ++rep) {
        const Dataset ds = synth::small_random(rng, rep % 2 == 0);
        const Tree t = grow_maximal(ds, GrowParams{});
        const PruningSequence seq = prune_sequence(t);
        const auto best = oracle::argmin_subtrees(t, oracle::node_errors(t, ds), seq.alphas);
        bool ok = seq.leaves.back() == 1;
        for (std::size_t k = 0; k < seq.size(); ++k) {
            if (k > 0 && !(seq.alphas[k] > seq.alphas[k - 1])) ok = false;
            if (seq.leaves[k] != best[k].leaves) ok = false;
            for (std::size_t node = 0; node < t.size(); ++node) {
                if (static_cast<bool>(best[k].internal[node]) != seq.internal_in(node, k + 1)) ok = false;
                if (k > 0 && seq.internal_in(node, k + 1) && !seq.internal_in(node, k)) ok = false;
            }
        }
        steps += seq.size();
        if (!ok) ++failures;
    }
    const double secs = seconds_since(t0);
    v.require(failures == 0, std::to_string(failures) + " datasets disagree with enumeration");
    v.require(secs < kBudget4, "runtime " + f4(secs) + "s");
    v.note(std::to_string(kPruningDatasets) + " datasets, " + std::to_string(steps) + " subtrees checked, " + f4(secs) +
           "s");
    return v;
}

Verdict criterion5() {
    Verdict v;
    double worst = 0;
    for (int d = 0; d < kOobDatasets; ++d) {
        const std::uint64_t seed = 500 + static_cast<std::uint64_t>(d);
        const Dataset train = synth::additive(500, seed);
        const Dataset test = synth::additive(10000, seed + 100000);
        ForestParams p;
        p.seed = seed;
        const Forest f = train_forest(train, p);
        const double gap = std::fabs(oob_error(f, train).error - test_error(f, test).error);
        worst = std::max(worst, gap);
    }
    v.require(worst <= kOobGap, "largest |oob - test| " + f4(worst));
    const Dataset noise = synth::pure_noise(2000, 10, 77);
    ForestParams p;
    p.seed = 3;
    const double e = oob_error(train_forest(noise, p), noise).error;
    v.require(within(e, 0.5, kNoiseTol), "pure-noise oob " + f4(e));
    v.note("largest gap " + f4(worst) + " over " + std::to_string(kOobDatasets) + " datasets, pure-noise oob " + f4(e));
    return v;
}

Verdict criterion6() {
    Verdict v;
    {
        const Dataset ds = synth::additive(300, 61);
        ForestParams p;
        p.variables = {0, 1, 2, 3};
        p.seed = 61;
        const auto vi = variable_importance(train_forest(ds, p), ds, 5);
        bool zero = true;
        for (std::size_t j = 4; j < ds.p(); ++j) zero = zero && vi.vi[j] == 0.0;
        v.require(zero, "unused variable with nonzero importance");
    }
    const auto t0 = Clock::now();
    int separated = 0;
    for (int rep = 0; rep < kImportanceReps; ++rep) {
        const Dataset ds = synth::additive(200, 6000 + static_cast<std::uint64_t>(rep));
        ForestParams p;
        p.ntree = 100;
        ImportanceOptions opts;
        opts.nrep = kImportanceNrep;
        const auto r = replicated_importance(ds, p, 600 + static_cast<std::uint64_t>(rep), opts);
        const double weakest = std::min({r.mean[0], r.mean[1], r.mean[2]});
        const double strongest_noise = *std::max_element(r.mean.begin() + 3, r.mean.end());
        if (weakest > strongest_noise) ++separated;
    }
    const double share = separated / static_cast<double>(kImportanceReps);
    v.require(share >= kImportanceShare, "separation in " + std::to_string(separated) + " of 20 replications");
    v.note("separated " + std::to_string(separated) + "/" + std::to_string(kImportanceReps) + " (n=200, ntree=100, nrep=" +
           std::to_string(kImportanceNrep) + "), " + f4(seconds_since(t0)) + "s");
    return v;
}

Verdict criterion7() {
    Verdict v;
    const std::vector<double> e{0.10, 0.12, 0.11};
    const double t = mean_jump_threshold(e, 1);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.15g", t);
    v.require(t == oracle::exact_mean_jump(e, 1), "worked example differs from the exact rational result");
    v.require(std::string(buf) == "0.015", std::string("worked example prints ") + buf);
    Rng rng(7);
    std::int64_t worst = 0;
    for (int c = 0; c < kMeanJumpCurves; ++c) {
        const std::size_t m = 2 + rng.below(80);
        std::vector<double> curve(m);
        const double scale = std::ldexp(1.0, static_cast<int>(rng.below(40)) - 30);
        for (auto& x : curve) x = scale * rng.uniform();
        const std::size_t mp = 1 + rng.below(m);
        worst = std::max(worst, oracle::ulp_distance(mean_jump_threshold(curve, mp), oracle::exact_mean_jump(curve, mp)));
    }
    v.require(worst <= kMeanJumpUlps, "max ulp distance " + std::to_string(worst));
    char shown[64];
    std::snprintf(shown, sizeof shown, "%.17g", t);
    v.note(std::string("worked example ") + shown + " (%.15g: " + buf + "), max " + std::to_string(worst) + " ulp over " +
           std::to_string(kMeanJumpCurves) + " curves");
    return v;
}

Verdict criterion8() {
    Verdict v;
    const auto [train, test] = split_train_test(spam(), kSpamTrain, kSeeds[0]);
    ForestParams p;
    p.seed = kSeeds[0];
    const Forest mono = train_forest(train, p);
    const Forest own[] = {mono};
    const Forest merged = merge_forests(own);
    bool same = merged == mono;
    for (std::size_t i = 0; i < test.n() && same; ++i) {
        const auto a = mono.predict(test, i), b = merged.predict(test, i);
        same = a.value == b.value && a.votes == b.votes;
    }
    v.require(same, "merged own trees differ");

    const Dataset small = synth::pure_noise(300, 5, 8);
    ForestParams q;
    q.ntree = 50;
    const auto one = train_partitioned(small, make_partition(small, 1, BlockStrategy::random, 3), q, 17);
    ForestParams matched = q;
    matched.seed = block_seed(17, 0);
    v.require(one.forest == train_forest(small, matched), "Q=1 differs from plain training");

    ForestParams block = p;
    block.ntree = 125;
    const auto parts = train_partitioned(train, make_partition(train, 4, BlockStrategy::random, 11), block, 11);
    const double e_mono = test_error(mono, test).error, e_part = test_error(parts.forest, test).error;
    v.require(std::fabs(e_mono - e_part) <= kMergeTol, "Q=4 " + f4(e_part) + " vs " + f4(e_mono));
    v.note("spam Q=4 " + f4(e_part) + " vs monolithic " + f4(e_mono));
    return v;
}

Verdict criterion9() {
    Verdict v;
    int trees = 0, mismatches = 0;
    for (int inst = 0; inst < 6; ++inst) {
        const bool cls = inst % 2 == 0;
        const Dataset ds = cls ? synth::pure_noise(200, 4, 90 + static_cast<std::uint64_t>(inst))
                               : synth::additive(200, 90 + static_cast<std::uint64_t>(inst), 4);
        ForestParams p;
        p.ntree = 10;
        const auto res = train_blb(ds, 20, 2, p, 31 + static_cast<std::uint64_t>(inst));
        const ForestParams rp = res.forest.params();
        GrowParams gp;
        gp.min_node_size = rp.nodesize;
        gp.min_child_size = 1;
        gp.mtry = static_cast<std::size_t>(rp.mtry) >= ds.p() ? 0 : rp.mtry;
        gp.max_surrogates = 0;
        gp.competing = false;
        for (const auto& ft : res.forest.trees()) {
            Rng rng(derive_seed(ft.seed, {1}));
            std::size_t distinct = 0;
            for (auto w : ft.inbag) distinct += w > 0;
            if (!(grow_tree(synth::expand(ds, ft.inbag), {}, gp, &rng) == ft.tree) || distinct > 20) ++mismatches;
            ++trees;
        }
    }
    v.require(mismatches == 0, std::to_string(mismatches) + " trees differ from the expanded fit");
    v.note(std::to_string(trees) + " trees on n=200/m=20");
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    if (fs::is_regular_file(dir)) {
        files[dir.filename().string()] = slurp(dir);
        return files;
    }
    for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = slurp(e.path());
    return files;
}

Verdict criterion10() {
    Verdict v;
    const fs::path root = fs::temp_directory_path() / ("canopy_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);

    Rng rng(10);
    const Dataset base = synth::additive(240, 10, 6);
    std::vector<Column> cols;
    for (std::size_t j = 0; j < base.p(); ++j) cols.push_back(base.column(j));
    std::vector<double> codes(base.n());
    for (auto& c : codes) c = static_cast<double>(rng.below(3));
    cols.push_back(synth::categorical("colour", codes, 3));
    for (std::size_t i = 0; i < base.n(); i += 9) cols[3].missing[i] = 1;
    std::vector<int> labels(base.n());
    for (std::size_t i = 0; i < base.n(); ++i) labels[i] = base.y(i) > 2.0 ? 1 : 0;
    const std::string data = (root / "train.csv").string();
    write_csv(Dataset(cols, synth::class_target(labels, 2)), data);

    const fs::path out = root / "out";
    const std::vector<std::vector<std::string>> commands{
        {"tree", "--folds", "5"},
        {"forest", "--ntree", "40", "--split", "180"},
        {"forest", "--ntree", "30", "--mode", "extra", "--random-splits", "2"},
        {"importance", "--ntree", "30", "--nrep", "3"},
        {"select", "--ntree", "30", "--nrep-vi", "3", "--nrep-interp", "2"},
        {"partition", "--ntree", "20", "--blocks", "3", "--block-strategy", "stratified"},
        {"blb", "--ntree", "10", "--blb-m", "40", "--subsamples", "3"},
    };
    int checked = 0, differing = 0;
    auto run_cli = [](std::vector<std::string> args) {
        std::ostringstream sink_out, sink_err;
        return cli::run(args, sink_out, sink_err);
    };
    for (const auto& cmd : commands) {
        std::map<std::string, std::string> first;
        for (const std::string workers : {"1", "4", "1", "4"}) {
            fs::remove_all(out);
            auto args = cmd;
            for (const std::string& extra :
                 {std::string("--data"), data, std::string("--target"), std::string("y"), std::string("--seed"),
                  std::string("5"), std::string("--out"), out.string(), std::string("--workers"), workers})
                args.push_back(extra);
            const int code = run_cli(args);
            v.require(code == 0, cmd.front() + " exited with " + std::to_string(code));
            const auto files = snapshot(out);
            if (first.empty())
                first = files;
            else if (files != first)
                ++differing;
            ++checked;
        }
        if (cmd.front() == "forest" && cmd.size() > 3 && cmd[3] == "40") {
            std::map<std::string, std::string> preds;
            fs::copy_file(out / "model.forest", root / "model.forest", fs::copy_options::overwrite_existing);
            for (int r = 0; r < 2; ++r) {
                const fs::path pred = root / ("pred" + std::to_string(r) + ".csv");
                v.require(run_cli({"predict", "--model", (root / "model.forest").string(), "--data", data, "--out",
                                   pred.string()}) == 0,
                          "predict failed");
                preds[std::to_string(r)] = slurp(pred);
            }
            ++checked;
            if (preds["0"] != preds["1"]) ++differing;
        }
    }
    fs::remove_all(root);
    v.require(differing == 0, std::to_string(differing) + " runs produced different artifacts");
    v.note(std::to_string(checked) + " runs over " + std::to_string(commands.size() + 1) +
           " command configurations, workers {1,4}");
    return v;
}

struct Criterion {
    int id;
    const char* title;
    Verdict (*run)();
};

const Criterion kCriteria[] = {
    {1, "CART on spam", criterion1},
    {2, "bagging and random forest on spam", criterion2},
    {3, "two-step selection on spam", criterion3},
    {4, "pruning sequence vs exhaustive enumeration", criterion4},
    {5, "out-of-bag fidelity", criterion5},
    {6, "permutation importance properties", criterion6},
    {7, "mean-jump threshold arithmetic", criterion7},
    {8, "merge and partition equivalence", criterion8},
    {9, "bag of little bootstraps weighting", criterion9},
    {10, "determinism across runs and workers", criterion10},
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: acceptance [--only N]\n");
            return 2;
        }
    }
    if (only < 0 || only > 10) {
        std::fprintf(stderr, "criterion must lie in 1..10\n");
        return 2;
    }
    int failed = 0;
    for (const auto& c : kCriteria) {
        if (only != 0 && c.id != only) continue;
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s %d %s: %s\n", v.pass ? "PASS" : "FAIL", c.id, c.title, v.detail.c_str());
        std::fflush(stdout);
        if (!v.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
