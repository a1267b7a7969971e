#include <algorithm>
#include <climits>
#include <cmath>
#include <numeric>

#include "canopy/cart.hpp"
#include "canopy/errors.hpp"
#include "canopy/parallel.hpp"
#include "canopy/random.hpp"

namespace canopy {
namespace {

constexpr double kPruneTolerance = 1e-9;

struct Branch {
    double risk = 0;  // sum of leaf risks of the current branch
    int leaves = 0;
};

/// Post-order list of T_max's nodes (children before parents).
std::vector<std::size_t> post_order(const Tree& t) {
    std::vector<std::size_t> order, stack{0};
    while (!stack.empty()) {
        const auto v = stack.back();
        stack.pop_back();
        order.push_back(v);
        const Node& n = t.node(v);
        if (!n.is_leaf()) {
            stack.push_back(static_cast<std::size_t>(n.left));
            stack.push_back(static_cast<std::size_t>(n.right));
        }
    }
    std::reverse(order.begin(), order.end());
    return order;
}

}  // namespace

PruningSequence prune_sequence(const Tree& t_max) {
    const std::size_t count = t_max.size();
    const double total = t_max.root().weight;
    const auto order = post_order(t_max);
    std::vector<std::uint8_t> internal(count, 0);
    PruningSequence seq;
    seq.collapse_step.assign(count, 0);
    for (std::size_t t = 0; t < count; ++t)
        if (!t_max.node(t).is_leaf()) {
            internal[t] = 1;
            seq.collapse_step[t] = INT_MAX;
        }

    std::vector<Branch> branch(count);
    auto refresh = [&] {
        for (auto t : order) {
            const Node& n = t_max.node(t);
            if (!internal[t]) {
                branch[t] = {n.risk, 1};
            } else {
                const auto& l = branch[static_cast<std::size_t>(n.left)];
                const auto& r = branch[static_cast<std::size_t>(n.right)];
                branch[t] = {l.risk + r.risk, l.leaves + r.leaves};
            }
        }
    };
    auto collapse = [&](std::size_t t, int step) {
        std::vector<std::size_t> stack{t};
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            if (!internal[v]) continue;
            internal[v] = 0;
            seq.collapse_step[v] = step;
            const Node& n = t_max.node(v);
            stack.push_back(static_cast<std::size_t>(n.left));
            stack.push_back(static_cast<std::size_t>(n.right));
        }
    };

    // T_1: collapse bottom-up every node whose branch does not lower the error.
    for (auto t : order) {
        const Node& n = t_max.node(t);
        if (!internal[t]) {
            branch[t] = {n.risk, 1};
            continue;
        }
        const auto& l = branch[static_cast<std::size_t>(n.left)];
        const auto& r = branch[static_cast<std::size_t>(n.right)];
        const double below = l.risk + r.risk;
        if (n.risk <= below + kPruneTolerance * n.risk) {
            collapse(t, 1);
            branch[t] = {n.risk, 1};
        } else {
            branch[t] = {below, l.leaves + r.leaves};
        }
    }
    seq.alphas.push_back(0.0);
    seq.leaves.push_back(branch[0].leaves);
    seq.errors.push_back(branch[0].risk / total);

    while (internal[0]) {
        double alpha = INFINITY;
        std::vector<double> g(count, INFINITY);
        for (std::size_t t = 0; t < count; ++t) {
            if (!internal[t]) continue;
            g[t] = (t_max.node(t).risk - branch[t].risk) / total / (branch[t].leaves - 1);
            alpha = std::min(alpha, g[t]);
        }
        const double cutoff = alpha + kPruneTolerance * std::fabs(alpha);
        const bool merge = alpha <= seq.alphas.back() + kPruneTolerance * std::fabs(seq.alphas.back());
        const int step = static_cast<int>(seq.alphas.size()) + (merge ? 0 : 1);
        // Parents before children so a pruned ancestor claims its whole branch.
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if (internal[*it] && g[*it] <= cutoff) collapse(*it, step);
        refresh();
        if (merge) {
            seq.leaves.back() = branch[0].leaves;
            seq.errors.back() = branch[0].risk / total;
        } else {
            seq.alphas.push_back(alpha);
            seq.leaves.push_back(branch[0].leaves);
            seq.errors.push_back(branch[0].risk / total);
        }
    }
    return seq;
}

Tree subtree(const Tree& t_max, const PruningSequence& seq, std::size_t k) {
    if (k < 1 || k > seq.size()) throw ArgumentError("subtree index out of range");
    std::vector<Node> out;
    struct Item {
        std::size_t src;
        int parent;
        bool is_left;
    };
    std::vector<Item> stack{{0, -1, false}};
    while (!stack.empty()) {
        const Item it = stack.back();
        stack.pop_back();
        const int id = static_cast<int>(out.size());
        out.push_back(t_max.node(it.src));
        if (it.parent >= 0) (it.is_left ? out[static_cast<std::size_t>(it.parent)].left : out[static_cast<std::size_t>(it.parent)].right) = id;
        Node& n = out.back();
        const bool keep = !n.is_leaf() && seq.internal_in(it.src, k);
        const int l = n.left, r = n.right;
        n.left = n.right = -1;
        if (!keep) {
            n.split = Split{};
            n.competing.clear();
            n.surrogates.clear();
            n.majority_left = true;
            continue;
        }
        stack.push_back({static_cast<std::size_t>(r), id, false});
        stack.push_back({static_cast<std::size_t>(l), id, true});
    }
    return Tree(t_max.schema_ptr(), t_max.params(), std::move(out));
}

std::size_t subtree_at(const PruningSequence& seq, double alpha) {
    std::size_t k = 1;
    while (k < seq.size() && seq.alphas[k] <= alpha) ++k;
    return k;
}

CvResult select_subtree_cv(const Dataset& ds, const GrowParams& params, int folds, CvRule rule, std::uint64_t seed,
                           int workers) {
    if (folds < 2) throw ArgumentError("cross-validation needs at least 2 folds");
    if (static_cast<std::size_t>(folds) > ds.n()) throw ArgumentError("more folds than rows");
    const ColumnOrder order(ds);
    auto schema = std::make_shared<const Schema>(ds.schema());

    CvResult res;
    {
        Rng rng(derive_seed(seed, {0}));
        res.maximal = grow_tree(ds, {}, params, &rng, &order, schema);
    }
    res.sequence = prune_sequence(res.maximal);
    const std::size_t K = res.sequence.size();
    const auto& alphas = res.sequence.alphas;
    std::vector<double> beta(K);
    for (std::size_t k = 0; k < K; ++k)
        beta[k] = k + 1 < K ? std::sqrt(alphas[k] * alphas[k + 1]) : alphas[k] * kCvLastAlphaFactor;

    const std::size_t n = ds.n();
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    Rng fold_rng(derive_seed(seed, {1}));
    fold_rng.shuffle(std::span<std::uint32_t>(perm));
    std::vector<int> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));

    std::vector<double> losses(K * n, 0.0);  // losses[k * n + i]
    parallel_for(static_cast<std::size_t>(folds), workers, [&](std::size_t v) {
        std::vector<std::uint32_t> w(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = fold_of[i] == static_cast<int>(v) ? 0 : 1;
        Rng rng(derive_seed(seed, {2, v}));
        const Tree tv = grow_tree(ds, w, params, &rng, &order, schema);
        const PruningSequence sv = prune_sequence(tv);
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t j = subtree_at(sv, beta[k]);
            for (std::size_t i = 0; i < n; ++i) {
                if (w[i]) continue;
                const auto leaf = tv.route(DatasetRow{&ds, i}, true, [&](std::size_t t) { return sv.internal_in(t, j); });
                const double pred = tv.node(leaf).value;
                losses[k * n + i] = ds.task() == Task::classification
                                        ? (pred != static_cast<double>(ds.label(i)) ? 1.0 : 0.0)
                                        : (pred - ds.y(i)) * (pred - ds.y(i));
            }
        }
    });

    res.curve.resize(K);
    const double dn = static_cast<double>(n);
    for (std::size_t k = 0; k < K; ++k) {
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) sum += losses[k * n + i];
        const double mean = sum / dn;
        double se;
        if (ds.task() == Task::classification) {
            se = std::sqrt(mean * (1 - mean) / dn);
        } else {
            double ss = 0;
            for (std::size_t i = 0; i < n; ++i) ss += (losses[k * n + i] - mean) * (losses[k * n + i] - mean);
            se = n > 1 ? std::sqrt(ss / (dn - 1)) / std::sqrt(dn) : 0.0;
        }
        res.curve[k] = {alphas[k], beta[k], res.sequence.leaves[k], mean, se};
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
        if (res.curve[k].error <= res.curve[best].error) best = k;
    res.chosen_min = best + 1;
    const double bound = res.curve[best].error + res.curve[best].se;
    std::size_t one_se = best;
    for (std::size_t k = K; k-- > 0;)
        if (res.curve[k].error <= bound) {
            one_se = k;
            break;
        }
    res.chosen_one_se = one_se + 1;
    res.chosen = rule == CvRule::min ? res.chosen_min : res.chosen_one_se;
    res.tree = subtree(res.maximal, res.sequence, res.chosen);
    return res;
}

}  // namespace canopy
