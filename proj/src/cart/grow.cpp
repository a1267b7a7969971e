#include <algorithm>
#include <numeric>

#include "canopy/cart.hpp"
#include "canopy/errors.hpp"
#include "canopy/random.hpp"
#include "split_search.hpp"

namespace canopy {
namespace {

struct NodeSummary {
    double weight = 0;
    double value = 0;
    std::vector<double> distribution;
    double impurity = 0;
    double risk = 0;
    bool pure = true;
};

template <class Rows>
NodeSummary summarize(const Dataset& ds, const Rows& rows, std::span<const std::uint32_t> w) {
    NodeSummary s;
    if (ds.task() == Task::classification) {
        std::vector<std::int64_t> counts(static_cast<std::size_t>(std::max(ds.n_classes(), 1)), 0);
        for (auto r : rows) {
            counts[static_cast<std::size_t>(ds.label(r))] += w[r];
            s.weight += w[r];
        }
        std::size_t top = 0;
        for (std::size_t c = 1; c < counts.size(); ++c)
            if (counts[c] > counts[top]) top = c;
        s.value = static_cast<double>(top);
        s.distribution.resize(counts.size());
        double sq = 0;
        for (std::size_t c = 0; c < counts.size(); ++c) {
            s.distribution[c] = s.weight > 0 ? static_cast<double>(counts[c]) / s.weight : 0.0;
            sq += s.distribution[c] * s.distribution[c];
        }
        s.impurity = 1.0 - sq;
        s.risk = s.weight - static_cast<double>(counts[top]);
        s.pure = counts[top] == static_cast<std::int64_t>(s.weight);
    } else {
        double sum = 0;
        bool first = true;
        double y0 = 0;
        for (auto r : rows) {
            const double y = ds.y(r);
            for (std::uint32_t k = 0; k < w[r]; ++k) sum += y;
            s.weight += w[r];
            if (first) {
                y0 = y;
                first = false;
            } else if (y != y0) {
                s.pure = false;
            }
        }
        s.value = s.weight > 0 ? sum / s.weight : 0.0;
        double sse = 0;
        for (auto r : rows) {
            const double d = ds.y(r) - s.value;
            for (std::uint32_t k = 0; k < w[r]; ++k) sse += d * d;
        }
        s.risk = s.pure ? 0.0 : sse;
        s.impurity = s.weight > 0 ? s.risk / s.weight : 0.0;
    }
    return s;
}

std::vector<int> allowed_variables(const Dataset& ds, const GrowParams& params) {
    std::vector<int> vars = params.variables;
    if (vars.empty()) {
        vars.resize(ds.p());
        std::iota(vars.begin(), vars.end(), 0);
    }
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    for (int j : vars)
        if (j < 0 || static_cast<std::size_t>(j) >= ds.p()) throw ArgumentError("split variable index out of range");
    return vars;
}

bool rank_before(const Split& a, const Split& b) {
    if (a.decrease != b.decrease) return a.decrease > b.decrease;
    return a.variable < b.variable;
}

class Builder {
public:
    Builder(const Dataset& ds, std::span<const std::uint32_t> w, const GrowParams& params, Rng* rng,
            const ColumnOrder& order)
        : ds_(ds), w_(w), params_(params), rng_(rng), searcher_(ds, w, params.min_child_size) {
        allowed_ = allowed_variables(ds, params);
        for (std::uint32_t i = 0; i < ds.n(); ++i)
            if (w[i] > 0) {
                rows_.push_back(i);
                total_weight_ += w[i];
            }
        m_ = rows_.size();
        if (m_ == 0) throw ArgumentError("no rows with positive weight");
        idx_.resize(allowed_.size() * m_);
        for (std::size_t s = 0; s < allowed_.size(); ++s) {
            const auto j = static_cast<std::size_t>(allowed_[s]);
            std::uint32_t* out = idx_.data() + s * m_;
            for (auto r : order.sorted(j))
                if (w[r] > 0) *out++ = r;
            for (auto r : rows_)
                if (ds.missing(r, j)) *out++ = r;
        }
        tmp_.resize(m_);
        side_.assign(ds.n(), 0);
        if (params.max_surrogates > 0) pside_.assign(ds.n(), 0);
        const bool random_draws =
            params.split_mode == SplitMode::extra_randomized ||
            (params.mtry > 0 && static_cast<std::size_t>(params.mtry) < allowed_.size());
        if (random_draws && !rng_) throw ArgumentError("randomized growth requires a random stream");
    }

    std::vector<Node> build() {
        struct Pending {
            std::size_t begin, end;
            int parent;
            bool is_left;
            int depth;
        };
        std::vector<Node> nodes;
        std::vector<Pending> stack{{0, m_, -1, false, 0}};
        while (!stack.empty()) {
            const Pending cur = stack.back();
            stack.pop_back();
            const int id = static_cast<int>(nodes.size());
            nodes.emplace_back();
            if (cur.parent >= 0) (cur.is_left ? nodes[cur.parent].left : nodes[cur.parent].right) = id;
            std::size_t mid = 0;
            const bool split = process(nodes.back(), cur.begin, cur.end, cur.depth, mid);
            if (split) {
                stack.push_back({mid, cur.end, id, false, cur.depth + 1});
                stack.push_back({cur.begin, mid, id, true, cur.depth + 1});
            }
        }
        return nodes;
    }

private:
    std::span<const std::uint32_t> segment(std::size_t slot, std::size_t b, std::size_t e) const {
        return {idx_.data() + slot * m_ + b, e - b};
    }

    std::span<const std::uint32_t> observed(std::size_t slot, std::size_t b, std::size_t e) const {
        const auto seg = segment(slot, b, e);
        const auto j = static_cast<std::size_t>(allowed_[slot]);
        const auto it = std::partition_point(seg.begin(), seg.end(), [&](std::uint32_t r) { return !ds_.missing(r, j); });
        return seg.first(static_cast<std::size_t>(it - seg.begin()));
    }

    std::size_t slot_of(int j) const {
        return static_cast<std::size_t>(std::lower_bound(allowed_.begin(), allowed_.end(), j) - allowed_.begin());
    }

    bool process(Node& node, std::size_t b, std::size_t e, int depth, std::size_t& mid) {
        const std::span<const std::uint32_t> rows(rows_.data() + b, e - b);
        NodeSummary s = summarize(ds_, rows, w_);
        node.weight = s.weight;
        node.value = s.value;
        node.distribution = std::move(s.distribution);
        node.impurity = s.impurity;
        node.risk = s.risk;
        node.error = s.risk / total_weight_;
        node.depth = depth;
        if (s.pure || e - b < 2 || s.weight < params_.min_node_size || s.weight < 2.0 * params_.min_child_size)
            return false;

        std::vector<int> candidates;
        if (params_.mtry > 0 && static_cast<std::size_t>(params_.mtry) < allowed_.size()) {
            candidates = allowed_;
            rng_->partial_shuffle(std::span<int>(candidates), static_cast<std::size_t>(params_.mtry));
            candidates.resize(static_cast<std::size_t>(params_.mtry));
            std::sort(candidates.begin(), candidates.end());
        } else {
            candidates = allowed_;
        }

        searcher_.set_center(node.value);
        const bool exhaustive = params_.split_mode == SplitMode::exhaustive;
        std::optional<detail::Candidate> best;
        std::vector<Split> competing;
        for (int j : candidates) {
            const auto seg = observed(slot_of(j), b, e);
            auto c = exhaustive ? searcher_.best(j, seg) : searcher_.extra(j, seg, params_.random_splits, *rng_);
            if (!c) continue;
            c->split.decrease = c->delta / s.weight;
            if (params_.competing && exhaustive) competing.push_back(c->split);
            if (!best || searcher_.better(c->delta, best->delta)) best = std::move(c);
        }
        if (!best) return false;
        node.split = best->split;

        if (!competing.empty()) {
            std::vector<Split> ranked;
            ranked.push_back(node.split);
            for (auto& c : competing)
                if (c.variable != node.split.variable) ranked.push_back(std::move(c));
            std::sort(ranked.begin() + 1, ranked.end(), rank_before);
            node.competing = std::move(ranked);
        }

        const int pj = node.split.variable;
        for (auto r : rows) {
            const int dir = node.split.direction(ds_.missing(r, static_cast<std::size_t>(pj)),
                                                 ds_.value(r, static_cast<std::size_t>(pj)));
            side_[r] = static_cast<std::uint8_t>(dir < 0 ? 0 : (dir ? 1 : 2));
        }
        if (params_.max_surrogates > 0) {
            for (auto r : rows) pside_[r] = side_[r];
            std::vector<Surrogate> found;
            for (std::size_t slot = 0; slot < allowed_.size(); ++slot) {
                if (allowed_[slot] == pj) continue;
                auto sur = searcher_.surrogate(allowed_[slot], observed(slot, b, e), pside_);
                if (sur) found.push_back(std::move(*sur));
            }
            std::stable_sort(found.begin(), found.end(),
                             [](const Surrogate& a, const Surrogate& c) { return a.agreement > c.agreement; });
            if (found.size() > static_cast<std::size_t>(params_.max_surrogates))
                found.resize(static_cast<std::size_t>(params_.max_surrogates));
            node.surrogates = std::move(found);
        }

        double w_left = 0, w_right = 0;
        bool pending = false;
        for (auto r : rows) {
            if (side_[r] == 0) {
                for (const auto& sur : node.surrogates) {
                    const auto k = static_cast<std::size_t>(sur.split.variable);
                    const int dir = sur.split.direction(ds_.missing(r, k), ds_.value(r, k));
                    if (dir >= 0) {
                        side_[r] = static_cast<std::uint8_t>(dir ? 1 : 2);
                        break;
                    }
                }
            }
            if (side_[r] == 1) w_left += w_[r];
            else if (side_[r] == 2) w_right += w_[r];
            else pending = true;
        }
        const bool majority_left = w_left >= w_right;
        if (pending)
            for (auto r : rows)
                if (side_[r] == 0) side_[r] = majority_left ? 1 : 2;
        node.majority_left = majority_left;

        mid = b + partition(rows_.data() + b, e - b);
        for (std::size_t slot = 0; slot < allowed_.size(); ++slot) partition(idx_.data() + slot * m_ + b, e - b);
        return true;
    }

    std::size_t partition(std::uint32_t* data, std::size_t len) {
        std::size_t nl = 0, nr = 0;
        for (std::size_t i = 0; i < len; ++i) {
            const auto r = data[i];
            if (side_[r] == 1)
                data[nl++] = r;
            else
                tmp_[nr++] = r;
        }
        std::copy(tmp_.begin(), tmp_.begin() + static_cast<std::ptrdiff_t>(nr), data + nl);
        return nl;
    }

    const Dataset& ds_;
    std::span<const std::uint32_t> w_;
    const GrowParams& params_;
    Rng* rng_;
    detail::SplitSearcher searcher_;
    std::vector<int> allowed_;
    std::vector<std::uint32_t> rows_;
    std::size_t m_ = 0;
    double total_weight_ = 0;
    std::vector<std::uint32_t> idx_;
    std::vector<std::uint32_t> tmp_;
    std::vector<std::uint8_t> side_;
    std::vector<std::uint8_t> pside_;
};

std::vector<std::uint32_t> sorted_observed(const Dataset& ds, std::span<const std::uint32_t> rows,
                                           std::span<const std::uint32_t> w, int j) {
    std::vector<std::uint32_t> seg;
    for (auto r : rows)
        if (w[r] > 0 && !ds.missing(r, static_cast<std::size_t>(j))) seg.push_back(r);
    std::stable_sort(seg.begin(), seg.end(), [&](std::uint32_t a, std::uint32_t b) {
        const double va = ds.value(a, static_cast<std::size_t>(j)), vb = ds.value(b, static_cast<std::size_t>(j));
        return va < vb || (va == vb && a < b);
    });
    return seg;
}

}  // namespace

GrowParams cart_defaults() {
    GrowParams p;
    p.min_node_size = 1;
    p.max_surrogates = 5;
    p.competing = true;
    return p;
}

ColumnOrder::ColumnOrder(const Dataset& ds) : order_(ds.p()) {
    for (std::size_t j = 0; j < ds.p(); ++j) {
        auto& o = order_[j];
        for (std::uint32_t i = 0; i < ds.n(); ++i)
            if (!ds.missing(i, j)) o.push_back(i);
        const auto& x = ds.column(j).values;
        std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x[a] < x[b]; });
    }
}

Tree grow_tree(const Dataset& ds, std::span<const std::uint32_t> weights, const GrowParams& params, Rng* rng,
               const ColumnOrder* order, std::shared_ptr<const Schema> schema) {
    if (ds.n() == 0) throw ArgumentError("cannot grow a tree on an empty dataset");
    if (params.min_node_size < 1 || params.min_child_size < 1) throw ArgumentError("node sizes must be positive");
    if (params.mtry < 0) throw ArgumentError("mtry must be non-negative");
    if (params.random_splits < 1) throw ArgumentError("random_splits must be at least 1");
    if (params.max_surrogates < 0) throw ArgumentError("max_surrogates must be non-negative");
    std::vector<std::uint32_t> ones;
    if (weights.empty()) {
        ones.assign(ds.n(), 1);
        weights = ones;
    }
    if (weights.size() != ds.n()) throw ArgumentError("weight vector length differs from row count");
    std::optional<ColumnOrder> local;
    if (!order) order = &local.emplace(ds);
    if (!schema) schema = std::make_shared<const Schema>(ds.schema());
    Builder builder(ds, weights, params, rng, *order);
    return Tree(std::move(schema), params, builder.build());
}

Tree grow_maximal(const Dataset& ds, const GrowParams& params) {
    if (ds.n() == 0) throw ArgumentError("cannot grow a tree on an empty dataset");
    return grow_tree(ds, {}, params, nullptr);
}

std::optional<Split> best_split_at(const Dataset& ds, std::span<const std::uint32_t> rows,
                                   std::span<const std::uint32_t> weights, std::span<const int> candidates,
                                   int min_child_size) {
    detail::SplitSearcher searcher(ds, weights, min_child_size);
    const NodeSummary s = summarize(ds, rows, weights);
    if (s.pure || s.weight == 0) return std::nullopt;
    searcher.set_center(s.value);
    std::vector<int> vars(candidates.begin(), candidates.end());
    std::sort(vars.begin(), vars.end());
    std::optional<detail::Candidate> best;
    for (int j : vars) {
        const auto seg = sorted_observed(ds, rows, weights, j);
        auto c = searcher.best(j, seg);
        if (c && (!best || searcher.better(c->delta, best->delta))) best = std::move(c);
    }
    if (!best) return std::nullopt;
    best->split.decrease = best->delta / s.weight;
    return best->split;
}

std::vector<Split> competing_splits_at(const Dataset& ds, std::span<const std::uint32_t> rows,
                                       std::span<const std::uint32_t> weights, int min_child_size) {
    detail::SplitSearcher searcher(ds, weights, min_child_size);
    const NodeSummary s = summarize(ds, rows, weights);
    if (s.pure || s.weight == 0) return {};
    searcher.set_center(s.value);
    std::vector<detail::Candidate> found;
    for (int j = 0; j < static_cast<int>(ds.p()); ++j) {
        auto c = searcher.best(j, sorted_observed(ds, rows, weights, j));
        if (c) found.push_back(std::move(*c));
    }
    if (found.empty()) return {};
    std::size_t top = 0;
    for (std::size_t i = 1; i < found.size(); ++i)
        if (searcher.better(found[i].delta, found[top].delta)) top = i;
    std::vector<Split> ranked{found[top].split};
    ranked.front().decrease = found[top].delta / s.weight;
    for (std::size_t i = 0; i < found.size(); ++i) {
        if (i == top) continue;
        found[i].split.decrease = found[i].delta / s.weight;
        ranked.push_back(found[i].split);
    }
    std::sort(ranked.begin() + 1, ranked.end(), rank_before);
    return ranked;
}

std::vector<Surrogate> surrogate_splits_at(const Dataset& ds, std::span<const std::uint32_t> rows,
                                           std::span<const std::uint32_t> weights, const Split& primary,
                                           int max_surrogates) {
    if (max_surrogates <= 0) return {};
    detail::SplitSearcher searcher(ds, weights, 1);
    std::vector<std::uint8_t> side(ds.n(), 0);
    const auto pj = static_cast<std::size_t>(primary.variable);
    for (auto r : rows) {
        const int dir = primary.direction(ds.missing(r, pj), ds.value(r, pj));
        side[r] = static_cast<std::uint8_t>(dir < 0 ? 0 : (dir ? 1 : 2));
    }
    std::vector<Surrogate> found;
    for (int j = 0; j < static_cast<int>(ds.p()); ++j) {
        if (j == primary.variable) continue;
        auto s = searcher.surrogate(j, sorted_observed(ds, rows, weights, j), side);
        if (s) found.push_back(std::move(*s));
    }
    std::stable_sort(found.begin(), found.end(),
                     [](const Surrogate& a, const Surrogate& b) { return a.agreement > b.agreement; });
    if (found.size() > static_cast<std::size_t>(max_surrogates)) found.resize(static_cast<std::size_t>(max_surrogates));
    return found;
}

std::optional<Split> extra_randomized_split(const Dataset& ds, std::span<const std::uint32_t> rows,
                                            std::span<const std::uint32_t> weights, std::span<const int> candidates,
                                            int random_splits, int min_child_size, Rng& rng) {
    detail::SplitSearcher searcher(ds, weights, min_child_size);
    const NodeSummary s = summarize(ds, rows, weights);
    if (s.pure || s.weight == 0) return std::nullopt;
    searcher.set_center(s.value);
    std::vector<int> vars(candidates.begin(), candidates.end());
    std::sort(vars.begin(), vars.end());
    std::optional<detail::Candidate> best;
    for (int j : vars) {
        auto c = searcher.extra(j, sorted_observed(ds, rows, weights, j), random_splits, rng);
        if (c && (!best || searcher.better(c->delta, best->delta))) best = std::move(c);
    }
    if (!best) return std::nullopt;
    best->split.decrease = best->delta / s.weight;
    return best->split;
}

double gini(std::span<const double> proportions) {
    double sq = 0;
    for (double p : proportions) sq += p * p;
    return 1.0 - sq;
}

}  // namespace canopy
