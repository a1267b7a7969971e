#include "split_search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace canopy::detail {
namespace {

constexpr double kClassTolerance = 1e-14;
constexpr double kRegressionTolerance = 1e-12;
constexpr int kMaxExhaustiveLevels = 12;

double midpoint(double a, double b) {
    double mid = a / 2 + b / 2;
    if (!(mid >= a) || !(mid < b)) mid = a;
    return mid;
}

}  // namespace

SplitSearcher::SplitSearcher(const Dataset& ds, std::span<const std::uint32_t> weights, int min_child_size)
    : ds_(ds),
      w_(weights),
      min_child_(std::max(min_child_size, 1)),
      classification_(ds.task() == Task::classification),
      n_classes_(ds.n_classes()) {
    counts_.resize(static_cast<std::size_t>(std::max(n_classes_, 1)));
    left_counts_.resize(counts_.size());
}

bool SplitSearcher::better(double a, double b) const {
    if (classification_) return a > b;
    return a > b + kRegressionTolerance * std::fabs(b);
}

SplitSearcher::Totals SplitSearcher::totals(std::span<const std::uint32_t> seg) {
    Totals t;
    if (classification_) {
        std::fill(counts_.begin(), counts_.end(), 0);
        for (auto r : seg) {
            counts_[static_cast<std::size_t>(ds_.label(r))] += w_[r];
            t.weight += w_[r];
        }
        for (auto c : counts_) t.sumsq += c * c;
        t.parent_term = static_cast<double>(t.sumsq) / t.weight;
    } else {
        for (auto r : seg) {
            const double yc = ds_.y(r) - center_;
            for (std::uint32_t k = 0; k < w_[r]; ++k) {
                t.sum += yc;
                t.sse += yc * yc;
            }
            t.weight += w_[r];
        }
        t.parent_term = t.sum * t.sum / t.weight;
    }
    return t;
}

bool SplitSearcher::admissible(double delta, const Totals& t) const {
    if (classification_) return delta > kClassTolerance * t.weight;
    return t.sse > 0 && delta > kRegressionTolerance * t.sse;
}

double SplitSearcher::score_class(std::int64_t sq_left, double w_left, std::int64_t sq_right, double w_right,
                                  const Totals& t) const {
    return static_cast<double>(sq_left) / w_left + static_cast<double>(sq_right) / w_right - t.parent_term;
}

double SplitSearcher::score_reg(double s_left, double w_left, const Totals& t) const {
    const double s_right = t.sum - s_left;
    const double w_right = t.weight - w_left;
    return s_left * s_left / w_left + s_right * s_right / w_right - t.parent_term;
}

std::optional<Candidate> SplitSearcher::best(int j, std::span<const std::uint32_t> seg) {
    if (seg.size() < 2) return std::nullopt;
    return ds_.column(static_cast<std::size_t>(j)).kind.is_categorical() ? categorical(j, seg) : numeric(j, seg);
}

std::optional<Candidate> SplitSearcher::numeric(int j, std::span<const std::uint32_t> seg) {
    const auto& x = ds_.column(static_cast<std::size_t>(j)).values;
    if (x[seg.front()] == x[seg.back()]) return std::nullopt;
    const Totals t = totals(seg);
    if (t.weight < 2.0 * min_child_) return std::nullopt;

    std::fill(left_counts_.begin(), left_counts_.end(), 0);
    std::int64_t sq_left = 0, sq_right = t.sumsq;
    double w_left = 0, s_left = 0;
    bool found = false;
    double best_delta = 0, best_threshold = 0;
    for (std::size_t i = 0; i + 1 < seg.size(); ++i) {
        const auto r = seg[i];
        const std::uint32_t w = w_[r];
        if (classification_) {
            const auto c = static_cast<std::size_t>(ds_.label(r));
            const std::int64_t cl = left_counts_[c];
            const std::int64_t cr = counts_[c] - cl;
            sq_left += 2 * cl * w + std::int64_t{w} * w;
            sq_right += -2 * cr * w + std::int64_t{w} * w;
            left_counts_[c] += w;
        } else {
            const double yc = ds_.y(r) - center_;
            for (std::uint32_t k = 0; k < w; ++k) s_left += yc;
        }
        w_left += w;
        const double xi = x[r];
        const double xn = x[seg[i + 1]];
        if (xi == xn) continue;
        const double w_right = t.weight - w_left;
        if (w_left < min_child_ || w_right < min_child_) continue;
        const double delta =
            classification_ ? score_class(sq_left, w_left, sq_right, w_right, t) : score_reg(s_left, w_left, t);
        if (!found || better(delta, best_delta)) {
            found = true;
            best_delta = delta;
            best_threshold = midpoint(xi, xn);
        }
    }
    if (!found || !admissible(best_delta, t)) return std::nullopt;
    Candidate c;
    c.split.variable = j;
    c.split.threshold = best_threshold;
    c.delta = best_delta;
    return c;
}

std::optional<Candidate> SplitSearcher::from_level_mask(int j, const std::vector<int>& observed,
                                                        const std::vector<std::uint8_t>& left, double delta) {
    const Column& col = ds_.column(static_cast<std::size_t>(j));
    Candidate c;
    c.split.variable = j;
    c.split.categorical = true;
    c.split.levels.assign(static_cast<std::size_t>(col.kind.cardinality), 2);
    const bool flip = !left[0];
    for (std::size_t i = 0; i < observed.size(); ++i)
        c.split.levels[static_cast<std::size_t>(observed[i])] = static_cast<std::uint8_t>(left[i] != flip);
    c.delta = delta;
    return c;
}

std::optional<Candidate> SplitSearcher::categorical(int j, std::span<const std::uint32_t> seg) {
    const Column& col = ds_.column(static_cast<std::size_t>(j));
    const auto K = static_cast<std::size_t>(col.kind.cardinality);
    const auto L = counts_.size();
    level_weight_.assign(K, 0.0);
    if (classification_)
        level_counts_.assign(K * L, 0);
    else
        level_sum_.assign(K, 0.0);
    for (auto r : seg) {
        const auto lv = static_cast<std::size_t>(col.values[r]);
        level_weight_[lv] += w_[r];
        if (classification_) {
            level_counts_[lv * L + static_cast<std::size_t>(ds_.label(r))] += w_[r];
        } else {
            const double yc = ds_.y(r) - center_;
            for (std::uint32_t k = 0; k < w_[r]; ++k) level_sum_[lv] += yc;
        }
    }
    std::vector<int> observed;
    for (std::size_t lv = 0; lv < K; ++lv)
        if (level_weight_[lv] > 0) observed.push_back(static_cast<int>(lv));
    const std::size_t k = observed.size();
    if (k < 2) return std::nullopt;
    const Totals t = totals(seg);
    if (t.weight < 2.0 * min_child_) return std::nullopt;

    bool found = false;
    double best_delta = 0;
    std::vector<std::uint8_t> best_left(k, 0);

    auto sq_of = [&](const std::vector<std::int64_t>& counts) {
        std::int64_t s = 0;
        for (auto c : counts) s += c * c;
        return s;
    };

    // Ordered scan: levels sorted by `less`, every prefix is a left set.
    auto ordered_scan = [&](auto less) {
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), less);
        std::vector<std::int64_t> cl(L, 0), cr(L, 0);
        double w_left = 0, s_left = 0;
        for (std::size_t i = 0; i + 1 < k; ++i) {
            const auto lv = static_cast<std::size_t>(observed[order[i]]);
            w_left += level_weight_[lv];
            if (classification_)
                for (std::size_t c = 0; c < L; ++c) cl[c] += level_counts_[lv * L + c];
            else
                s_left += level_sum_[lv];
            const double w_right = t.weight - w_left;
            if (w_left < min_child_ || w_right < min_child_) continue;
            double delta;
            if (classification_) {
                for (std::size_t c = 0; c < L; ++c) cr[c] = counts_[c] - cl[c];
                delta = score_class(sq_of(cl), w_left, sq_of(cr), w_right, t);
            } else {
                delta = score_reg(s_left, w_left, t);
            }
            if (!found || better(delta, best_delta)) {
                found = true;
                best_delta = delta;
                std::fill(best_left.begin(), best_left.end(), 0);
                for (std::size_t q = 0; q <= i; ++q) best_left[order[q]] = 1;
            }
        }
    };

    auto by_class_share = [&](std::size_t cls) {
        return [&, cls](std::size_t a, std::size_t b) {
            const auto la = static_cast<std::size_t>(observed[a]);
            const auto lb = static_cast<std::size_t>(observed[b]);
            // counts_a / w_a < counts_b / w_b, exact in integers
            const auto wa = static_cast<std::int64_t>(level_weight_[la]);
            const auto wb = static_cast<std::int64_t>(level_weight_[lb]);
            return level_counts_[la * L + cls] * wb < level_counts_[lb * L + cls] * wa;
        };
    };

    if (!classification_) {
        ordered_scan([&](std::size_t a, std::size_t b) {
            const auto la = static_cast<std::size_t>(observed[a]);
            const auto lb = static_cast<std::size_t>(observed[b]);
            return level_sum_[la] / level_weight_[la] < level_sum_[lb] / level_weight_[lb];
        });
    } else if (L <= 2) {
        ordered_scan(by_class_share(L - 1));
    } else if (k <= static_cast<std::size_t>(kMaxExhaustiveLevels)) {
        std::vector<std::int64_t> cl(L), cr(L);
        const std::uint32_t full = (1u << k) - 1;
        for (std::uint32_t mask = 1; mask < full; mask += 2) {
            std::fill(cl.begin(), cl.end(), 0);
            double w_left = 0;
            for (std::size_t i = 0; i < k; ++i) {
                if (!(mask >> i & 1u)) continue;
                const auto lv = static_cast<std::size_t>(observed[i]);
                w_left += level_weight_[lv];
                for (std::size_t c = 0; c < L; ++c) cl[c] += level_counts_[lv * L + c];
            }
            const double w_right = t.weight - w_left;
            if (w_left < min_child_ || w_right < min_child_) continue;
            for (std::size_t c = 0; c < L; ++c) cr[c] = counts_[c] - cl[c];
            const double delta = score_class(sq_of(cl), w_left, sq_of(cr), w_right, t);
            if (!found || better(delta, best_delta)) {
                found = true;
                best_delta = delta;
                for (std::size_t i = 0; i < k; ++i) best_left[i] = static_cast<std::uint8_t>(mask >> i & 1u);
            }
        }
    } else {
        for (std::size_t cls = 0; cls < L; ++cls) ordered_scan(by_class_share(cls));
    }
    if (!found || !admissible(best_delta, t)) return std::nullopt;
    return from_level_mask(j, observed, best_left, best_delta);
}

std::optional<Candidate> SplitSearcher::extra(int j, std::span<const std::uint32_t> seg, int random_splits, Rng& rng) {
    if (seg.size() < 2) return std::nullopt;
    const Column& col = ds_.column(static_cast<std::size_t>(j));
    const auto L = counts_.size();
    const int draws = std::max(random_splits, 1);

    if (!col.kind.is_categorical()) {
        const double lo = col.values[seg.front()];
        const double hi = col.values[seg.back()];
        if (lo == hi) return std::nullopt;
        const Totals t = totals(seg);
        bool found = false;
        double best_delta = 0, best_threshold = 0;
        std::vector<std::int64_t> cl(L), cr(L);
        for (int s = 0; s < draws; ++s) {
            double d = lo + rng.uniform_open() * (hi - lo);
            if (d >= hi) d = std::nextafter(hi, lo);
            if (d < lo) d = lo;
            std::fill(cl.begin(), cl.end(), 0);
            double w_left = 0, s_left = 0;
            for (auto r : seg) {
                if (col.values[r] > d) break;
                w_left += w_[r];
                if (classification_) {
                    cl[static_cast<std::size_t>(ds_.label(r))] += w_[r];
                } else {
                    const double yc = ds_.y(r) - center_;
                    for (std::uint32_t k = 0; k < w_[r]; ++k) s_left += yc;
                }
            }
            const double w_right = t.weight - w_left;
            if (w_left < min_child_ || w_right < min_child_) continue;
            double delta;
            if (classification_) {
                std::int64_t sql = 0, sqr = 0;
                for (std::size_t c = 0; c < L; ++c) {
                    cr[c] = counts_[c] - cl[c];
                    sql += cl[c] * cl[c];
                    sqr += cr[c] * cr[c];
                }
                delta = score_class(sql, w_left, sqr, w_right, t);
            } else {
                delta = score_reg(s_left, w_left, t);
            }
            if (!found || better(delta, best_delta)) {
                found = true;
                best_delta = delta;
                best_threshold = d;
            }
        }
        if (!found || !admissible(best_delta, t)) return std::nullopt;
        Candidate c;
        c.split.variable = j;
        c.split.threshold = best_threshold;
        c.delta = best_delta;
        return c;
    }

    const auto K = static_cast<std::size_t>(col.kind.cardinality);
    level_weight_.assign(K, 0.0);
    for (auto r : seg) level_weight_[static_cast<std::size_t>(col.values[r])] += w_[r];
    std::vector<int> observed;
    for (std::size_t lv = 0; lv < K; ++lv)
        if (level_weight_[lv] > 0) observed.push_back(static_cast<int>(lv));
    const std::size_t k = observed.size();
    if (k < 2) return std::nullopt;
    const Totals t = totals(seg);
    std::vector<std::uint8_t> side(K, 0), left(k), best_left(k);
    bool found = false;
    double best_delta = 0;
    std::vector<std::int64_t> cl(L), cr(L);
    for (int s = 0; s < draws; ++s) {
        std::size_t ones;
        do {
            ones = 0;
            for (std::size_t i = 0; i < k; ++i) {
                left[i] = static_cast<std::uint8_t>(rng.below(2));
                ones += left[i];
            }
        } while (ones == 0 || ones == k);
        for (std::size_t i = 0; i < k; ++i) side[static_cast<std::size_t>(observed[i])] = left[i];
        std::fill(cl.begin(), cl.end(), 0);
        double w_left = 0, s_left = 0;
        for (auto r : seg) {
            if (!side[static_cast<std::size_t>(col.values[r])]) continue;
            w_left += w_[r];
            if (classification_) {
                cl[static_cast<std::size_t>(ds_.label(r))] += w_[r];
            } else {
                const double yc = ds_.y(r) - center_;
                for (std::uint32_t q = 0; q < w_[r]; ++q) s_left += yc;
            }
        }
        const double w_right = t.weight - w_left;
        if (w_left < min_child_ || w_right < min_child_) continue;
        double delta;
        if (classification_) {
            std::int64_t sql = 0, sqr = 0;
            for (std::size_t c = 0; c < L; ++c) {
                cr[c] = counts_[c] - cl[c];
                sql += cl[c] * cl[c];
                sqr += cr[c] * cr[c];
            }
            delta = score_class(sql, w_left, sqr, w_right, t);
        } else {
            delta = score_reg(s_left, w_left, t);
        }
        if (!found || better(delta, best_delta)) {
            found = true;
            best_delta = delta;
            best_left = left;
        }
    }
    if (!found || !admissible(best_delta, t)) return std::nullopt;
    return from_level_mask(j, observed, best_left, best_delta);
}

std::optional<Surrogate> SplitSearcher::surrogate(int j, std::span<const std::uint32_t> seg,
                                                  std::span<const std::uint8_t> side) {
    const Column& col = ds_.column(static_cast<std::size_t>(j));
    double tot_left = 0, tot_right = 0;
    for (auto r : seg) {
        if (side[r] == 1) tot_left += w_[r];
        if (side[r] == 2) tot_right += w_[r];
    }
    const double baseline = std::max(tot_left, tot_right);
    if (tot_left == 0 || tot_right == 0) return std::nullopt;

    Surrogate best;
    best.split.variable = j;
    best.baseline = baseline;
    bool found = false;
    if (!col.kind.is_categorical()) {
        double l_left = 0, l_right = 0;
        std::size_t prev = seg.size();
        for (std::size_t i = 0; i < seg.size(); ++i) {
            const auto r = seg[i];
            if (side[r] == 0) continue;
            if (prev < seg.size() && col.values[seg[prev]] != col.values[r]) {
                const double agree = l_left + (tot_right - l_right);
                const double agree_rev = l_right + (tot_left - l_left);
                const double thr = midpoint(col.values[seg[prev]], col.values[r]);
                if (!found || agree > best.agreement) {
                    found = true;
                    best.agreement = agree;
                    best.split.threshold = thr;
                    best.split.reversed = false;
                }
                if (agree_rev > best.agreement) {
                    best.agreement = agree_rev;
                    best.split.threshold = thr;
                    best.split.reversed = true;
                }
            }
            (side[r] == 1 ? l_left : l_right) += w_[r];
            prev = i;
        }
    } else {
        const auto K = static_cast<std::size_t>(col.kind.cardinality);
        std::vector<double> wl(K, 0.0), wr(K, 0.0);
        for (auto r : seg) {
            const auto lv = static_cast<std::size_t>(col.values[r]);
            if (side[r] == 1) wl[lv] += w_[r];
            if (side[r] == 2) wr[lv] += w_[r];
        }
        best.split.categorical = true;
        best.split.levels.assign(K, 2);
        double agree = 0;
        int n_left = 0, n_right = 0;
        for (std::size_t lv = 0; lv < K; ++lv) {
            if (wl[lv] + wr[lv] == 0) continue;
            const bool go_left = wl[lv] >= wr[lv];
            best.split.levels[lv] = go_left ? 1 : 0;
            agree += go_left ? wl[lv] : wr[lv];
            (go_left ? n_left : n_right)++;
        }
        if (n_left == 0 || n_right == 0) return std::nullopt;
        best.agreement = agree;
        found = true;
    }
    if (!found || !(best.agreement > baseline)) return std::nullopt;
    return best;
}

}  // namespace canopy::detail
