#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "canopy/cart.hpp"
#include "canopy/data.hpp"

namespace oracle {

/// Node risks recomputed from the rows that reach each node of `t`, divided by n.
inline std::vector<double> node_errors(const canopy::Tree& t, const canopy::Dataset& ds) {
    const std::size_t N = t.size();
    const std::size_t n = ds.n();
    std::vector<std::vector<std::size_t>> rows(N);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t k = 0;
        rows[0].push_back(i);
        while (!t.node(k).is_leaf()) {
            const auto& nd = t.node(k);
            const int j = nd.split.variable;
            int dir = nd.split.direction(ds.missing(i, static_cast<std::size_t>(j)), ds.value(i, static_cast<std::size_t>(j)));
            if (dir < 0) dir = nd.majority_left ? 1 : 0;
            k = static_cast<std::size_t>(dir ? nd.left : nd.right);
            rows[k].push_back(i);
        }
    }
    std::vector<double> err(N, 0.0);
    for (std::size_t k = 0; k < N; ++k) {
        const auto& r = rows[k];
        double risk = 0;
        if (ds.task() == canopy::Task::classification) {
            std::map<int, std::size_t> counts;
            for (auto i : r) ++counts[ds.label(i)];
            std::size_t best = 0;
            for (const auto& [c, m] : counts) best = std::max(best, m);
            risk = static_cast<double>(r.size() - best);
        } else if (!r.empty()) {
            double mean = 0;
            for (auto i : r) mean += ds.y(i);
            mean /= static_cast<double>(r.size());
            for (auto i : r) risk += (ds.y(i) - mean) * (ds.y(i) - mean);
        }
        err[k] = risk / static_cast<double>(n);
    }
    return err;
}

/// A rooted pruned subtree, identified by its set of internal nodes.
struct Candidate {
    double error = 0.0;
    int leaves = 0;
    std::vector<std::uint8_t> internal;
};

/// Visit every rooted pruned subtree of `t`.
inline void enumerate_subtrees(const canopy::Tree& t, const std::vector<double>& err,
                               const std::function<void(const Candidate&)>& visit) {
    Candidate cur;
    cur.internal.assign(t.size(), 0);
    // Frontier-based enumeration: each open node is either closed as a leaf or expanded.
    std::function<void(std::vector<std::size_t>&, std::size_t)> rec = [&](std::vector<std::size_t>& open,
                                                                           std::size_t pos) {
        if (pos == open.size()) {
            visit(cur);
            return;
        }
        const std::size_t k = open[pos];
        cur.error += err[k];
        cur.leaves += 1;
        rec(open, pos + 1);
        cur.error -= err[k];
        cur.leaves -= 1;
        if (!t.node(k).is_leaf()) {
            cur.internal[k] = 1;
            open.push_back(static_cast<std::size_t>(t.node(k).left));
            open.push_back(static_cast<std::size_t>(t.node(k).right));
            rec(open, pos + 1);
            open.pop_back();
            open.pop_back();
            cur.internal[k] = 0;
        }
    };
    std::vector<std::size_t> open{0};
    rec(open, 0);
}

inline double count_subtrees(const canopy::Tree& t, std::size_t k = 0) {
    const auto& nd = t.node(k);
    if (nd.is_leaf()) return 1.0;
    return 1.0 + count_subtrees(t, static_cast<std::size_t>(nd.left)) *
                     count_subtrees(t, static_cast<std::size_t>(nd.right));
}

/// Smallest minimizer of err(T) + alpha |T| for each alpha. Two criteria within
/// `tol` (relative) are treated as equal.
inline std::vector<Candidate> argmin_subtrees(const canopy::Tree& t, const std::vector<double>& err,
                                              const std::vector<double>& alphas, double tol = 1e-9) {
    std::vector<Candidate> best(alphas.size());
    std::vector<double> best_crit(alphas.size(), INFINITY);
    enumerate_subtrees(t, err, [&](const Candidate& c) {
        for (std::size_t a = 0; a < alphas.size(); ++a) {
            const double crit = c.error + alphas[a] * c.leaves;
            if (std::isinf(best_crit[a])) {
                best_crit[a] = crit;
                best[a] = c;
                continue;
            }
            const double scale = std::max({1e-12, std::fabs(crit), std::fabs(best_crit[a])});
            if (crit < best_crit[a] - tol * scale ||
                (std::fabs(crit - best_crit[a]) <= tol * scale && c.leaves < best[a].leaves)) {
                best_crit[a] = std::min(crit, best_crit[a]);
                best[a] = c;
            }
        }
    });
    return best;
}

using Rational = boost::multiprecision::cpp_rational;

inline Rational exact(double x) {
    int e = 0;
    const double m = std::frexp(x, &e);
    const auto mant = static_cast<std::int64_t>(std::ldexp(m, 53));
    Rational r(mant);
    e -= 53;
    const Rational two(2);
    for (; e > 0; --e) r *= two;
    for (; e < 0; ++e) r /= two;
    return r;
}

/// Double nearest to q.
inline double nearest(const Rational& q) {
    const double approx = q.convert_to<double>();
    double best = approx;
    Rational best_gap = abs(exact(approx) - q);
    double c = approx;
    for (int s = 0; s < 4; ++s) {
        c = std::nextafter(c, INFINITY);
        const Rational gap = abs(exact(c) - q);
        if (gap < best_gap) best = c, best_gap = gap;
    }
    c = approx;
    for (int s = 0; s < 4; ++s) {
        c = std::nextafter(c, -INFINITY);
        const Rational gap = abs(exact(c) - q);
        if (gap < best_gap) best = c, best_gap = gap;
    }
    return best;
}

/// The double nearest to (1/(m-m')) sum_{j=m'}^{m-1} |e(j+1) - e(j)| evaluated
/// in exact rational arithmetic (1-based curve values).
inline double exact_mean_jump(const std::vector<double>& errors, std::size_t m_prime) {
    const std::size_t m = errors.size();
    if (m_prime == m) return 0.0;
    Rational sum(0);
    for (std::size_t j = m_prime; j < m; ++j) sum += abs(exact(errors[j]) - exact(errors[j - 1]));
    return nearest(sum / Rational(static_cast<long long>(m - m_prime)));
}

/// Distance between two doubles in units in the last place.
inline std::int64_t ulp_distance(double a, double b) {
    auto key = [](double x) {
        std::int64_t i;
        std::memcpy(&i, &x, sizeof i);
        return i < 0 ? std::numeric_limits<std::int64_t>::min() - i : i;
    };
    const std::int64_t d = key(a) - key(b);
    return d < 0 ? -d : d;
}

}  // namespace oracle
