#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "canopy/cart.hpp"
#include "canopy/random.hpp"

namespace canopy::detail {

struct Candidate {
    Split split;
    double delta = 0.0;  // weighted impurity reduction over rows observed for the variable
};

/// Split scoring over one node. Each query receives the node's rows observed
/// for the variable, in ascending value order (categorical: ascending code).
class SplitSearcher {
public:
    SplitSearcher(const Dataset& ds, std::span<const std::uint32_t> weights, int min_child_size);

    /// Regression responses are centered at the node mean before summation.
    void set_center(double center) { center_ = center; }

    std::optional<Candidate> best(int j, std::span<const std::uint32_t> seg);
    std::optional<Candidate> extra(int j, std::span<const std::uint32_t> seg, int random_splits, Rng& rng);
    /// side[row]: 1 primary-left, 2 primary-right, 0 primary missing.
    std::optional<Surrogate> surrogate(int j, std::span<const std::uint32_t> seg, std::span<const std::uint8_t> side);

    /// true when a > b under the tie rules (regression compares with a relative margin).
    bool better(double a, double b) const;

private:
    struct Totals {
        double weight = 0.0;
        double sum = 0.0;
        double sse = 0.0;
        std::int64_t sumsq = 0;
        double parent_term = 0.0;
    };

    Totals totals(std::span<const std::uint32_t> seg);
    bool admissible(double delta, const Totals& t) const;
    double score_class(std::int64_t sq_left, double w_left, std::int64_t sq_right, double w_right,
                       const Totals& t) const;
    double score_reg(double s_left, double w_left, const Totals& t) const;

    std::optional<Candidate> numeric(int j, std::span<const std::uint32_t> seg);
    std::optional<Candidate> categorical(int j, std::span<const std::uint32_t> seg);
    std::optional<Candidate> from_level_mask(int j, const std::vector<int>& observed,
                                             const std::vector<std::uint8_t>& left, double delta);

    const Dataset& ds_;
    std::span<const std::uint32_t> w_;
    int min_child_;
    bool classification_;
    int n_classes_;
    double center_ = 0.0;

    std::vector<std::int64_t> counts_;
    std::vector<std::int64_t> left_counts_;
    std::vector<double> level_weight_;
    std::vector<double> level_sum_;
    std::vector<std::int64_t> level_counts_;
};

}  // namespace canopy::detail
