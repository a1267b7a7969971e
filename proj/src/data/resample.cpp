#include <numeric>

#include "canopy/data.hpp"
#include "canopy/errors.hpp"
#include "canopy/random.hpp"

namespace canopy {

std::size_t ResamplePlan::sample_size() const {
    return std::accumulate(multiplicities.begin(), multiplicities.end(), std::size_t{0});
}

std::string to_string(ResampleKind kind) {
    switch (kind.type) {
        case ResampleKind::Type::bootstrap: return kind.size ? "bootstrap:" + std::to_string(kind.size) : "bootstrap";
        case ResampleKind::Type::identity: return "identity";
        case ResampleKind::Type::subsample: return "subsample:" + std::to_string(kind.size);
        case ResampleKind::Type::blb: return "blb:" + std::to_string(kind.size);
    }
    return "bootstrap";
}

ResampleKind parse_resample_kind(const std::string& text) {
    if (text == "bootstrap") return ResampleKind::bootstrap();
    if (text == "identity") return ResampleKind::identity();
    const auto colon = text.find(':');
    if (colon != std::string::npos) {
        const std::string head = text.substr(0, colon);
        const std::string tail = text.substr(colon + 1);
        std::size_t used = 0;
        unsigned long long size = 0;
        try {
            size = std::stoull(tail, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == tail.size() && used > 0) {
            if (head == "bootstrap") return ResampleKind::bootstrap(size);
            if (head == "subsample") return ResampleKind::subsample(size);
            if (head == "blb") return ResampleKind::blb(size);
        }
    }
    throw ArgumentError("unknown resample kind '" + text + "'");
}

ResamplePlan make_plan(ResampleKind kind, std::vector<std::uint32_t> multiplicities) {
    ResamplePlan plan{kind, std::move(multiplicities), {}};
    for (std::uint32_t i = 0; i < plan.multiplicities.size(); ++i)
        if (plan.multiplicities[i] == 0) plan.oob_rows.push_back(i);
    return plan;
}

ResamplePlan draw_resample(std::size_t n, ResampleKind kind, std::uint64_t seed) {
    if (n == 0) throw ArgumentError("cannot resample an empty dataset");
    std::vector<std::uint32_t> mult(n, 0);
    Rng rng(seed);
    switch (kind.type) {
        case ResampleKind::Type::identity:
            mult.assign(n, 1);
            break;
        case ResampleKind::Type::bootstrap:
            for (std::size_t t = 0, draws = kind.size ? kind.size : n; t < draws; ++t) ++mult[rng.below(n)];
            break;
        case ResampleKind::Type::subsample: {
            if (kind.size == 0 || kind.size >= n) throw ArgumentError("subsample size must satisfy 0 < k < n");
            std::vector<std::uint32_t> idx(n);
            std::iota(idx.begin(), idx.end(), 0u);
            rng.partial_shuffle(std::span<std::uint32_t>(idx), kind.size);
            for (std::size_t t = 0; t < kind.size; ++t) mult[idx[t]] = 1;
            break;
        }
        case ResampleKind::Type::blb: {
            if (kind.size == 0 || kind.size > n) throw ArgumentError("blb size must satisfy 0 < m <= n");
            std::vector<std::uint32_t> idx(n);
            std::iota(idx.begin(), idx.end(), 0u);
            rng.partial_shuffle(std::span<std::uint32_t>(idx), kind.size);
            for (std::size_t t = 0; t < n; ++t) ++mult[idx[rng.below(kind.size)]];
            break;
        }
    }
    return make_plan(kind, std::move(mult));
}

}  // namespace canopy
