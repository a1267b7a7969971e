#pragma once

#include "canopy/ensemble.hpp"

namespace canopy {

class ForestAccess {
public:
    static std::shared_ptr<const Schema>& schema(Forest& f) { return f.schema_; }
    static ForestParams& params(Forest& f) { return f.params_; }
    static std::vector<ForestTree>& trees(Forest& f) { return f.trees_; }
    static bool& oob_available(Forest& f) { return f.oob_available_; }
    static std::uint64_t& fingerprint(Forest& f) { return f.training_fingerprint_; }
    static std::size_t& training_n(Forest& f) { return f.training_n_; }
    static std::size_t training_n(const Forest& f) { return f.training_n_; }
    static std::vector<std::uint32_t>& rows(Forest& f) { return f.training_rows_; }
    static std::vector<double>& oob_sums(Forest& f) { return f.oob_sums_; }
    static std::vector<std::uint32_t>& oob_counts(Forest& f) { return f.oob_counts_; }
};

}  // namespace canopy
