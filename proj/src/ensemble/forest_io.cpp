#include <fstream>
#include <istream>
#include <ostream>

#include "canopy/ensemble.hpp"
#include "canopy/errors.hpp"
#include "canopy/serialize.hpp"
#include "forest_access.hpp"

namespace canopy {
namespace {

constexpr const char* kForestMagic = "canopy-forest";
constexpr int kForestVersion = 1;

}  // namespace

void write_forest_params(TokenWriter& w, const ForestParams& p) {
    w.word("forest-params").integer(p.ntree).integer(p.mtry).integer(p.nodesize)
        .word(p.resample ? to_string(*p.resample) : "-")
        .word(p.split_mode == SplitMode::exhaustive ? "exhaustive" : "extra")
        .integer(p.random_splits).u64(p.seed).integer(static_cast<std::int64_t>(p.variables.size()));
    for (int v : p.variables) w.integer(v);
    w.endl();
}

ForestParams read_forest_params(TokenReader& r) {
    ForestParams p;
    r.expect("forest-params");
    p.ntree = static_cast<int>(r.integer());
    p.mtry = static_cast<int>(r.integer());
    p.nodesize = static_cast<int>(r.integer());
    const std::string resample = r.word();
    if (resample != "-") {
        try {
            p.resample = parse_resample_kind(resample);
        } catch (const ArgumentError&) {
            r.fail("bad resample kind '" + resample + "'");
        }
    }
    const std::string mode = r.word();
    if (mode == "exhaustive")
        p.split_mode = SplitMode::exhaustive;
    else if (mode == "extra")
        p.split_mode = SplitMode::extra_randomized;
    else
        r.fail("unknown split mode '" + mode + "'");
    p.random_splits = static_cast<int>(r.integer());
    p.seed = r.u64();
    const auto nv = r.integer();
    if (nv < 0) r.fail("negative variable count");
    for (std::int64_t i = 0; i < nv; ++i) p.variables.push_back(static_cast<int>(r.integer()));
    return p;
}

void write_forest(std::ostream& out, const Forest& f) {
    TokenWriter w(out);
    w.word(kForestMagic).integer(kForestVersion).endl();
    write_schema(w, f.schema());
    write_forest_params(w, f.params());
    const std::size_t n = ForestAccess::training_n(f);
    w.word("training").u64(f.training_fingerprint()).integer(static_cast<std::int64_t>(n))
        .integer(static_cast<std::int64_t>(f.training_rows().size()));
    for (auto r : f.training_rows()) w.integer(r);
    w.endl();
    w.word("oob").integer(f.oob_available() ? 1 : 0).integer(static_cast<std::int64_t>(f.oob_sums().size()));
    for (double s : f.oob_sums()) w.num(s);
    w.integer(static_cast<std::int64_t>(f.oob_counts().size()));
    for (auto c : f.oob_counts()) w.integer(c);
    w.endl();
    w.word("trees").integer(static_cast<std::int64_t>(f.ntree())).endl();
    for (const auto& ft : f.trees()) {
        std::size_t nonzero = 0;
        for (auto m : ft.inbag) nonzero += m != 0;
        w.word("tree").u64(ft.seed).word(to_string(ft.kind)).integer(static_cast<std::int64_t>(ft.inbag.size()))
            .integer(static_cast<std::int64_t>(nonzero));
        for (std::size_t i = 0; i < ft.inbag.size(); ++i)
            if (ft.inbag[i]) w.integer(static_cast<std::int64_t>(i)).integer(ft.inbag[i]);
        w.endl();
        write_grow_params(w, ft.tree.params());
        write_nodes(w, ft.tree);
    }
    w.word("end").endl();
}

Forest read_forest(std::istream& in) {
    TokenReader r(in);
    const std::string magic = r.word();
    if (magic != kForestMagic) r.fail("not a forest model (magic '" + magic + "')");
    const auto version = r.integer();
    if (version != kForestVersion) r.fail("unsupported forest format version " + std::to_string(version));
    Forest f;
    auto schema = std::make_shared<const Schema>(read_schema(r));
    ForestAccess::schema(f) = schema;
    ForestAccess::params(f) = read_forest_params(r);
    r.expect("training");
    ForestAccess::fingerprint(f) = r.u64();
    const auto n = r.integer();
    if (n < 0) r.fail("negative row count");
    ForestAccess::training_n(f) = static_cast<std::size_t>(n);
    const auto nrows = r.integer();
    for (std::int64_t i = 0; i < nrows; ++i) {
        const auto row = r.integer();
        if (row < 0 || row >= n) r.fail("training row out of range");
        ForestAccess::rows(f).push_back(static_cast<std::uint32_t>(row));
    }
    r.expect("oob");
    ForestAccess::oob_available(f) = r.integer() != 0;
    const auto ns = r.integer();
    for (std::int64_t i = 0; i < ns; ++i) ForestAccess::oob_sums(f).push_back(r.num());
    const auto nc = r.integer();
    for (std::int64_t i = 0; i < nc; ++i) ForestAccess::oob_counts(f).push_back(static_cast<std::uint32_t>(r.integer()));
    r.expect("trees");
    const auto q = r.integer();
    if (q < 0) r.fail("negative tree count");
    for (std::int64_t l = 0; l < q; ++l) {
        r.expect("tree");
        ForestTree ft;
        ft.seed = r.u64();
        const std::string kind = r.word();
        try {
            ft.kind = parse_resample_kind(kind);
        } catch (const ArgumentError&) {
            r.fail("bad resample kind '" + kind + "'");
        }
        const auto len = r.integer();
        if (len < 0) r.fail("negative in-bag length");
        ft.inbag.assign(static_cast<std::size_t>(len), 0);
        const auto nonzero = r.integer();
        for (std::int64_t k = 0; k < nonzero; ++k) {
            const auto i = r.integer();
            const auto m = r.integer();
            if (i < 0 || i >= len || m <= 0) r.fail("bad in-bag entry");
            ft.inbag[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(m);
        }
        GrowParams gp = read_grow_params(r);
        std::vector<Node> nodes = read_nodes(r, *schema);
        ft.tree = Tree(schema, std::move(gp), std::move(nodes));
        ForestAccess::trees(f).push_back(std::move(ft));
    }
    r.expect("end");
    return f;
}

void save_forest(const Forest& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    write_forest(out, f);
    if (!out) throw IoError("write failed for '" + path + "'");
}

Forest load_forest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model '" + path + "'");
    return read_forest(in);
}

}  // namespace canopy
