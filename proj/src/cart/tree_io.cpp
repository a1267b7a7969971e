#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>

#include "canopy/cart.hpp"
#include "canopy/errors.hpp"
#include "canopy/serialize.hpp"

namespace canopy {
namespace {

constexpr const char* kTreeMagic = "canopy-tree";
constexpr int kTreeVersion = 1;

int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

void write_split(TokenWriter& w, const Split& s) {
    w.integer(s.variable);
    if (s.categorical) {
        std::string levels;
        for (auto v : s.levels) levels.push_back(static_cast<char>('0' + v));
        w.word("C").word(levels.empty() ? "-" : levels);
    } else {
        w.word("N").num(s.threshold).integer(s.reversed ? 1 : 0);
    }
    w.num(s.decrease);
}

Split read_split(TokenReader& r, const Schema& schema) {
    Split s;
    s.variable = static_cast<int>(r.integer());
    if (s.variable < 0 || static_cast<std::size_t>(s.variable) >= schema.p()) r.fail("split variable out of range");
    const std::string kind = r.word();
    if (kind == "C") {
        s.categorical = true;
        const std::string levels = r.word();
        if (levels != "-")
            for (char c : levels) {
                if (c < '0' || c > '2') r.fail("bad level code");
                s.levels.push_back(static_cast<std::uint8_t>(c - '0'));
            }
        if (!schema.kinds[static_cast<std::size_t>(s.variable)].is_categorical()) r.fail("categorical split on numeric column");
    } else if (kind == "N") {
        s.threshold = r.num();
        s.reversed = r.integer() != 0;
    } else {
        r.fail("unknown split kind '" + kind + "'");
    }
    s.decrease = r.num();
    return s;
}

}  // namespace

TokenWriter& TokenWriter::word(const std::string& w) {
    if (!fresh_) out_ << ' ';
    out_ << w;
    fresh_ = false;
    return *this;
}

TokenWriter& TokenWriter::str(const std::string& s) {
    if (s.empty()) return word("%");
    std::string enc;
    for (unsigned char c : s) {
        if (c <= 0x20 || c == '%' || c >= 0x7f) {
            char buf[4];
            std::snprintf(buf, sizeof buf, "%%%02X", c);
            enc += buf;
        } else {
            enc.push_back(static_cast<char>(c));
        }
    }
    return word(enc);
}

TokenWriter& TokenWriter::num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", x);
    return word(buf);
}

TokenWriter& TokenWriter::integer(std::int64_t v) { return word(std::to_string(v)); }
TokenWriter& TokenWriter::u64(std::uint64_t v) { return word(std::to_string(v)); }

TokenWriter& TokenWriter::endl() {
    out_ << '\n';
    fresh_ = true;
    return *this;
}

void TokenReader::fail(const std::string& what) const {
    throw ParseError(0, count_, "model file: " + what + " (token " + std::to_string(count_) + ")");
}

std::string TokenReader::word() {
    std::string w;
    if (!(in_ >> w)) fail("unexpected end of input");
    ++count_;
    return w;
}

void TokenReader::expect(const std::string& w) {
    const std::string got = word();
    if (got != w) fail("expected '" + w + "', found '" + got + "'");
}

std::string TokenReader::str() {
    const std::string w = word();
    if (w == "%") return {};
    std::string out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] == '%') {
            if (i + 2 >= w.size()) fail("truncated escape");
            const int hi = hex_digit(w[i + 1]), lo = hex_digit(w[i + 2]);
            if (hi < 0 || lo < 0) fail("bad escape");
            out.push_back(static_cast<char>(hi * 16 + lo));
            i += 2;
        } else {
            out.push_back(w[i]);
        }
    }
    return out;
}

double TokenReader::num() {
    const std::string w = word();
    char* end = nullptr;
    errno = 0;
    const double x = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size() || w.empty()) fail("bad number '" + w + "'");
    return x;
}

std::int64_t TokenReader::integer() {
    const std::string w = word();
    char* end = nullptr;
    const long long v = std::strtoll(w.c_str(), &end, 10);
    if (end != w.c_str() + w.size() || w.empty()) fail("bad integer '" + w + "'");
    return v;
}

std::uint64_t TokenReader::u64() {
    const std::string w = word();
    char* end = nullptr;
    const unsigned long long v = std::strtoull(w.c_str(), &end, 10);
    if (end != w.c_str() + w.size() || w.empty() || w.front() == '-') fail("bad unsigned integer '" + w + "'");
    return v;
}

void write_schema(TokenWriter& w, const Schema& s) {
    w.word("schema").integer(static_cast<std::int64_t>(s.p()))
        .word(s.task == Task::classification ? "classification" : "regression")
        .str(s.target_name)
        .integer(s.n_classes());
    for (const auto& c : s.classes) w.str(c);
    w.endl();
    for (std::size_t j = 0; j < s.p(); ++j) {
        w.word("column").str(s.names[j]);
        if (s.kinds[j].is_categorical()) {
            w.word("categorical").integer(s.kinds[j].cardinality);
            for (const auto& l : s.levels[j]) w.str(l);
        } else {
            w.word("numeric");
        }
        w.endl();
    }
}

Schema read_schema(TokenReader& r) {
    Schema s;
    r.expect("schema");
    const auto p = r.integer();
    if (p < 0) r.fail("negative column count");
    const std::string task = r.word();
    if (task == "classification")
        s.task = Task::classification;
    else if (task == "regression")
        s.task = Task::regression;
    else
        r.fail("unknown task '" + task + "'");
    s.target_name = r.str();
    const auto L = r.integer();
    if (L < 0) r.fail("negative class count");
    for (std::int64_t c = 0; c < L; ++c) s.classes.push_back(r.str());
    for (std::int64_t j = 0; j < p; ++j) {
        r.expect("column");
        s.names.push_back(r.str());
        const std::string kind = r.word();
        if (kind == "categorical") {
            const auto K = r.integer();
            if (K < 1) r.fail("bad cardinality");
            s.kinds.push_back(ColumnKind::categorical(static_cast<int>(K)));
            std::vector<std::string> levels;
            for (std::int64_t k = 0; k < K; ++k) levels.push_back(r.str());
            s.levels.push_back(std::move(levels));
        } else if (kind == "numeric") {
            s.kinds.push_back(ColumnKind::numeric());
            s.levels.emplace_back();
        } else {
            r.fail("unknown column kind '" + kind + "'");
        }
    }
    return s;
}

void write_grow_params(TokenWriter& w, const GrowParams& p) {
    w.word("grow").integer(p.min_node_size).integer(p.min_child_size).integer(p.mtry)
        .word(p.split_mode == SplitMode::exhaustive ? "exhaustive" : "extra")
        .integer(p.random_splits).integer(p.max_surrogates).integer(p.competing ? 1 : 0)
        .integer(static_cast<std::int64_t>(p.variables.size()));
    for (int v : p.variables) w.integer(v);
    w.endl();
}

GrowParams read_grow_params(TokenReader& r) {
    GrowParams p;
    r.expect("grow");
    p.min_node_size = static_cast<int>(r.integer());
    p.min_child_size = static_cast<int>(r.integer());
    p.mtry = static_cast<int>(r.integer());
    const std::string mode = r.word();
    if (mode == "exhaustive")
        p.split_mode = SplitMode::exhaustive;
    else if (mode == "extra")
        p.split_mode = SplitMode::extra_randomized;
    else
        r.fail("unknown split mode '" + mode + "'");
    p.random_splits = static_cast<int>(r.integer());
    p.max_surrogates = static_cast<int>(r.integer());
    p.competing = r.integer() != 0;
    const auto nv = r.integer();
    if (nv < 0) r.fail("negative variable count");
    for (std::int64_t i = 0; i < nv; ++i) p.variables.push_back(static_cast<int>(r.integer()));
    return p;
}

void write_nodes(TokenWriter& w, const Tree& tree) {
    w.word("nodes").integer(static_cast<std::int64_t>(tree.size())).endl();
    for (std::size_t t = 0; t < tree.size(); ++t) {
        const Node& nd = tree.node(t);
        w.word("node").integer(static_cast<std::int64_t>(t)).integer(nd.left).integer(nd.right)
            .integer(nd.majority_left ? 1 : 0).num(nd.weight).num(nd.value).num(nd.impurity).num(nd.risk)
            .num(nd.error).integer(nd.depth).integer(static_cast<std::int64_t>(nd.distribution.size()));
        for (double d : nd.distribution) w.num(d);
        w.endl();
        if (nd.is_leaf()) continue;
        w.word("split");
        write_split(w, nd.split);
        w.endl();
        w.word("competing").integer(static_cast<std::int64_t>(nd.competing.size()));
        for (const auto& s : nd.competing) write_split(w, s);
        w.endl();
        w.word("surrogates").integer(static_cast<std::int64_t>(nd.surrogates.size()));
        for (const auto& s : nd.surrogates) {
            write_split(w, s.split);
            w.num(s.agreement).num(s.baseline);
        }
        w.endl();
    }
}

std::vector<Node> read_nodes(TokenReader& r, const Schema& schema) {
    r.expect("nodes");
    const auto count = r.integer();
    if (count < 1) r.fail("tree without nodes");
    std::vector<Node> nodes(static_cast<std::size_t>(count));
    for (std::int64_t t = 0; t < count; ++t) {
        Node& nd = nodes[static_cast<std::size_t>(t)];
        r.expect("node");
        if (r.integer() != t) r.fail("node ids out of order");
        nd.left = static_cast<int>(r.integer());
        nd.right = static_cast<int>(r.integer());
        nd.majority_left = r.integer() != 0;
        nd.weight = r.num();
        nd.value = r.num();
        nd.impurity = r.num();
        nd.risk = r.num();
        nd.error = r.num();
        nd.depth = static_cast<int>(r.integer());
        const auto nd_count = r.integer();
        if (nd_count < 0) r.fail("negative distribution size");
        for (std::int64_t c = 0; c < nd_count; ++c) nd.distribution.push_back(r.num());
        if ((nd.left < 0) != (nd.right < 0)) r.fail("node with a single child");
        if (nd.left >= count || nd.right >= count || (nd.left >= 0 && (nd.left <= t || nd.right <= t)))
            r.fail("child index out of range");
        if (nd.left < 0) continue;
        r.expect("split");
        nd.split = read_split(r, schema);
        r.expect("competing");
        const auto nc = r.integer();
        for (std::int64_t i = 0; i < nc; ++i) nd.competing.push_back(read_split(r, schema));
        r.expect("surrogates");
        const auto ns = r.integer();
        for (std::int64_t i = 0; i < ns; ++i) {
            Surrogate s;
            s.split = read_split(r, schema);
            s.agreement = r.num();
            s.baseline = r.num();
            nd.surrogates.push_back(std::move(s));
        }
    }
    return nodes;
}

void write_tree(std::ostream& out, const Tree& tree) {
    TokenWriter w(out);
    w.word(kTreeMagic).integer(kTreeVersion).endl();
    write_schema(w, tree.schema());
    write_grow_params(w, tree.params());
    write_nodes(w, tree);
    w.word("end").endl();
}

Tree read_tree(std::istream& in) {
    TokenReader r(in);
    const std::string magic = r.word();
    if (magic != kTreeMagic) r.fail("not a tree model (magic '" + magic + "')");
    const auto version = r.integer();
    if (version != kTreeVersion) r.fail("unsupported tree format version " + std::to_string(version));
    auto schema = std::make_shared<const Schema>(read_schema(r));
    GrowParams params = read_grow_params(r);
    std::vector<Node> nodes = read_nodes(r, *schema);
    r.expect("end");
    return Tree(std::move(schema), std::move(params), std::move(nodes));
}

void save_tree(const Tree& tree, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    write_tree(out, tree);
    if (!out) throw IoError("write failed for '" + path + "'");
}

Tree load_tree(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model '" + path + "'");
    return read_tree(in);
}

}  // namespace canopy
