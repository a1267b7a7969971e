#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "canopy/cart.hpp"
#include "canopy/data.hpp"

namespace canopy {

/// Whitespace-separated token stream. Doubles are written in hex-float form so
/// that every value reads back bit-identically; strings are percent-escaped.
class TokenWriter {
public:
    explicit TokenWriter(std::ostream& out) : out_(out) {}
    TokenWriter& word(const std::string& w);
    TokenWriter& str(const std::string& s);
    TokenWriter& num(double x);
    TokenWriter& integer(std::int64_t v);
    TokenWriter& u64(std::uint64_t v);
    TokenWriter& endl();

private:
    std::ostream& out_;
    bool fresh_ = true;
};

class TokenReader {
public:
    explicit TokenReader(std::istream& in) : in_(in) {}
    std::string word();
    void expect(const std::string& w);
    std::string str();
    double num();
    std::int64_t integer();
    std::uint64_t u64();
    [[noreturn]] void fail(const std::string& what) const;

private:
    std::istream& in_;
    std::size_t count_ = 0;
};

void write_schema(TokenWriter& w, const Schema& s);
Schema read_schema(TokenReader& r);
void write_grow_params(TokenWriter& w, const GrowParams& p);
GrowParams read_grow_params(TokenReader& r);
/// Nodes only; the schema and params are written by the caller.
void write_nodes(TokenWriter& w, const Tree& tree);
std::vector<Node> read_nodes(TokenReader& r, const Schema& schema);

}  // namespace canopy
