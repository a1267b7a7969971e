#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "canopy/data.hpp"
#include "canopy/errors.hpp"

namespace canopy {
namespace {

using Record = std::vector<std::string>;

std::vector<Record> split_records(const std::string& text) {
    std::vector<Record> records;
    Record current;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    const std::size_t len = text.size();
    for (std::size_t i = 0; i < len; ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < len && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
            any = true;
        } else if (c == ',') {
            current.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < len && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                current.push_back(std::move(field));
                records.push_back(std::move(current));
            }
            current.clear();
            field.clear();
            any = false;
        } else {
            field.push_back(c);
            any = true;
        }
    }
    if (in_quotes) throw ParseError(records.size(), current.size() + 1, "unterminated quoted field");
    if (any || !field.empty()) {
        current.push_back(std::move(field));
        records.push_back(std::move(current));
    }
    return records;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& cell, double& out) {
    const std::string t = trim(cell);
    if (t.empty()) return false;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

bool is_blank(const std::string& cell) { return trim(cell).empty(); }


struct LevelMap {
    std::vector<std::string> labels;
    std::unordered_map<std::string, int> index;
    bool frozen = false;

    int code(const std::string& label) {
        auto it = index.find(label);
        if (it != index.end()) return it->second;
        if (frozen) return -1;
        const int c = static_cast<int>(labels.size());
        labels.push_back(label);
        index.emplace(label, c);
        return c;
    }
    void freeze(const std::vector<std::string>& known) {
        for (const auto& l : known) code(l);
        frozen = true;
    }
};

}  // namespace

SchemaDecl parse_schema(const std::string& text) {
    SchemaDecl decl;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto colon = t.rfind(':');
        if (colon == std::string::npos) throw ParseError(line_no, 1, "schema line lacks ':' separator");
        const std::string name = trim(t.substr(0, colon));
        const std::string kind = trim(t.substr(colon + 1));
        ColumnKind::Type type;
        if (kind == "numeric")
            type = ColumnKind::Type::numeric;
        else if (kind == "categorical")
            type = ColumnKind::Type::categorical;
        else
            throw ParseError(line_no, 2, "unknown column kind '" + kind + "'");
        for (const auto& [existing, _] : decl.entries)
            if (existing == name) throw SchemaError("column '" + name + "' declared twice");
        decl.entries.emplace_back(name, type);
    }
    return decl;
}

SchemaDecl read_schema_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open schema file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_schema(buf.str());
}

Dataset parse_csv(const std::string& text, const SchemaDecl& schema, const std::string& target_column,
                  const CsvOptions& options) {
    const std::vector<Record> records = split_records(text);
    if (records.empty()) throw ParseError(0, 0, "missing header row");
    const Record& header = records.front();
    std::map<std::string, std::size_t> position;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (!position.emplace(header[c], c).second) throw SchemaError("duplicate column '" + header[c] + "'");
    }
    const std::size_t n = records.size() - 1;
    for (std::size_t r = 1; r < records.size(); ++r)
        if (records[r].size() != header.size())
            throw ParseError(r, records[r].size(), "row has " + std::to_string(records[r].size()) +
                                                       " fields, header has " + std::to_string(header.size()));

    std::map<std::string, ColumnKind::Type> declared;
    for (const auto& [name, type] : schema.entries) {
        if (!position.count(name)) throw SchemaError("schema column '" + name + "' not found in file");
        declared[name] = type;
    }

    auto infer = [&](std::size_t c) {
        for (std::size_t r = 1; r < records.size(); ++r) {
            double v;
            if (!is_blank(records[r][c]) && !parse_number(records[r][c], v)) return ColumnKind::Type::categorical;
        }
        return ColumnKind::Type::numeric;
    };

    const Schema* ref = options.reference;
    std::vector<std::string> feature_names;
    if (ref) {
        feature_names = ref->names;
        for (const auto& name : feature_names)
            if (!position.count(name)) throw SchemaError("model column '" + name + "' not found in file");
    } else if (schema.entries.empty()) {
        for (const auto& h : header)
            if (h != target_column) feature_names.push_back(h);
    } else {
        for (const auto& h : header)
            if (h != target_column && declared.count(h)) feature_names.push_back(h);
    }

    std::vector<Column> columns;
    columns.reserve(feature_names.size());
    for (std::size_t f = 0; f < feature_names.size(); ++f) {
        const std::string& name = feature_names[f];
        const std::size_t c = position.at(name);
        ColumnKind::Type type;
        if (ref)
            type = ref->kinds[f].type;
        else if (declared.count(name))
            type = declared.at(name);
        else
            type = infer(c);
        if (ref && declared.count(name) && declared.at(name) != type)
            throw SchemaError("column '" + name + "' kind differs from the model");
        Column col;
        col.name = name;
        col.values.assign(n, 0.0);
        col.missing.assign(n, 0);
        LevelMap levels;
        if (ref && type == ColumnKind::Type::categorical) levels.freeze(ref->levels[f]);
        for (std::size_t r = 0; r < n; ++r) {
            const std::string& cell = records[r + 1][c];
            if (cell.empty() || is_blank(cell)) {
                col.missing[r] = 1;
                continue;
            }
            if (type == ColumnKind::Type::numeric) {
                if (!parse_number(cell, col.values[r]))
                    throw ParseError(r + 1, c + 1, "cannot parse '" + cell + "' as a number in column '" + name + "'");
            } else {
                const int code = levels.code(cell);
                if (code < 0)
                    col.missing[r] = 1;
                else
                    col.values[r] = code;
            }
        }
        if (type == ColumnKind::Type::categorical) {
            col.levels = levels.labels;
            col.kind = ColumnKind::categorical(std::max<int>(1, static_cast<int>(col.levels.size())));
            if (col.levels.empty()) col.levels.push_back("");
        } else {
            col.kind = ColumnKind::numeric();
        }
        columns.push_back(std::move(col));
    }

    Target target;
    target.name = target_column;
    const auto tpos = position.find(target_column);
    if (tpos == position.end()) {
        if (!options.target_optional) throw SchemaError("target column '" + target_column + "' not found in file");
        target.task = ref ? ref->task : Task::regression;
        target.classes = ref ? ref->classes : std::vector<std::string>{};
        if (target.task == Task::regression)
            target.y.assign(n, 0.0);
        else
            target.labels.assign(n, 0);
        if (target.task == Task::classification && target.classes.empty()) target.classes.push_back("");
        return Dataset(std::move(columns), std::move(target));
    }
    const std::size_t tc = tpos->second;
    ColumnKind::Type ttype;
    if (ref)
        ttype = ref->task == Task::classification ? ColumnKind::Type::categorical : ColumnKind::Type::numeric;
    else if (declared.count(target_column))
        ttype = declared.at(target_column);
    else
        ttype = infer(tc);
    target.task = ttype == ColumnKind::Type::categorical ? Task::classification : Task::regression;
    LevelMap classes;
    if (ref && target.task == Task::classification) classes.freeze(ref->classes);
    for (std::size_t r = 0; r < n; ++r) {
        const std::string& cell = records[r + 1][tc];
        if (is_blank(cell)) throw TargetMissingError("target missing at row " + std::to_string(r + 1));
        if (target.task == Task::regression) {
            double v;
            if (!parse_number(cell, v))
                throw ParseError(r + 1, tc + 1, "cannot parse target '" + cell + "' as a number");
            target.y.push_back(v);
        } else {
            const int code = classes.code(cell);
            if (code < 0) throw SchemaError("class '" + cell + "' unknown to the model");
            target.labels.push_back(code);
        }
    }
    target.classes = classes.labels;
    return Dataset(std::move(columns), std::move(target));
}

Dataset load_csv(const std::string& path, const SchemaDecl& schema, const std::string& target_column,
                 const CsvOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open data file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), schema, target_column, options);
}

std::string csv_field(const std::string& s) {
    const bool needs = s.find_first_of(",\"\r\n") != std::string::npos ||
                       (!s.empty() && (s.front() == ' ' || s.back() == ' '));
    if (!needs) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string format_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

std::string to_csv(const Dataset& ds) {
    std::string out;
    for (std::size_t j = 0; j < ds.p(); ++j) {
        out += csv_field(ds.column(j).name);
        out += ',';
    }
    out += csv_field(ds.target().name);
    out += '\n';
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t j = 0; j < ds.p(); ++j) {
            const Column& c = ds.column(j);
            if (!c.missing[i]) {
                if (c.kind.is_categorical())
                    out += csv_field(c.levels[static_cast<std::size_t>(c.values[i])]);
                else
                    out += format_double(c.values[i]);
            }
            out += ',';
        }
        if (ds.task() == Task::regression)
            out += format_double(ds.y(i));
        else
            out += csv_field(ds.target().classes[static_cast<std::size_t>(ds.label(i))]);
        out += '\n';
    }
    return out;
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << to_csv(ds);
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace canopy
