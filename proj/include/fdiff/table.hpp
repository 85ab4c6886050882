#pragma once

#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fdiff/errors.hpp"
#include "fdiff/trajectory.hpp"

namespace fdiff {

/// Column-oriented numeric CSV: one header line, '#' lines are comments.
struct Table {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;

    Table() = default;
    explicit Table(std::vector<std::string> header) : names(std::move(header)), columns(names.size()) {}

    std::size_t rows() const noexcept { return columns.empty() ? 0 : columns.front().size(); }

    void add_row(const std::vector<double>& row) {
        if (row.size() != names.size()) throw ValidationError("row width does not match the header");
        for (std::size_t c = 0; c < row.size(); ++c) columns[c].push_back(row[c]);
    }

    /// Index of the named column, or npos.
    std::size_t find(const std::string& name) const noexcept {
        for (std::size_t c = 0; c < names.size(); ++c) {
            if (names[c] == name) return c;
        }
        return static_cast<std::size_t>(-1);
    }

    const std::vector<double>& column(const std::string& name) const {
        const std::size_t c = find(name);
        if (c >= names.size()) throw IoError("missing column '" + name + "'");
        return columns[c];
    }
};

inline std::string format_table(const Table& t) {
    std::string out;
    for (std::size_t c = 0; c < t.names.size(); ++c) {
        if (c) out += ',';
        out += t.names[c];
    }
    out += '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            if (c) out += ',';
            detail::append_real(out, t.columns[c][r]);
        }
        out += '\n';
    }
    return out;
}

inline Table parse_table(const std::string& text) {
    Table t;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto fields = detail::split_commas(line);
        if (!have_header) {
            for (auto f : fields) {
                if (f.empty()) throw IoError("line " + std::to_string(lineno) + ": empty column name");
                t.names.emplace_back(f);
            }
            t.columns.resize(t.names.size());
            have_header = true;
            continue;
        }
        if (fields.size() != t.names.size()) {
            throw IoError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.names.size()) +
                          " columns, got " + std::to_string(fields.size()));
        }
        for (std::size_t c = 0; c < fields.size(); ++c) t.columns[c].push_back(detail::read_real(fields[c], lineno));
    }
    if (!have_header) throw IoError("missing header line");
    return t;
}

inline std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline Table read_table(const std::string& path) { return parse_table(read_text(path)); }

inline void write_table(const std::string& path, const Table& t) { write_text(path, format_table(t)); }

}  // namespace fdiff
