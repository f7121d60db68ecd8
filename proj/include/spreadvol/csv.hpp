#pragma once

// Minimal CSV reading/writing used by every file schema in the toolkit.
// Numbers are written in shortest round-trip form so outputs are
// byte-stable and re-readable without loss.

#include <charconv>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "spreadvol/error.hpp"

namespace spreadvol::csv {

inline std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

/// Header-addressed view of a CSV stream. Rows are kept as raw strings and
/// parsed column by column by the schema readers.
class Table {
public:
    static Table read(std::istream& in) {
        Table t;
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            if (t.header_.empty()) {
                for (auto f : split(line)) t.header_.emplace_back(f);
                continue;
            }
            t.rows_.push_back(line);
        }
        if (t.header_.empty()) throw InvalidInputError("CSV input has no header row");
        return t;
    }

    std::optional<std::size_t> find(std::string_view column) const {
        for (std::size_t i = 0; i < header_.size(); ++i)
            if (header_[i] == column) return i;
        return std::nullopt;
    }

    /// Index of a column that must be present; the error names the column.
    std::size_t require(std::string_view column) const {
        if (auto i = find(column)) return *i;
        throw InvalidInputError("missing required column '" + std::string(column) + "'");
    }

    const std::vector<std::string>& header() const noexcept { return header_; }
    const std::vector<std::string>& rows() const noexcept { return rows_; }

private:
    std::vector<std::string> header_;
    std::vector<std::string> rows_;
};

/// Writes one comma-separated row of already formatted fields.
inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << fields[i];
    }
    out << '\n';
}

}  // namespace spreadvol::csv
