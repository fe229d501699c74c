// Copyright 2026 The contmeas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Text output: shortest round-trip number formatting, CSV tables with a
// comment header, and a small CSV reader for files written by this library.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "contmeas/errors.hpp"

namespace contmeas {

inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    std::string tmp(s);
    char *end = nullptr;
    double v = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || end != tmp.c_str() + tmp.size()) {
        throw Error(ErrorKind::io, "cannot parse number '" + tmp + "'");
    }
    return v;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    static constexpr char kDigits[] = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = kDigits[v & 0xf];
        v >>= 4;
    }
    return std::string(buf, 16);
}

inline std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open " + path.string());
    }
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path &path, std::string_view contents) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::io, "cannot write " + path.string());
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
        throw Error(ErrorKind::io, "write failed for " + path.string());
    }
}

/// CSV builder. Header lines are emitted as "# key: value".
class CsvWriter {
public:
    void comment(std::string_view key, std::string_view value) {
        out_ += "# ";
        out_ += key;
        out_ += ": ";
        out_ += value;
        out_ += '\n';
    }

    void columns(const std::vector<std::string> &names) { row_strings(names); }

    void row(const std::vector<double> &values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out_ += ',';
            out_ += format_double(values[i]);
        }
        out_ += '\n';
    }

    /// Leading integer columns followed by doubles.
    void row(std::initializer_list<std::uint64_t> ints, const std::vector<double> &values) {
        bool first = true;
        for (auto v : ints) {
            if (!first) out_ += ',';
            out_ += std::to_string(v);
            first = false;
        }
        for (double v : values) {
            if (!first) out_ += ',';
            out_ += format_double(v);
            first = false;
        }
        out_ += '\n';
    }

    const std::string &str() const noexcept { return out_; }

private:
    void row_strings(const std::vector<std::string> &names) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (i) out_ += ',';
            out_ += names[i];
        }
        out_ += '\n';
    }

    std::string out_;
};

struct CsvTable {
    std::vector<std::pair<std::string, std::string>> comments;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i] == name) return i;
        }
        throw Error(ErrorKind::io, "CSV has no column '" + std::string(name) + "'");
    }

    bool has_column(std::string_view name) const {
        for (const auto &c : columns) {
            if (c == name) return true;
        }
        return false;
    }
};

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;) {
        std::size_t pos = line.find(sep, start);
        parts.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

inline CsvTable parse_csv(std::string_view text) {
    CsvTable table;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line.front() == '#') {
            std::string_view body = line.substr(1);
            while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
            std::size_t colon = body.find(": ");
            if (colon == std::string_view::npos) {
                table.comments.emplace_back(std::string(body), "");
            } else {
                table.comments.emplace_back(std::string(body.substr(0, colon)), std::string(body.substr(colon + 2)));
            }
            continue;
        }
        auto fields = split(line, ',');
        if (table.columns.empty()) {
            for (auto f : fields) table.columns.emplace_back(f);
            continue;
        }
        if (fields.size() != table.columns.size()) {
            throw Error(ErrorKind::io, "CSV row has " + std::to_string(fields.size()) + " fields, expected " +
                                           std::to_string(table.columns.size()));
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (auto f : fields) row.push_back(parse_double(f));
        table.rows.push_back(std::move(row));
    }
    if (table.columns.empty()) {
        throw Error(ErrorKind::io, "CSV has no column header");
    }
    return table;
}

}  // namespace contmeas
