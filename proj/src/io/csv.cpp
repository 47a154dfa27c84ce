#include "snella/io/csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>
#include <system_error>

namespace snella {

void Table::validate() const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != header.size()) {
            throw std::invalid_argument("row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                                        " fields, header has " + std::to_string(header.size()));
        }
    }
}

std::size_t Table::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::out_of_range("no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

double Table::number(std::size_t row, const std::string& name) const {
    const Cell& c = rows.at(row).at(column(name));
    if (const double* v = std::get_if<double>(&c)) return *v;
    throw std::invalid_argument("column '" + name + "' holds text in row " + std::to_string(row));
}

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos && !s.empty()) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

Cell interpret(const std::string& field, bool quoted) {
    if (quoted || field.empty()) return field;
    double v = 0.0;
    const char* end = field.data() + field.size();
    const auto res = std::from_chars(field.data(), end, v);
    if (res.ec == std::errc() && res.ptr == end) return v;
    return field;
}

}  // namespace

void write_csv(std::ostream& out, const Table& table) {
    table.validate();
    auto line = [&](const auto& fields, auto&& render) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out << ',';
            out << render(fields[i]);
        }
        out << '\n';
    };
    line(table.header, [](const std::string& s) { return quote(s); });
    for (const auto& row : table.rows) {
        line(row, [](const Cell& c) {
            if (const double* v = std::get_if<double>(&c)) return format_number(*v);
            // text that would read back as a number is quoted to keep its type
            const auto& s = std::get<std::string>(c);
            const bool numeric = std::holds_alternative<double>(interpret(s, false));
            return numeric ? "\"" + s + "\"" : quote(s);
        });
    }
}

std::string to_csv(const Table& table) {
    std::ostringstream out;
    write_csv(out, table);
    return out.str();
}

void write_csv(const Table& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CsvError("cannot write " + path.string());
    write_csv(out, table);
}

Table parse_csv(const std::string& text) {
    std::vector<std::vector<std::pair<std::string, bool>>> records;
    std::vector<std::pair<std::string, bool>> record;
    std::string field;
    bool quoted = false, in_quotes = false, any = false;
    auto end_field = [&] {
        record.emplace_back(std::move(field), quoted);
        field.clear();
        quoted = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                in_quotes = false;
            } else {
                field += c;
            }
            continue;
        }
        any = true;
        if (c == '"') {
            if (!field.empty()) throw CsvError("stray quote in unquoted field");
            in_quotes = quoted = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            end_field();
            records.push_back(std::move(record));
            record.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (in_quotes) throw CsvError("unterminated quoted field");
    if (any) {
        end_field();
        records.push_back(std::move(record));
    }
    if (records.empty()) throw CsvError("missing header row");

    Table t;
    for (auto& [s, q] : records.front()) t.header.push_back(s);
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.header.size()) {
            throw CsvError("line " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                           " fields, expected " + std::to_string(t.header.size()));
        }
        std::vector<Cell> row;
        for (auto& [s, q] : records[r]) row.push_back(interpret(s, q));
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CsvError("cannot read " + path.string());
    return parse_csv(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

}  // namespace snella
