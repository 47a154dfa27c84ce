#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace snella {

/// A field is either a number or text. Numbers are written in the shortest form that
/// reads back to the same double; any field that parses completely as a number is read
/// back as one.
using Cell = std::variant<double, std::string>;

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<Cell>> rows;

    /// Throws std::invalid_argument when a row's width differs from the header's.
    void validate() const;
    std::size_t column(const std::string& name) const;
    double number(std::size_t row, const std::string& name) const;

    bool operator==(const Table&) const = default;
};

class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string format_number(double v);

void write_csv(std::ostream& out, const Table& table);
void write_csv(const Table& table, const std::filesystem::path& path);
std::string to_csv(const Table& table);

Table parse_csv(const std::string& text);
Table read_csv(const std::filesystem::path& path);

}  // namespace snella
