#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace climreg {

// Minimal comma-separated table: no quoting, LF or CRLF line endings.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines;  // 1-based source line of each row

    std::optional<std::size_t> column(std::string_view name) const;
    // Column index or throws MissingField.
    std::size_t require_column(std::string_view name) const;
};

CsvTable read_csv_table(std::istream& in);

double parse_double_field(std::string_view text, std::size_t line, std::string_view column);
long long parse_int_field(std::string_view text, std::size_t line, std::string_view column);

}  // namespace climreg
