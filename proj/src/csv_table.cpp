#include "climreg/csv_table.hpp"

#include <charconv>
#include <cmath>
#include <istream>

#include "climreg/errors.hpp"

namespace climreg {

namespace {

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
        out.emplace_back(field);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

std::optional<std::size_t> CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    return std::nullopt;
}

std::size_t CsvTable::require_column(std::string_view name) const {
    const auto c = column(name);
    if (!c) fail(Errc::MissingField, "missing column '" + std::string(name) + "'");
    return *c;
}

CsvTable read_csv_table(std::istream& in) {
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view text = line;
        if (line_no == 1 && text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
        if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
        if (text.empty()) continue;
        auto fields = split(text);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size()) {
            fail(Errc::MalformedRow, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(table.header.size()) + " columns, found " +
                                         std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
        table.lines.push_back(line_no);
    }
    if (!have_header) fail(Errc::EmptyInput, "empty input, expected a header line");
    return table;
}

double parse_double_field(std::string_view text, std::size_t line, std::string_view column) {
    double value = 0.0;
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (text.empty() || ec != std::errc() || ptr != end) {
        fail(Errc::MalformedRow, "line " + std::to_string(line) + ": unparseable " + std::string(column) +
                                     " '" + std::string(text) + "'");
    }
    if (!std::isfinite(value)) {
        fail(Errc::NonFiniteValue, "line " + std::to_string(line) + ": non-finite " + std::string(column));
    }
    return value;
}

long long parse_int_field(std::string_view text, std::size_t line, std::string_view column) {
    long long value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (text.empty() || ec != std::errc() || ptr != end) {
        fail(Errc::MalformedRow, "line " + std::to_string(line) + ": unparseable " + std::string(column) +
                                     " '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace climreg
