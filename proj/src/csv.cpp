#include "vvc/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "vvc/errors.hpp"

namespace vvc::csv {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        cells.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw SchemaError(fmt::format("{}: missing column '{}'", source, name));
}

bool Table::has_column(std::string_view name) const {
    for (const auto& h : header) {
        if (h == name) return true;
    }
    return false;
}

double Table::number(std::size_t row, std::size_t col) const {
    const std::string& cell = rows.at(row).at(col);
    double value = 0.0;
    const auto* first = cell.data();
    const auto* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw ParseError(fmt::format("{}:{}: '{}' is not a number (column '{}')", source, line_numbers.at(row), cell,
                                     header.at(col)));
    }
    return value;
}

long long Table::integer(std::size_t row, std::size_t col) const {
    const std::string& cell = rows.at(row).at(col);
    long long value = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ParseError(fmt::format("{}:{}: '{}' is not an integer (column '{}')", source, line_numbers.at(row), cell,
                                     header.at(col)));
    }
    return value;
}

Table parse(std::istream& in, std::string source) {
    Table table;
    table.source = std::move(source);
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        auto cells = split(view);
        if (!have_header) {
            table.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw ParseError(fmt::format("{}:{}: expected {} cells, found {}", table.source, line_no,
                                         table.header.size(), cells.size()));
        }
        table.rows.push_back(std::move(cells));
        table.line_numbers.push_back(line_no);
    }
    if (!have_header) throw ParseError(fmt::format("{}: empty file", table.source));
    return table;
}

Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot open '{}'", path.string()));
    return parse(in, path.string());
}

Table read_with_header(const std::filesystem::path& path, const std::vector<std::string>& required) {
    Table table = read(path);
    if (table.header.size() < required.size()) {
        throw SchemaError(fmt::format("{}: header has {} columns, expected at least {}", table.source,
                                      table.header.size(), required.size()));
    }
    for (std::size_t i = 0; i < required.size(); ++i) {
        if (table.header[i] != required[i]) {
            throw SchemaError(fmt::format("{}: column {} is '{}', expected '{}'", table.source, i + 1, table.header[i],
                                          required[i]));
        }
    }
    return table;
}

std::vector<std::vector<double>> read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot open '{}'", path.string()));
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        std::vector<double> row;
        for (const auto& cell : split(view)) {
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec != std::errc() || ptr != cell.data() + cell.size()) {
                throw ParseError(fmt::format("{}:{}: '{}' is not a number", path.string(), line_no, cell));
            }
            row.push_back(value);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format(double value) { return fmt::format("{}", value); }

}  // namespace vvc::csv
