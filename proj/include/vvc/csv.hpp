#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace vvc::csv {

/// A parsed CSV file: header names plus string cells, with the source line
/// number of every row kept for error messages.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
    std::string source;

    /// Index of a named column; throws SchemaError when absent.
    [[nodiscard]] std::size_t column(std::string_view name) const;
    [[nodiscard]] bool has_column(std::string_view name) const;

    [[nodiscard]] double number(std::size_t row, std::size_t col) const;
    [[nodiscard]] long long integer(std::size_t row, std::size_t col) const;
};

/// Reads a comma separated file. Blank lines and lines starting with '#' are
/// skipped. Every row must have as many cells as the header.
Table read(const std::filesystem::path& path);
Table parse(std::istream& in, std::string source);

/// Reads a file and requires the header to start with `required` (extra
/// trailing columns are allowed).
Table read_with_header(const std::filesystem::path& path, const std::vector<std::string>& required);

/// Reads a headerless numeric file, one matrix row per line.
std::vector<std::vector<double>> read_matrix(const std::filesystem::path& path);

/// Round-trip safe formatting for doubles.
std::string format(double value);

}  // namespace vvc::csv
