#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace affinv::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

/// Comma-separated, mandatory header row, no quoting. Blank lines are skipped.
Table read(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view line);

/// Strict decimal parse ('.' separator); throws std::invalid_argument.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

/// Shortest representation that round-trips exactly.
std::string format_double(double value);

}  // namespace affinv::csv
