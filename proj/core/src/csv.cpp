#include "csv.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

#include "affinv/error.hpp"

namespace affinv::csv {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        auto field = trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        out.emplace_back(field);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open table '" + path.string() + "'");
    Table table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        if (!have_header) {
            table.header = split(line);
            have_header = true;
            continue;
        }
        table.rows.push_back(split(line));
        table.line_numbers.push_back(line_no);
    }
    if (!have_header) throw IngestError("table '" + path.string() + "' has no header row");
    return table;
}

double parse_double(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw std::invalid_argument("not a number: '" + std::string(text) + "'");
    return value;
}

long long parse_int(std::string_view text) {
    text = trim(text);
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw std::invalid_argument("not an integer: '" + std::string(text) + "'");
    return value;
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw std::runtime_error("to_chars failed");
    return std::string(buf, ptr);
}

}  // namespace affinv::csv
