#pragma once

// Small strict text helpers shared by the file formats and the config parser.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tscac {

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

// Whole-string parses; throw std::invalid_argument on trailing garbage.
double parse_double(std::string_view s);
std::size_t parse_size(std::string_view s);
std::uint64_t parse_u64(std::string_view s);
std::vector<double> parse_doubles(std::string_view s, char sep);

// Shortest text that reads back to the same double.
std::string format_double(double v);
std::string join_doubles(std::span<const double> v, char sep);

}  // namespace tscac
