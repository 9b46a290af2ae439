#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nfloc {

/// Shortest round-trip decimal form; "inf", "-inf" and "nan" for non-finite values.
std::string format_double(double v);

/// Parses what format_double produces.
double parse_double(std::string_view s);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace nfloc
