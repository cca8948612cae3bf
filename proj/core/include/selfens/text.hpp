#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace selfens {

// Small text helpers shared by the config, layer and CSV parsers. All parse
// functions throw ConfigError naming the offending text.

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

/// Shortest decimal form that parses back to the same double.
std::string format_real(double value);

double parse_real(std::string_view text);
std::size_t parse_size(std::string_view text);
std::uint64_t parse_u64(std::string_view text);
bool parse_bool(std::string_view text);

}  // namespace selfens
