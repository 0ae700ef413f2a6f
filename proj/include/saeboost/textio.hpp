#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sae {

// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

// Strict parsers, throw sae::Error with context on malformed input.
double parse_double(std::string_view s, std::string_view context);
long parse_long(std::string_view s, std::string_view context);

std::string_view trim(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);

}  // namespace sae
