#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stolen {

// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

// Accepts decimal and scientific notation, with an optional leading '+'.
std::optional<double> parse_double(std::string_view text);

std::vector<std::string_view> split_whitespace(std::string_view line);

// Splits one CSV record on commas. Fields in this project never contain
// quotes or commas, so no quoting is handled.
std::vector<std::string> split_csv(std::string_view line);

}  // namespace stolen
