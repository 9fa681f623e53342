#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rulsurv {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

std::string_view trim(std::string_view text);

/// Splits one delimited line; fields are trimmed, quotes are not interpreted.
std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

}  // namespace rulsurv
