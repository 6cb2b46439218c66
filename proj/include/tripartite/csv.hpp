#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tripartite::csv {

/// Splits one comma-delimited line. Cells are trimmed; quoting is not
/// supported because no field in the formats here contains a comma.
std::vector<std::string> split_line(std::string_view line);

std::string join(const std::vector<std::string>& cells);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_integer(std::string_view text);

std::string_view trim(std::string_view s);

}  // namespace tripartite::csv
