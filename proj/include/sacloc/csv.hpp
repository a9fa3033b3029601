#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sacloc::csv {

// Splits one comma-separated line. Surrounding whitespace is trimmed and a
// field wrapped in double quotes has the quotes removed.
std::vector<std::string_view> split_line(std::string_view line);

// Parses a double; returns false for empty or partially numeric text.
bool parse_double(std::string_view text, double& out);

// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace sacloc::csv
