#pragma once

#include <string>
#include <vector>

namespace dap {

// Shortest exact decimal form (17 significant digits); round-trips any
// finite double through strtod bit-exactly.
std::string format_double(double v);

// Strict full-token parses; throw FileFormatError with `context` on failure.
double parse_double(const std::string& token, const std::string& context);
long long parse_int(const std::string& token, const std::string& context);
unsigned long long parse_uint(const std::string& token, const std::string& context);

std::vector<std::string> split_ws(const std::string& line);

} // namespace dap
