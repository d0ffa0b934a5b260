#include "dap/text_format.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "dap/errors.hpp"

namespace dap {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& token, const std::string& context) {
    const char* begin = token.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + token.size() || token.empty()) {
        throw FileFormatError(context + ": expected a number, got '" + token + "'");
    }
    return v;
}

long long parse_int(const std::string& token, const std::string& context) {
    const char* begin = token.c_str();
    char* end = nullptr;
    long long v = std::strtoll(begin, &end, 10);
    if (end != begin + token.size() || token.empty()) {
        throw FileFormatError(context + ": expected an integer, got '" + token + "'");
    }
    return v;
}

unsigned long long parse_uint(const std::string& token, const std::string& context) {
    const char* begin = token.c_str();
    char* end = nullptr;
    unsigned long long v = std::strtoull(begin, &end, 10);
    if (end != begin + token.size() || token.empty() || token[0] == '-') {
        throw FileFormatError(context + ": expected an unsigned integer, got '" + token + "'");
    }
    return v;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

} // namespace dap
