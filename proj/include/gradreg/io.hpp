#pragma once
// Text formatting and parsing helpers. All numeric output uses 17
// significant digits so that every double round-trips bit-exactly through
// the text formats (datasets, checkpoints, trace CSVs).

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradreg {

inline std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline double parse_double(const std::string& tok) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || errno == ERANGE)
        throw std::runtime_error("cannot parse number: '" + tok + "'");
    return v;
}

inline long long parse_int(const std::string& tok) {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0' || errno == ERANGE)
        throw std::runtime_error("cannot parse integer: '" + tok + "'");
    return v;
}

inline std::uint64_t parse_u64(const std::string& tok) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0' || errno == ERANGE)
        throw std::runtime_error("cannot parse unsigned integer: '" + tok + "'");
    return v;
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

// Reads the next non-empty line; throws with the given context on EOF.
inline std::string read_line(std::istream& in, const char* context) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) return line;
    }
    throw std::runtime_error(std::string("unexpected end of file while reading ") + context);
}

}  // namespace gradreg
