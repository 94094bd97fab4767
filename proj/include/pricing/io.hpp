#pragma once

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pricing {

/// Shortest representation that round-trips a double exactly.
inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

/// Parse a comma-separated row of doubles; throws on malformed fields.
inline std::vector<double> parse_csv_row(const std::string& line) {
    std::vector<double> out;
    const char* p = line.c_str();
    while (true) {
        char* end = nullptr;
        const double v = std::strtod(p, &end);
        if (end == p)
            throw std::invalid_argument("malformed numeric field in CSV row: " + line);
        out.push_back(v);
        p = end;
        while (*p == ' ') ++p;
        if (*p == '\0' || *p == '\r') break;
        if (*p != ',')
            throw std::invalid_argument("unexpected separator in CSV row: " + line);
        ++p;
    }
    return out;
}

/// Read the next non-empty, non-comment line; returns false at EOF.
inline bool next_data_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        return true;
    }
    return false;
}

} // namespace pricing
