#ifndef OMSQZ_FORMAT_HPP
#define OMSQZ_FORMAT_HPP

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <system_error>

namespace omsqz::fmt {

// Locale-independent output formatting: 9 significant digits, '.' decimal.
inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
    return std::string(buf, res.ptr);
}

// Shortest representation that parses back to the same double (config files).
inline std::string exact(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Round to the value `num` would print, for emitters that take doubles (JSON).
inline double round9(double v) {
    if (!std::isfinite(v)) return v;
    std::string s = num(v);
    double out = v;
    std::from_chars(s.data(), s.data() + s.size(), out);
    return out;
}

/// Strict locale-independent parse; returns false unless the whole token is a number.
inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

}  // namespace omsqz::fmt

#endif  // OMSQZ_FORMAT_HPP
