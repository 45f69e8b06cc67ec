#pragma once

// Shared vocabulary for the capacitor optimizer: complex scalars, the
// frequency grid, error types and the warning sink.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace capopt {

using Complex = std::complex<double>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Numerical failure in a network-parameter operation at a specific frequency.
class ConversionError : public Error {
public:
    ConversionError(const std::string& what, double frequency_hz)
        : Error(what + " at " + std::to_string(frequency_hz) + " Hz"), frequency_(frequency_hz) {}
    double frequency() const noexcept { return frequency_; }

private:
    double frequency_;
};

class ModelError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Warnings
//
// Library code never prints directly. Warnings go through a process-wide
// handler which defaults to stderr and can be replaced (tests capture it).

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& warning_mutex() {
    static std::mutex m;
    return m;
}
inline WarningHandler& warning_handler() {
    static WarningHandler h = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
    return h;
}
}  // namespace detail

inline WarningHandler set_warning_handler(WarningHandler handler) {
    std::lock_guard lock(detail::warning_mutex());
    return std::exchange(detail::warning_handler(), std::move(handler));
}

inline void warn(const std::string& message) {
    std::lock_guard lock(detail::warning_mutex());
    if (detail::warning_handler()) detail::warning_handler()(message);
}

/// RAII swap of the warning handler.
class ScopedWarningHandler {
public:
    explicit ScopedWarningHandler(WarningHandler h) : previous_(set_warning_handler(std::move(h))) {}
    ~ScopedWarningHandler() { set_warning_handler(std::move(previous_)); }
    ScopedWarningHandler(const ScopedWarningHandler&) = delete;
    ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

private:
    WarningHandler previous_;
};

// ---------------------------------------------------------------------------
// FrequencyGrid

/// Strictly increasing frequencies in Hz. A single DC point (0 Hz) is allowed
/// at the front; every other point is positive.
class FrequencyGrid {
public:
    FrequencyGrid() = default;
    explicit FrequencyGrid(std::vector<double> points) : points_(std::move(points)) {
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const double f = points_[i];
            if (!std::isfinite(f) || f < 0.0) throw ModelError("frequency grid: invalid frequency " + std::to_string(f));
            if (f == 0.0 && i != 0) throw ModelError("frequency grid: DC point must come first");
            if (i > 0 && !(f > points_[i - 1]))
                throw ModelError("frequency grid: frequencies must be strictly increasing (index " +
                                 std::to_string(i) + ")");
        }
    }

    /// `per_decade` log-spaced points from f_start to f_stop inclusive.
    static FrequencyGrid log_spaced(double f_start, double f_stop, double per_decade, bool with_dc = false) {
        if (!(f_start > 0.0) || !(f_stop > f_start)) throw ModelError("log_spaced: need 0 < f_start < f_stop");
        const double decades = std::log10(f_stop / f_start);
        const auto n = static_cast<std::size_t>(std::max(1.0, std::round(decades * per_decade)));
        std::vector<double> pts;
        pts.reserve(n + 2);
        if (with_dc) pts.push_back(0.0);
        for (std::size_t k = 0; k <= n; ++k)
            pts.push_back(k == n ? f_stop : f_start * std::pow(10.0, decades * double(k) / double(n)));
        return FrequencyGrid(std::move(pts));
    }

    std::size_t size() const noexcept { return points_.size(); }
    bool empty() const noexcept { return points_.empty(); }
    double operator[](std::size_t i) const { return points_[i]; }
    double front() const { return points_.front(); }
    double back() const { return points_.back(); }
    bool has_dc() const noexcept { return !points_.empty() && points_.front() == 0.0; }
    const std::vector<double>& points() const noexcept { return points_; }
    auto begin() const noexcept { return points_.begin(); }
    auto end() const noexcept { return points_.end(); }

    friend bool operator==(const FrequencyGrid&, const FrequencyGrid&) = default;

private:
    std::vector<double> points_;
};

// ---------------------------------------------------------------------------
// Number formatting helpers

/// Shortest text that parses back to exactly `v`.
inline std::string format_exact(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

/// printf-style %.<digits>g.
inline std::string format_sig(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

/// Parses a whole token as a double; false if any character is left over.
inline bool parse_double(std::string_view token, double& out) {
    if (token.empty()) return false;
    if (token.front() == '+') token.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
    return ec == std::errc() && ptr == token.data() + token.size();
}

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        const std::size_t b = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > b) out.push_back(s.substr(b, i - b));
    }
    return out;
}

inline std::string to_lower(std::string_view s) {
    std::string r(s);
    std::transform(r.begin(), r.end(), r.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return r;
}

}  // namespace capopt
