#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbn {

// ---------------------------------------------------------------------------
// Errors. Every failure in the library is reported through one of these, with
// a message that names the offending entity (triangle index, file:line, ...).
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParameterError : Error { using Error::Error; };
struct GeometryError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct SolverError : Error { using Error::Error; };
struct UsageError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Small fixed-size linear algebra.
// ---------------------------------------------------------------------------

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2() = default;
    constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    // +90 degree rotation; maps an outward normal to the edge tangent.
    Vec2 rot90() const { return {-y, x}; }
    double operator[](int i) const { return i == 0 ? x : y; }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

struct Mat2 {
    // row-major: a b / c d
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    double det() const { return a * d - b * c; }
    double trace() const { return a + d; }
    Mat2 inverse() const {
        const double dt = det();
        if (dt == 0.0) throw ParameterError("Mat2::inverse: singular matrix");
        return {d / dt, -b / dt, -c / dt, a / dt};
    }
    Mat2 transpose() const { return {a, c, b, d}; }
    Vec2 apply(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
    bool symmetric_positive_definite(double tol = 0.0) const {
        return std::abs(b - c) <= tol * (std::abs(b) + std::abs(c)) + 1e-300 &&
               a > 0.0 && det() > 0.0;
    }
};

// ---------------------------------------------------------------------------
// Formatting helpers. All numeric output goes through these so CSV and mesh
// files are locale-independent and round-trip exactly.
// ---------------------------------------------------------------------------

inline std::string fmt_g17(double v) {
    std::array<char, 40> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                             std::chars_format::general, 17);
    return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view sv, bool& ok) {
    double v = 0.0;
    auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    ok = res.ec == std::errc() && res.ptr == sv.data() + sv.size();
    return v;
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline constexpr double pi = 3.14159265358979323846;

}  // namespace sbn
