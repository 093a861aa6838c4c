#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cinerender {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInvPi = std::numbers::inv_pi;
inline constexpr double kInv4Pi = 0.25 * std::numbers::inv_pi;

/// World-space vector or point in millimetres.
struct Vec3 {
    double x = 0, y = 0, z = 0;

    constexpr Vec3() = default;
    constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr double &operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    constexpr Vec3 operator+(const Vec3 &o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3 &o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    constexpr Vec3 &operator+=(const Vec3 &o) { x += o.x; y += o.y; z += o.z; return *this; }
    constexpr bool operator==(const Vec3 &) const = default;
};

constexpr Vec3 operator*(double s, const Vec3 &v) { return v * s; }
constexpr double dot(const Vec3 &a, const Vec3 &b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3 &a, const Vec3 &b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double length(const Vec3 &v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalize(const Vec3 &v) { return v / length(v); }
inline bool is_finite(const Vec3 &v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

using WorldPoint = Vec3;

/// Linear RGB triple (radiance, reflectance, emission, throughput).
struct Rgb {
    double r = 0, g = 0, b = 0;

    constexpr Rgb() = default;
    constexpr Rgb(double r_, double g_, double b_) : r(r_), g(g_), b(b_) {}
    constexpr explicit Rgb(double v) : r(v), g(v), b(v) {}

    constexpr double operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }
    constexpr double &operator[](int i) { return i == 0 ? r : (i == 1 ? g : b); }

    constexpr Rgb operator+(const Rgb &o) const { return {r + o.r, g + o.g, b + o.b}; }
    constexpr Rgb operator-(const Rgb &o) const { return {r - o.r, g - o.g, b - o.b}; }
    constexpr Rgb operator*(const Rgb &o) const { return {r * o.r, g * o.g, b * o.b}; }
    constexpr Rgb operator*(double s) const { return {r * s, g * s, b * s}; }
    constexpr Rgb operator/(double s) const { return {r / s, g / s, b / s}; }
    constexpr Rgb &operator+=(const Rgb &o) { r += o.r; g += o.g; b += o.b; return *this; }
    constexpr Rgb &operator*=(const Rgb &o) { r *= o.r; g *= o.g; b *= o.b; return *this; }
    constexpr Rgb &operator*=(double s) { r *= s; g *= s; b *= s; return *this; }
    constexpr bool operator==(const Rgb &) const = default;

    constexpr double max_component() const { return std::max(r, std::max(g, b)); }
    constexpr bool is_black() const { return r == 0 && g == 0 && b == 0; }
};

constexpr Rgb operator*(double s, const Rgb &c) { return c * s; }
constexpr Rgb lerp(const Rgb &a, const Rgb &b, double t) { return a * (1 - t) + b * t; }
constexpr double lerp(double a, double b, double t) { return a * (1 - t) + b * t; }
constexpr Vec3 lerp(const Vec3 &a, const Vec3 &b, double t) { return a * (1 - t) + b * t; }

constexpr double luminance(const Rgb &c) { return 0.2126 * c.r + 0.7152 * c.g + 0.0722 * c.b; }

inline bool is_finite(const Rgb &c) {
    return std::isfinite(c.r) && std::isfinite(c.g) && std::isfinite(c.b);
}

struct Ray {
    Vec3 origin;
    Vec3 dir;  // unit length

    Vec3 at(double t) const { return origin + dir * t; }
};

/// Orthonormal basis around a unit vector (Duff et al. 2017).
struct Frame {
    Vec3 s, t, n;

    explicit Frame(const Vec3 &normal) : n(normal) {
        const double sign = std::copysign(1.0, n.z);
        const double a = -1.0 / (sign + n.z);
        const double b = n.x * n.y * a;
        s = {1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x};
        t = {b, sign + n.y * n.y * a, -n.y};
    }

    Vec3 to_world(const Vec3 &v) const { return s * v.x + t * v.y + n * v.z; }
};

/// Concentric (Shirley-Chiu) map from [0,1)^2 to the unit disk.
inline void square_to_disk(double u1, double u2, double &dx, double &dy) {
    const double ox = 2 * u1 - 1, oy = 2 * u2 - 1;
    if (ox == 0 && oy == 0) {
        dx = dy = 0;
        return;
    }
    double r, theta;
    if (std::abs(ox) > std::abs(oy)) {
        r = ox;
        theta = (kPi / 4) * (oy / ox);
    } else {
        r = oy;
        theta = kPi / 2 - (kPi / 4) * (ox / oy);
    }
    dx = r * std::cos(theta);
    dy = r * std::sin(theta);
}

}  // namespace cinerender
