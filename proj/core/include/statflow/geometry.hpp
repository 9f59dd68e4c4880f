#pragma once

#include <cmath>

namespace statflow {

/// 2D point / vector.
struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2() = default;
    constexpr Vec2(double xx, double yy) : x(xx), y(yy) {}

    constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    constexpr Vec2 operator-() const { return {-x, -y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
    Vec2& operator*=(double s) { x *= s; y *= s; return *this; }

    constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    constexpr double norm2() const { return x * x + y * y; }
};

constexpr Vec2 operator*(double s, Vec2 v) { return {v.x * s, v.y * s}; }

/// z-component of the 3D cross product of two in-plane vectors.
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

constexpr Vec2 lerp(Vec2 a, Vec2 b, double t) { return a + (b - a) * t; }

/// 2x2 matrix, row-major. m[i][j] = entry (row i, column j).
struct Mat2 {
    double m[2][2] = {{0.0, 0.0}, {0.0, 0.0}};

    constexpr Mat2() = default;
    constexpr Mat2(double a, double b, double c, double d) : m{{a, b}, {c, d}} {}

    static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static constexpr Mat2 from_columns(Vec2 c0, Vec2 c1) {
        return {c0.x, c1.x, c0.y, c1.y};
    }
    /// Outer product a (x) b, entries a_i b_j.
    static constexpr Mat2 outer(Vec2 a, Vec2 b) {
        return {a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y};
    }

    constexpr Vec2 col(int j) const { return {m[0][j], m[1][j]}; }
    constexpr Vec2 row(int i) const { return {m[i][0], m[i][1]}; }

    constexpr Vec2 operator*(Vec2 v) const {
        return {m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y};
    }
    constexpr Mat2 operator*(const Mat2& o) const {
        return {m[0][0] * o.m[0][0] + m[0][1] * o.m[1][0],
                m[0][0] * o.m[0][1] + m[0][1] * o.m[1][1],
                m[1][0] * o.m[0][0] + m[1][1] * o.m[1][0],
                m[1][0] * o.m[0][1] + m[1][1] * o.m[1][1]};
    }
    constexpr Mat2 operator+(const Mat2& o) const {
        return {m[0][0] + o.m[0][0], m[0][1] + o.m[0][1],
                m[1][0] + o.m[1][0], m[1][1] + o.m[1][1]};
    }
    constexpr Mat2 operator-(const Mat2& o) const {
        return {m[0][0] - o.m[0][0], m[0][1] - o.m[0][1],
                m[1][0] - o.m[1][0], m[1][1] - o.m[1][1]};
    }
    constexpr Mat2 operator*(double s) const {
        return {m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s};
    }
    Mat2& operator+=(const Mat2& o) {
        m[0][0] += o.m[0][0]; m[0][1] += o.m[0][1];
        m[1][0] += o.m[1][0]; m[1][1] += o.m[1][1];
        return *this;
    }

    constexpr double det() const { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }
    constexpr Mat2 transposed() const { return {m[0][0], m[1][0], m[0][1], m[1][1]}; }
    constexpr Mat2 inverse() const {
        const double d = det();
        return {m[1][1] / d, -m[0][1] / d, -m[1][0] / d, m[0][0] / d};
    }
    /// Frobenius inner product A : B.
    constexpr double ddot(const Mat2& o) const {
        return m[0][0] * o.m[0][0] + m[0][1] * o.m[0][1] +
               m[1][0] * o.m[1][0] + m[1][1] * o.m[1][1];
    }
    double max_abs() const {
        return std::max(std::max(std::abs(m[0][0]), std::abs(m[0][1])),
                        std::max(std::abs(m[1][0]), std::abs(m[1][1])));
    }
};

constexpr Mat2 operator*(double s, const Mat2& a) { return a * s; }

/// Axis-aligned rectangle.
struct Rect {
    Vec2 lo;
    Vec2 hi;

    constexpr double width() const { return hi.x - lo.x; }
    constexpr double height() const { return hi.y - lo.y; }
    constexpr double area() const { return width() * height(); }
    constexpr bool contains(Vec2 p, double tol = 0.0) const {
        return p.x >= lo.x - tol && p.x <= hi.x + tol &&
               p.y >= lo.y - tol && p.y <= hi.y + tol;
    }
    static constexpr Rect unit_square() { return {{0.0, 0.0}, {1.0, 1.0}}; }
};

} // namespace statflow
