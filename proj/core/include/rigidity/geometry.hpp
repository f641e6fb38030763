#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace rigidity {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2() = default;
    constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
    Vec2& operator*=(double s) { x *= s; y *= s; return *this; }

    friend Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
    friend Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
    friend Vec2 operator*(double s, Vec2 a) { return a *= s; }
    friend Vec2 operator*(Vec2 a, double s) { return a *= s; }
    friend Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm2() const { return x * x + y * y; }
    double norm() const { return std::hypot(x, y); }
};

/// 2x2 matrix, row major: m[r][c].
struct Mat2 {
    std::array<std::array<double, 2>, 2> m{{{0.0, 0.0}, {0.0, 0.0}}};

    Mat2() = default;
    constexpr Mat2(double a, double b, double c, double d) : m{{{a, b}, {c, d}}} {}

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    /// Counter-clockwise rotation by angle `t`.
    static Mat2 rotation(double t) {
        const double c = std::cos(t), s = std::sin(t);
        return {c, -s, s, c};
    }
    /// Skew matrix [[0,-a],[a,0]].
    static Mat2 skew(double a) { return {0.0, -a, a, 0.0}; }

    double& operator()(int r, int c) { return m[r][c]; }
    double operator()(int r, int c) const { return m[r][c]; }

    Mat2& operator+=(const Mat2& o) {
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) m[r][c] += o.m[r][c];
        return *this;
    }
    Mat2& operator-=(const Mat2& o) {
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) m[r][c] -= o.m[r][c];
        return *this;
    }
    Mat2& operator*=(double s) {
        for (auto& row : m)
            for (auto& v : row) v *= s;
        return *this;
    }
    friend Mat2 operator+(Mat2 a, const Mat2& b) { return a += b; }
    friend Mat2 operator-(Mat2 a, const Mat2& b) { return a -= b; }
    friend Mat2 operator*(double s, Mat2 a) { return a *= s; }
    friend Mat2 operator*(Mat2 a, double s) { return a *= s; }

    friend Mat2 operator*(const Mat2& a, const Mat2& b) {
        Mat2 r;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                r.m[i][j] = a.m[i][0] * b.m[0][j] + a.m[i][1] * b.m[1][j];
        return r;
    }
    friend Vec2 operator*(const Mat2& a, const Vec2& v) {
        return {a.m[0][0] * v.x + a.m[0][1] * v.y, a.m[1][0] * v.x + a.m[1][1] * v.y};
    }

    Mat2 transposed() const { return {m[0][0], m[1][0], m[0][1], m[1][1]}; }
    double det() const { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }
    double trace() const { return m[0][0] + m[1][1]; }
    double frobenius2() const {
        return m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1];
    }
    double frobenius() const { return std::sqrt(frobenius2()); }
    Mat2 sym() const {
        const double off = 0.5 * (m[0][1] + m[1][0]);
        return {m[0][0], off, off, m[1][1]};
    }
    bool finite() const {
        for (const auto& row : m)
            for (double v : row)
                if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Singular values of a 2x2 matrix in closed form. Returns {sigma1, sigma2_signed}
/// with sigma1 >= |sigma2_signed| and sign(sigma2_signed) = sign(det F).
std::array<double, 2> singular_values_signed(const Mat2& f);

/// Distance of F to SO(2): sqrt((s1-1)^2 + (s2-1)^2) with the reflection branch
/// using (s2+1)^2 when det F < 0. Throws std::invalid_argument on non-finite input.
double dist_to_SO2(const Mat2& f);

/// Angle of the SO(2) polar factor of M (closed form). Zero matrix maps to angle 0.
double polar_angle(const Mat2& m);

/// Nearest rotation to M in Frobenius norm over SO(2).
Mat2 polar_rotation(const Mat2& m);

struct RigidMotion {
    Mat2 R = Mat2::identity();
    Vec2 c{0.0, 0.0};

    Vec2 operator()(const Vec2& x) const { return R * x + c; }
    double angle() const { return std::atan2(R(1, 0), R(0, 0)); }
};

struct InfinitesimalRigidMotion {
    double a = 0.0;  // A = [[0,-a],[a,0]]
    Vec2 c{0.0, 0.0};

    Mat2 A() const { return Mat2::skew(a); }
    Vec2 operator()(const Vec2& x) const { return {c.x - a * x.y, c.y + a * x.x}; }
};

/// Linear elastic strain (R^T F + F^T R)/2 - Id. R must be a rotation
/// within 1e-10 of orthogonality, else std::invalid_argument.
Mat2 linear_strain(const Mat2& f, const Mat2& r);

bool is_rotation(const Mat2& r, double tol = 1e-12);

/// Deterministic pairwise tree sum; bit-stable regardless of how the
/// values were produced.
double pairwise_sum(std::span<const double> xs);

/// Deterministic 64-bit generator (splitmix64) with portable uniform doubles.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    /// Uniform in [0,1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    /// Uniform in [lo,hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }
    /// Uniform integer in [0,n).
    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  private:
    std::uint64_t state_;
};

}  // namespace rigidity
