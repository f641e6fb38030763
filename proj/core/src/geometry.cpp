#include "rigidity/geometry.hpp"

namespace rigidity {

std::array<double, 2> singular_values_signed(const Mat2& f) {
    const double a = f(0, 0), b = f(0, 1), c = f(1, 0), d = f(1, 1);
    const double s = std::hypot(a + d, b - c);
    const double t = std::hypot(a - d, b + c);
    return {0.5 * (s + t), 0.5 * (s - t)};
}

double dist_to_SO2(const Mat2& f) {
    if (!f.finite()) throw std::invalid_argument("dist_to_SO2: non-finite matrix entry");
    const auto [s1, s2] = singular_values_signed(f);
    return std::hypot(s1 - 1.0, s2 - 1.0);
}

double polar_angle(const Mat2& m) {
    const double sy = m(1, 0) - m(0, 1);
    const double cy = m(0, 0) + m(1, 1);
    if (sy == 0.0 && cy == 0.0) return 0.0;  // degenerate: angle 0 by convention
    return std::atan2(sy, cy);
}

Mat2 polar_rotation(const Mat2& m) { return Mat2::rotation(polar_angle(m)); }

bool is_rotation(const Mat2& r, double tol) {
    const Mat2 rtr = r.transposed() * r;
    const Mat2 e = rtr - Mat2::identity();
    return e.frobenius() <= tol && std::abs(r.det() - 1.0) <= tol;
}

Mat2 linear_strain(const Mat2& f, const Mat2& r) {
    if (!is_rotation(r, 1e-10)) throw std::invalid_argument("linear_strain: R is not a rotation");
    const Mat2 g = r.transposed() * f;
    Mat2 e = g.sym();
    e(0, 0) -= 1.0;
    e(1, 1) -= 1.0;
    return e;
}

double pairwise_sum(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (double v : xs) s += v;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

}  // namespace rigidity
