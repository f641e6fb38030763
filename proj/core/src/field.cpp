#include "rigidity/field.hpp"

#include <algorithm>
#include <cmath>

namespace rigidity {

std::array<Vec2, 4> DeformationField::corner_values(int i, int j) const {
    std::array<Vec2, 4> v{values[static_cast<std::size_t>(node_id(i, j))],
                          values[static_cast<std::size_t>(node_id(i + 1, j))],
                          values[static_cast<std::size_t>(node_id(i, j + 1))],
                          values[static_cast<std::size_t>(node_id(i + 1, j + 1))]};
    // order: SW, SE, NW, NE; crack sides override with this cell's traces
    if (const JumpEdge* e = jumps.find(side_edge(i, j, Side::S))) {
        v[0] = e->hi0;  // cell sits above its south edge
        v[1] = e->hi1;
    }
    if (const JumpEdge* e = jumps.find(side_edge(i, j, Side::N))) {
        v[2] = e->lo0;
        v[3] = e->lo1;
    }
    if (const JumpEdge* e = jumps.find(side_edge(i, j, Side::W))) {
        v[0] = e->hi0;  // cell sits right of its west edge
        v[2] = e->hi1;
    }
    if (const JumpEdge* e = jumps.find(side_edge(i, j, Side::E))) {
        v[1] = e->lo0;
        v[3] = e->lo1;
    }
    return v;
}

namespace {

Mat2 bilinear_gradient(const std::array<Vec2, 4>& c, double h) {
    // c = {SW, SE, NW, NE}
    const double inv = 1.0 / (2.0 * h);
    const Vec2 gx = (c[1] + c[3] - c[0] - c[2]) * inv;
    const Vec2 gy = (c[2] + c[3] - c[0] - c[1]) * inv;
    return Mat2{gx.x, gy.x, gx.y, gy.y};
}

}  // namespace

std::optional<Mat2> gradient(const DeformationField& f, int i, int j) {
    if (!f.cell_active(i, j) || f.cell_cut(i, j)) return std::nullopt;
    return bilinear_gradient(f.corner_values(i, j), f.h);
}

std::optional<Mat2> gradient_one_sided(const DeformationField& f, int i, int j) {
    if (!f.cell_active(i, j)) return std::nullopt;
    return bilinear_gradient(f.corner_values(i, j), f.h);
}

double DeformationField::grad_inf_norm() const {
    double m = 0.0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            if (auto g = gradient_one_sided(*this, i, j)) m = std::max(m, g->frobenius());
    return m;
}

double cell_energy(const DeformationField& f, const CellRect& region) {
    const CellRect r = region.clipped(f.nx, f.ny);
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(r.area()));
    const double h2 = f.h * f.h;
    for (int j = r.y0; j < r.y1; ++j)
        for (int i = r.x0; i < r.x1; ++i)
            if (auto g = gradient(f, i, j)) {
                const double d = dist_to_SO2(*g);
                terms.push_back(d * d * h2);
            }
    return pairwise_sum(terms);
}

double cell_energy(const DeformationField& f, std::span<const int> cells) {
    std::vector<double> terms;
    terms.reserve(cells.size());
    const double h2 = f.h * f.h;
    for (int c : cells) {
        const int i = c % f.nx, j = c / f.nx;
        if (auto g = gradient(f, i, j)) {
            const double d = dist_to_SO2(*g);
            terms.push_back(d * d * h2);
        }
    }
    return pairwise_sum(terms);
}

double cell_energy(const DeformationField& f) { return cell_energy(f, CellRect{0, 0, f.nx, f.ny}); }

double jump_length(const DeformationField& f) {
    return static_cast<double>(f.jumps.size()) * f.h;
}

double essential_jump_length(const DeformationField& f, double tol) {
    long n = 0;
    for (const auto& [k, e] : f.jumps)
        if (e.amplitude().norm() > tol) ++n;
    return static_cast<double>(n) * f.h;
}

EnergyBreakdown griffith_energy(const DeformationField& f, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("griffith_energy: eps must be positive");
    EnergyBreakdown e;
    e.epsilon = eps;
    e.bulk = cell_energy(f) / eps;
    e.surface = jump_length(f);
    e.relaxed_surface = e.surface;
    return e;
}

double f_eps_rho(double x, double eps, double rho) {
    return std::min(x / (std::sqrt(eps) * rho), 1.0);
}

namespace {

bool edge_in_region(const EdgeKey& e, const DeformationField& f, const CellRect& r) {
    if (e.orient == 0) {
        if (e.j > 0 && r.contains(e.i, e.j - 1)) return true;
        if (e.j < f.ny && r.contains(e.i, e.j)) return true;
        return false;
    }
    if (e.i > 0 && r.contains(e.i - 1, e.j)) return true;
    if (e.i < f.nx && r.contains(e.i, e.j)) return true;
    return false;
}

}  // namespace

EnergyBreakdown relaxed_energy(const DeformationField& f, double eps, double rho,
                               const CellRect& region) {
    if (!(eps > 0.0) || !(rho > 0.0))
        throw std::invalid_argument("relaxed_energy: eps and rho must be positive");
    const CellRect r = region.clipped(f.nx, f.ny);
    EnergyBreakdown e;
    e.epsilon = eps;
    e.rho = rho;
    e.bulk = cell_energy(f, r) / eps;
    std::vector<double> surf, relax;
    for (const auto& [k, je] : f.jumps) {
        if (!edge_in_region(k, f, r)) continue;
        surf.push_back(f.h);
        relax.push_back(f_eps_rho(je.amplitude().norm(), eps, rho) * f.h);
    }
    e.surface = pairwise_sum(surf);
    e.relaxed_surface = pairwise_sum(relax);
    return e;
}

EnergyBreakdown relaxed_energy(const DeformationField& f, double eps, double rho) {
    return relaxed_energy(f, eps, rho, CellRect{0, 0, f.nx, f.ny});
}

double curl_defect(const DeformationField& f, const CellRect& region) {
    const CellRect r = region.clipped(f.nx, f.ny);
    std::vector<double> terms;
    // interior vertices of the region: all four surrounding cells in region
    for (int j = r.y0 + 1; j < r.y1; ++j) {
        for (int i = r.x0 + 1; i < r.x1; ++i) {
            const auto sw = gradient_one_sided(f, i - 1, j - 1);
            const auto se = gradient_one_sided(f, i, j - 1);
            const auto nw = gradient_one_sided(f, i - 1, j);
            const auto ne = gradient_one_sided(f, i, j);
            if (!sw || !se || !nw || !ne) continue;
            // circulation around the dual plaquette through the cell centers
            Vec2 circ{0.0, 0.0};
            const double half = 0.5 * f.h;
            for (int row = 0; row < 2; ++row) {
                double c = 0.0;
                c += half * ((*sw)(row, 0) + (*se)(row, 0));  // bottom leg, +x
                c += half * ((*se)(row, 1) + (*ne)(row, 1));  // right leg, +y
                c -= half * ((*ne)(row, 0) + (*nw)(row, 0));  // top leg, -x
                c -= half * ((*nw)(row, 1) + (*sw)(row, 1));  // left leg, -y
                if (row == 0)
                    circ.x = c;
                else
                    circ.y = c;
            }
            terms.push_back(circ.norm());
        }
    }
    return pairwise_sum(terms);
}

}  // namespace rigidity
