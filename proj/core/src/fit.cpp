#include "rigidity/fit.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace rigidity {

RegionNodes collect_nodes(const DeformationField& f, std::span<const int> cells) {
    std::vector<int> sorted(cells.begin(), cells.end());
    std::sort(sorted.begin(), sorted.end());
    RegionNodes out;
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(f.node_count()), 0);
    for (int c : sorted) {
        const int i = c % f.nx, j = c / f.nx;
        const auto vals = f.corner_values(i, j);
        const int nodes[4] = {f.node_id(i, j), f.node_id(i + 1, j), f.node_id(i, j + 1),
                              f.node_id(i + 1, j + 1)};
        const Vec2 pos[4] = {f.node_pos(i, j), f.node_pos(i + 1, j), f.node_pos(i, j + 1),
                             f.node_pos(i + 1, j + 1)};
        for (int q = 0; q < 4; ++q) {
            if (seen[static_cast<std::size_t>(nodes[q])]) continue;
            seen[static_cast<std::size_t>(nodes[q])] = 1;
            out.ids.push_back(nodes[q]);
            out.pos.push_back(pos[q]);
            out.val.push_back(vals[static_cast<std::size_t>(q)]);
        }
    }
    return out;
}

std::optional<RigidMotion> best_fit_rotation(const DeformationField& f,
                                             std::span<const int> cells) {
    Mat2 m;
    bool any = false;
    for (int c : cells) {
        const int i = c % f.nx, j = c / f.nx;
        if (auto g = gradient(f, i, j)) {
            m += *g;
            any = true;
        }
    }
    if (!any) return std::nullopt;
    return RigidMotion{polar_rotation(m), {0.0, 0.0}};
}

std::optional<RigidMotion> best_fit_rotation(const DeformationField& f, const CellRect& region) {
    const auto cells = rect_cells(region.clipped(f.nx, f.ny), f.nx);
    return best_fit_rotation(f, cells);
}

RigidMotion best_fit_rigid_motion(const DeformationField& f, std::span<const int> cells) {
    const RegionNodes nodes = collect_nodes(f, cells);
    if (nodes.ids.empty()) throw std::invalid_argument("best_fit_rigid_motion: empty region");
    const double n = static_cast<double>(nodes.ids.size());
    Vec2 xbar{0, 0}, vbar{0, 0};
    for (std::size_t i = 0; i < nodes.ids.size(); ++i) {
        xbar += nodes.pos[i];
        vbar += nodes.val[i];
    }
    xbar *= 1.0 / n;
    vbar *= 1.0 / n;
    Mat2 cov;  // sum (v - vbar)(x - xbar)^T
    for (std::size_t i = 0; i < nodes.ids.size(); ++i) {
        const Vec2 dv = nodes.val[i] - vbar;
        const Vec2 dx = nodes.pos[i] - xbar;
        cov(0, 0) += dv.x * dx.x;
        cov(0, 1) += dv.x * dx.y;
        cov(1, 0) += dv.y * dx.x;
        cov(1, 1) += dv.y * dx.y;
    }
    const Mat2 r = polar_rotation(cov);
    return RigidMotion{r, vbar - r * xbar};
}

RigidMotion best_fit_rigid_motion(const DeformationField& f, const CellRect& region) {
    const auto cells = rect_cells(region.clipped(f.nx, f.ny), f.nx);
    return best_fit_rigid_motion(f, cells);
}

InfinitesimalRigidMotion project_infinitesimal_rigid(std::span<const Vec2> pos,
                                                     std::span<const Vec2> val) {
    if (pos.empty()) throw std::invalid_argument("project_infinitesimal_rigid: empty region");
    const long double n = static_cast<long double>(pos.size());
    long double sx = 0, sy = 0;
    for (const auto& p : pos) {
        sx += p.x;
        sy += p.y;
    }
    const long double xbx = sx / n, xby = sy / n;
    long double r2 = 0, ur = 0, ux = 0, uy = 0;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        const long double cx = pos[i].x - xbx, cy = pos[i].y - xby;
        r2 += cx * cx + cy * cy;
        ur += val[i].x * (-cy) + val[i].y * cx;
        ux += val[i].x;
        uy += val[i].y;
    }
    InfinitesimalRigidMotion m;
    m.a = r2 > 0 ? static_cast<double>(ur / r2) : 0.0;
    // value of the fitted field at x is c + a(-x2, x1); recover the global c
    m.c.x = static_cast<double>(ux / n + m.a * xby);
    m.c.y = static_cast<double>(uy / n - m.a * xbx);
    return m;
}

InfinitesimalRigidMotion project_infinitesimal_rigid(const DeformationField& f,
                                                     std::span<const int> cells) {
    const RegionNodes nodes = collect_nodes(f, cells);
    return project_infinitesimal_rigid(nodes.pos, nodes.val);
}

namespace {

struct LaplaceSystem {
    std::vector<int> unknown;            // node ids
    std::vector<int> index_of;           // node id -> unknown index or -1
    std::vector<std::array<int, 4>> nbr; // neighbor unknown index, -1 if Dirichlet
    std::vector<Vec2> rhs;               // Dirichlet contributions
};

}  // namespace

HarmonicSplit harmonic_split(const DeformationField& f, std::span<const int> cells) {
    std::vector<int> region(cells.begin(), cells.end());
    std::sort(region.begin(), region.end());

    std::vector<std::uint8_t> in_region(static_cast<std::size_t>(f.cell_count()), 0);
    for (int c : region) in_region[static_cast<std::size_t>(c)] = 1;
    auto cell_in = [&](int i, int j) {
        return f.cell_in_range(i, j) && in_region[static_cast<std::size_t>(f.cell_id(i, j))];
    };

    const RegionNodes nodes = collect_nodes(f, region);
    std::vector<int> node_index(static_cast<std::size_t>(f.node_count()), -1);
    for (std::size_t k = 0; k < nodes.ids.size(); ++k)
        node_index[static_cast<std::size_t>(nodes.ids[k])] = static_cast<int>(k);

    // unknowns: nodes whose four surrounding cells are in the region and whose
    // incident edges carry no crack
    const int w = f.nx + 1;
    std::vector<std::uint8_t> is_unknown(nodes.ids.size(), 0);
    for (std::size_t k = 0; k < nodes.ids.size(); ++k) {
        const int id = nodes.ids[k];
        const int i = id % w, j = id / w;
        if (!(cell_in(i - 1, j - 1) && cell_in(i, j - 1) && cell_in(i - 1, j) && cell_in(i, j)))
            continue;
        const EdgeKey incident[4] = {{0, i - 1, j}, {0, i, j}, {1, i, j - 1}, {1, i, j}};
        bool cut = false;
        for (const auto& e : incident)
            if (f.jumps.contains(e)) cut = true;
        if (!cut) is_unknown[k] = 1;
    }

    std::vector<int> unk;  // indices into nodes.*
    std::vector<int> unk_of(nodes.ids.size(), -1);
    for (std::size_t k = 0; k < nodes.ids.size(); ++k)
        if (is_unknown[k]) {
            unk_of[k] = static_cast<int>(unk.size());
            unk.push_back(static_cast<int>(k));
        }

    DeformationField wfield = f;
    wfield.jumps = JumpSet{};
    wfield.active.assign(static_cast<std::size_t>(f.cell_count()), 0);
    for (int c : region) wfield.active[static_cast<std::size_t>(c)] = 1;

    const std::size_t n = unk.size();
    int iterations = 0;
    double final_res = 0.0;
    if (n > 0) {
        std::vector<Vec2> x(n), b(n), rv(n), p(n), ap(n);
        for (std::size_t u = 0; u < n; ++u) x[u] = nodes.val[static_cast<std::size_t>(unk[u])];

        auto neighbor = [&](std::size_t u, int q) -> std::pair<int, Vec2> {
            // q: 0 left, 1 right, 2 down, 3 up; returns unknown index or -1 + value
            const int id = nodes.ids[static_cast<std::size_t>(unk[u])];
            const int i = id % w, j = id / w;
            const int ni = i + (q == 0 ? -1 : q == 1 ? 1 : 0);
            const int nj = j + (q == 2 ? -1 : q == 3 ? 1 : 0);
            const int nid = nj * w + ni;
            const int k = node_index[static_cast<std::size_t>(nid)];
            if (k < 0) return {-1, Vec2{0, 0}};  // outside region: treated as Dirichlet
            if (unk_of[static_cast<std::size_t>(k)] >= 0)
                return {unk_of[static_cast<std::size_t>(k)], Vec2{0, 0}};
            return {-1, nodes.val[static_cast<std::size_t>(k)]};
        };

        for (std::size_t u = 0; u < n; ++u) {
            Vec2 acc{0, 0};
            for (int q = 0; q < 4; ++q) {
                const auto [idx, val] = neighbor(u, q);
                if (idx < 0) acc += val;
            }
            b[u] = acc;
        }
        auto apply = [&](const std::vector<Vec2>& v, std::vector<Vec2>& out) {
            for (std::size_t u = 0; u < n; ++u) {
                Vec2 acc = 4.0 * v[u];
                for (int q = 0; q < 4; ++q) {
                    const auto [idx, val] = neighbor(u, q);
                    if (idx >= 0) acc -= v[static_cast<std::size_t>(idx)];
                }
                out[u] = acc;
            }
        };
        auto dot = [&](const std::vector<Vec2>& a2, const std::vector<Vec2>& b2) {
            std::vector<double> terms(a2.size());
            for (std::size_t u = 0; u < a2.size(); ++u) terms[u] = a2[u].dot(b2[u]);
            return pairwise_sum(terms);
        };

        apply(x, ap);
        for (std::size_t u = 0; u < n; ++u) rv[u] = b[u] - ap[u];
        double rr = dot(rv, rv);
        const double b_norm = std::sqrt(std::max(dot(b, b), 1e-300));
        const double tol = 1e-10 * b_norm;
        p = rv;
        const int budget = static_cast<int>(10 * n) + 16;
        while (std::sqrt(rr) > tol && iterations < budget) {
            apply(p, ap);
            const double pap = dot(p, ap);
            if (pap <= 0.0) break;
            const double alpha = rr / pap;
            for (std::size_t u = 0; u < n; ++u) {
                x[u] += alpha * p[u];
                rv[u] -= alpha * ap[u];
            }
            const double rr_new = dot(rv, rv);
            const double beta = rr_new / rr;
            rr = rr_new;
            for (std::size_t u = 0; u < n; ++u) p[u] = rv[u] + beta * p[u];
            ++iterations;
        }
        final_res = std::sqrt(rr) / b_norm;
        if (final_res > 1e-8)
            throw std::runtime_error("harmonic_split: CG did not converge, relative residual " +
                                     std::to_string(final_res));
        for (std::size_t u = 0; u < n; ++u)
            wfield.values[static_cast<std::size_t>(nodes.ids[static_cast<std::size_t>(unk[u])])] =
                x[u];
    }
    // boundary nodes carry the (possibly one-sided) region values
    for (std::size_t k = 0; k < nodes.ids.size(); ++k)
        if (!is_unknown[k])
            wfield.values[static_cast<std::size_t>(nodes.ids[k])] = nodes.val[k];

    HarmonicSplit out{wfield, wfield, iterations, final_res};
    out.z.values.assign(wfield.values.size(), Vec2{0, 0});
    for (std::size_t k = 0; k < nodes.ids.size(); ++k) {
        const std::size_t id = static_cast<std::size_t>(nodes.ids[k]);
        out.z.values[id] = nodes.val[k] - wfield.values[id];
    }
    return out;
}

ChainRotationResult chain_rotation_field(const DeformationField& f, const GridSet& u, double k) {
    const int tc = std::max(1, static_cast<int>(std::lround(2.0 * k / f.h)));
    const int bxs = (f.nx + tc - 1) / tc, bys = (f.ny + tc - 1) / tc;
    auto block_of = [&](int i, int j) { return std::pair<int, int>{i / tc, j / tc}; };
    auto block_id = [&](int bx, int by) { return by * bxs + bx; };

    // gradient cells per block
    std::vector<std::vector<int>> block_cells(static_cast<std::size_t>(bxs * bys));
    for (int j = 0; j < f.ny; ++j)
        for (int i = 0; i < f.nx; ++i) {
            if (!u.mask()[static_cast<std::size_t>(j * f.nx + i)]) continue;
            const auto [bx, by] = block_of(i, j);
            block_cells[static_cast<std::size_t>(block_id(bx, by))].push_back(j * f.nx + i);
        }

    ChainRotationResult out;
    std::vector<Mat2> rot(static_cast<std::size_t>(bxs * bys));
    std::vector<std::uint8_t> has_rot(static_cast<std::size_t>(bxs * bys), 0);
    for (int by = 0; by < bys; ++by)
        for (int bx = 0; bx < bxs; ++bx) {
            const auto& cells = block_cells[static_cast<std::size_t>(block_id(bx, by))];
            if (cells.empty()) continue;
            if (auto r = best_fit_rotation(f, cells)) {
                rot[static_cast<std::size_t>(block_id(bx, by))] = r->R;
                has_rot[static_cast<std::size_t>(block_id(bx, by))] = 1;
                out.square_rotation[{bx, by}] = r->R;
            }
        }

    // block adjacency respecting cuts: blocks touch when some cell pair across
    // the border is mask-adjacent without a cut edge
    auto blocks_adjacent = [&](int bx, int by, int cx, int cy) {
        if (std::abs(bx - cx) + std::abs(by - cy) != 1) return false;
        // normalize so the second block sits right of or above the first
        if (cx < bx || cy < by) {
            std::swap(bx, cx);
            std::swap(by, cy);
        }
        const int x0 = bx * tc, y0 = by * tc;
        if (cx == bx + 1) {
            const int i = std::min(x0 + tc, f.nx) - 1;
            if (i + 1 >= f.nx) return false;
            for (int j = y0; j < std::min(y0 + tc, f.ny); ++j)
                if (u.cell(i, j) && u.cell(i + 1, j) && !u.is_cut({1, i + 1, j})) return true;
            return false;
        }
        const int j = std::min(y0 + tc, f.ny) - 1;
        if (j + 1 >= f.ny) return false;
        for (int i = x0; i < std::min(x0 + tc, f.nx); ++i)
            if (u.cell(i, j) && u.cell(i, j + 1) && !u.is_cut({0, i, j + 1})) return true;
        return false;
    };

    std::vector<int> comp(static_cast<std::size_t>(bxs * bys), -1);
    for (int seed = 0; seed < bxs * bys; ++seed) {
        if (!has_rot[static_cast<std::size_t>(seed)] || comp[static_cast<std::size_t>(seed)] >= 0)
            continue;
        const int id = static_cast<int>(out.components.size());
        std::deque<int> queue{seed};
        comp[static_cast<std::size_t>(seed)] = id;
        std::vector<int> blocks;
        while (!queue.empty()) {
            const int b = queue.front();
            queue.pop_front();
            blocks.push_back(b);
            const int bx = b % bxs, by = b / bxs;
            const int nbx[4] = {bx - 1, bx + 1, bx, bx};
            const int nby[4] = {by, by, by - 1, by + 1};
            for (int q = 0; q < 4; ++q) {
                if (nbx[q] < 0 || nbx[q] >= bxs || nby[q] < 0 || nby[q] >= bys) continue;
                const int nb = block_id(nbx[q], nby[q]);
                if (!has_rot[static_cast<std::size_t>(nb)] || comp[static_cast<std::size_t>(nb)] >= 0)
                    continue;
                if (!blocks_adjacent(bx, by, nbx[q], nby[q])) continue;
                comp[static_cast<std::size_t>(nb)] = id;
                queue.push_back(nb);
            }
        }
        std::sort(blocks.begin(), blocks.end());
        ChainComponentResult res;
        res.rotation = rot[static_cast<std::size_t>(blocks.front())];  // root = lex-min block
        res.squares = static_cast<int>(blocks.size());
        std::vector<double> gam, dev;
        const double h2 = f.h * f.h;
        for (int b : blocks)
            for (int c : block_cells[static_cast<std::size_t>(b)]) {
                const int i = c % f.nx, j = c / f.nx;
                if (auto g = gradient(f, i, j)) {
                    const double d = dist_to_SO2(*g);
                    gam.push_back(d * d * h2);
                    dev.push_back((*g - res.rotation).frobenius2() * h2);
                }
            }
        res.gamma = pairwise_sum(gam);
        res.residual2 = pairwise_sum(dev);
        const double area = static_cast<double>(gam.size()) * h2;
        res.exact_rigid = res.gamma <= 1e-26 * std::max(area, 1e-300);
        res.ratio = res.exact_rigid ? 0.0 : res.residual2 / res.gamma;
        out.components.push_back(std::move(res));
    }
    return out;
}

double affine_gap_integral(const Mat2& a, const Vec2& b, const Vec2& lo, const Vec2& hi) {
    const double wx = hi.x - lo.x, wy = hi.y - lo.y;
    if (wx <= 0.0 || wy <= 0.0) return 0.0;
    const double area = wx * wy;
    const double mx = 0.5 * (lo.x + hi.x), my = 0.5 * (lo.y + hi.y);
    // second moments over the box
    const double sxx = area * (mx * mx + wx * wx / 12.0);
    const double syy = area * (my * my + wy * wy / 12.0);
    const double sxy = area * mx * my;
    double total = 0.0;
    for (int r = 0; r < 2; ++r) {
        const double ax = a(r, 0), ay = a(r, 1), br = r == 0 ? b.x : b.y;
        total += ax * ax * sxx + 2.0 * ax * ay * sxy + ay * ay * syy;
        total += 2.0 * br * (ax * mx + ay * my) * area;
        total += br * br * area;
    }
    return total;
}

double motion_gap_L2sq(const RigidMotion& m1, const RigidMotion& m2, const Vec2& lo,
                       const Vec2& hi) {
    return affine_gap_integral(m1.R - m2.R, m1.c - m2.c, lo, hi);
}

ChainPropagateResult rigid_chain_propagate(std::span<const RigidMotion> motions,
                                           std::span<const CellRect> rects,
                                           const DeformationField& grid) {
    if (motions.size() != rects.size() || motions.empty())
        throw std::invalid_argument("rigid_chain_propagate: motions and rectangles must pair up");
    auto bounds = [&](const CellRect& r) {
        const Vec2 lo = grid.node_pos(r.x0, r.y0);
        const Vec2 hi = grid.node_pos(r.x1, r.y1);
        return std::pair<Vec2, Vec2>{lo, hi};
    };
    ChainPropagateResult out;
    for (std::size_t i = 1; i < motions.size(); ++i) {
        const CellRect o = rects[i - 1].intersect(rects[i]);
        if (o.empty())
            throw std::invalid_argument("rigid_chain_propagate: consecutive rectangles " +
                                        std::to_string(i - 1) + "," + std::to_string(i) +
                                        " do not overlap");
        const auto [lo, hi] = bounds(o);
        out.link_gap2.push_back(motion_gap_L2sq(motions[i - 1], motions[i], lo, hi));
    }
    const auto [lo0, hi0] = bounds(rects[0]);
    out.lhs = motion_gap_L2sq(motions.front(), motions.back(), lo0, hi0);
    const double m = static_cast<double>(motions.size());
    out.rhs = m * m * m * pairwise_sum(out.link_gap2);
    out.fitted_c = out.rhs > 0.0 ? out.lhs / out.rhs : 0.0;
    return out;
}

}  // namespace rigidity
