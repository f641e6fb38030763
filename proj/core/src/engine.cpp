#include "rigidity/engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <stdexcept>

namespace rigidity {

namespace {

std::vector<int> mask_cells(const GridSet& w) {
    std::vector<int> cells;
    for (int c = 0; c < static_cast<int>(w.mask().size()); ++c)
        if (w.mask()[static_cast<std::size_t>(c)]) cells.push_back(c);
    return cells;
}

/// Cut-aware flood fill of `w`'s mask restricted to a rect; returns per-cell
/// component ids (-1 outside) indexed over the whole grid, and component count.
int window_components(const GridSet& w, const CellRect& rect, std::vector<int>& comp) {
    const auto& lat = w.lattice();
    comp.assign(static_cast<std::size_t>(lat.cell_count()), -1);
    int next = 0;
    for (int sj = rect.y0; sj < rect.y1; ++sj)
        for (int si = rect.x0; si < rect.x1; ++si) {
            const int seed = lat.cell_id(si, sj);
            if (!w.mask()[static_cast<std::size_t>(seed)] ||
                comp[static_cast<std::size_t>(seed)] >= 0)
                continue;
            const int id = next++;
            std::deque<int> queue{seed};
            comp[static_cast<std::size_t>(seed)] = id;
            while (!queue.empty()) {
                const int c = queue.front();
                queue.pop_front();
                const int a = c % lat.nx, b = c / lat.nx;
                struct Step {
                    int da, db;
                    EdgeKey e;
                };
                const Step steps[4] = {{0, -1, {0, a, b}},
                                       {0, 1, {0, a, b + 1}},
                                       {-1, 0, {1, a, b}},
                                       {1, 0, {1, a + 1, b}}};
                for (const auto& s : steps) {
                    const int na = a + s.da, nb = b + s.db;
                    if (!rect.contains(na, nb)) continue;
                    const int cc = lat.cell_id(na, nb);
                    if (!w.mask()[static_cast<std::size_t>(cc)] ||
                        comp[static_cast<std::size_t>(cc)] >= 0)
                        continue;
                    if (w.is_cut(s.e)) continue;
                    comp[static_cast<std::size_t>(cc)] = id;
                    queue.push_back(cc);
                }
            }
        }
    return next;
}

/// One-ring dilation of a cell set inside the mask, not crossing cuts.
std::vector<int> dilate_in_mask(const GridSet& w, const std::vector<int>& cells) {
    const auto& lat = w.lattice();
    std::vector<int> out = cells;
    std::set<int> seen(cells.begin(), cells.end());
    for (int c : cells) {
        const int a = c % lat.nx, b = c / lat.nx;
        struct Step {
            int da, db;
            EdgeKey e;
        };
        const Step steps[4] = {{0, -1, {0, a, b}},
                               {0, 1, {0, a, b + 1}},
                               {-1, 0, {1, a, b}},
                               {1, 0, {1, a + 1, b}}};
        for (const auto& s : steps) {
            const int na = a + s.da, nb = b + s.db;
            if (!lat.in_range(na, nb)) continue;
            const int cc = lat.cell_id(na, nb);
            if (!w.mask()[static_cast<std::size_t>(cc)] || w.is_cut(s.e)) continue;
            if (seen.insert(cc).second) out.push_back(cc);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

double rect_star_measure(const CellRect& r, double h, double h_star) {
    const double w = r.width() * h, ht = r.height() * h;
    const double perim = 2.0 * (w + ht);
    const double diag = std::hypot(w, ht);
    return h_star * perim + (1.0 - h_star) * diag;
}

double cubic_bump(double u) {
    const double a = std::abs(u);
    if (a >= 1.0) return 0.0;
    return 1.0 - 3.0 * a * a + 2.0 * a * a * a;
}
double cubic_bump_deriv(double u) {
    const double a = std::abs(u);
    if (a >= 1.0) return 0.0;
    const double d = -6.0 * a + 6.0 * a * a;
    return u >= 0.0 ? d : -d;
}

}  // namespace

TileGrid TileGrid::make(int side, int shift, int nx, int ny) {
    const Vec2 off = Lattice::shift_offset(shift);
    TileGrid g;
    g.side = std::max(1, side);
    g.ox = static_cast<int>(off.x) * (g.side / 2);
    g.oy = static_cast<int>(off.y) * (g.side / 2);
    g.nx = nx;
    g.ny = ny;
    return g;
}

double cell_energy_L4(const DeformationField& f, const CellRect& region) {
    const CellRect r = region.clipped(f.nx, f.ny);
    std::vector<double> terms;
    const double h2 = f.h * f.h;
    for (int j = r.y0; j < r.y1; ++j)
        for (int i = r.x0; i < r.x1; ++i)
            if (auto g = gradient(f, i, j)) {
                const double d = dist_to_SO2(*g);
                terms.push_back(d * d * d * d * h2);
            }
    return pairwise_sum(terms);
}

double boundary_length_in(const GridSet& w, const CellRect& rect) {
    const auto& lat = w.lattice();
    const CellRect r = rect.clipped(lat.nx, lat.ny);
    auto inside = [&](int a, int b) {
        return lat.in_range(a, b) && w.mask()[static_cast<std::size_t>(lat.cell_id(a, b))] != 0;
    };
    // interior crack boundary only; the ambient border is not part of dW
    long count = 0;
    for (int j = std::max(r.y0, 1); j <= std::min(r.y1, lat.ny - 1); ++j)
        for (int i = r.x0; i < r.x1; ++i)
            if (inside(i, j - 1) != inside(i, j)) ++count;  // horizontal edges
    for (int j = r.y0; j < r.y1; ++j)
        for (int i = std::max(r.x0, 1); i <= std::min(r.x1, lat.nx - 1); ++i)
            if (inside(i - 1, j) != inside(i, j)) ++count;  // vertical edges
    long cuts = 0;
    for (const auto& e : w.cut_edges()) {
        const bool in = e.orient == 0 ? (e.i >= r.x0 && e.i < r.x1 && e.j >= r.y0 && e.j <= r.y1)
                                      : (e.i >= r.x0 && e.i <= r.x1 && e.j >= r.y0 && e.j < r.y1);
        if (in) ++cuts;
    }
    return (static_cast<double>(count) + 2.0 * static_cast<double>(cuts)) * 2.0 * lat.spacing;
}

CarveResult threshold_carve(const DeformationField& f, const GridSet& w, double k, double eps) {
    const int side = std::max(1, static_cast<int>(std::lround(2.0 * k / f.h)));
    const TileGrid tiles = TileGrid::make(side, 1, f.nx, f.ny);
    CarveResult out{w, {}, 0.0, 0.0, 0.0};

    std::vector<double> gamma_terms;
    for (int by = 0; by < tiles.tiles_y(); ++by)
        for (int bx = 0; bx < tiles.tiles_x(); ++bx) {
            const CellRect rect = tiles.tile_rect(bx, by);
            if (rect.empty()) continue;
            std::vector<int> cells;
            for (int j = rect.y0; j < rect.y1; ++j)
                for (int i = rect.x0; i < rect.x1; ++i)
                    if (w.mask()[static_cast<std::size_t>(j * f.nx + i)])
                        cells.push_back(j * f.nx + i);
            const double g = cell_energy(f, cells);
            gamma_terms.push_back(g);
            if (g > eps * k) out.carved.push_back(rect);
        }
    out.gamma = pairwise_sum(gamma_terms);

    GridSet cur = w;
    std::vector<double> star_terms;
    for (const auto& rect : out.carved) {
        cur = subtract_and_mark(cur, rect);
        star_terms.push_back(rect_star_measure(rect, f.h, 0.1));
    }
    out.set = std::move(cur);
    out.budget_lhs = pairwise_sum(star_terms);
    out.budget_rhs = 8.0 * out.gamma / eps;
    return out;
}

PiecewiseRotationResult piecewise_rotation_map(const DeformationField& f, const GridSet& w,
                                               double k, double m, double eps) {
    (void)m;
    CarveResult carve = threshold_carve(f, w, k, eps);
    PiecewiseRotationResult out;
    out.carved_squares = static_cast<int>(carve.carved.size());
    out.budget_lhs = carve.budget_lhs;
    out.budget_rhs = carve.budget_rhs;
    out.set = std::move(carve.set);

    const int side = std::max(1, static_cast<int>(std::lround(2.0 * k / f.h)));
    const double h2 = f.h * f.h;
    std::vector<double> d2_terms, d4_terms;
    for (int shift = 1; shift <= 4; ++shift) {
        auto& fits = out.fits[static_cast<std::size_t>(shift - 1)];
        fits.fit_id.assign(static_cast<std::size_t>(f.cell_count()), -1);
        const TileGrid tiles = TileGrid::make(side, shift, f.nx, f.ny);
        for (int by = 0; by < tiles.tiles_y(); ++by)
            for (int bx = 0; bx < tiles.tiles_x(); ++bx) {
                const CellRect rect = tiles.tile_rect(bx, by);
                if (rect.empty()) continue;
                std::vector<int> comp;
                const int n = window_components(out.set, rect, comp);
                std::vector<std::vector<int>> groups(static_cast<std::size_t>(n));
                for (int j = rect.y0; j < rect.y1; ++j)
                    for (int i = rect.x0; i < rect.x1; ++i) {
                        const int c = j * f.nx + i;
                        if (comp[static_cast<std::size_t>(c)] >= 0)
                            groups[static_cast<std::size_t>(comp[static_cast<std::size_t>(c)])]
                                .push_back(c);
                    }
                for (auto& cells : groups) {
                    if (cells.empty()) continue;
                    const auto enlarged = dilate_in_mask(out.set, cells);
                    const auto fit = best_fit_rotation(f, enlarged);
                    if (!fit) {
                        ++out.flagged_components;
                        continue;
                    }
                    const int id = static_cast<int>(fits.rotation.size());
                    fits.rotation.push_back(fit->R);
                    for (int c : cells) fits.fit_id[static_cast<std::size_t>(c)] = id;
                }
            }
        // per-shift deviations
        for (int c = 0; c < f.cell_count(); ++c) {
            const int id = fits.fit_id[static_cast<std::size_t>(c)];
            if (id < 0) continue;
            if (auto g = gradient(f, c % f.nx, c / f.nx)) {
                const double d2 = (*g - fits.rotation[static_cast<std::size_t>(id)]).frobenius2();
                d2_terms.push_back(d2 * h2);
                d4_terms.push_back(d2 * d2 * h2);
            }
        }
    }
    out.gamma = cell_energy(f, mask_cells(out.set));
    out.delta2 = pairwise_sum(d2_terms);
    out.delta4 = pairwise_sum(d4_terms);
    return out;
}

const RigidMotion* LocalMotionMaps::motion_at(int shift, int i, int j) const {
    const auto& grid = grids[static_cast<std::size_t>(shift - 1)];
    const auto [bx, by] = grid.tile_of(i, j);
    const int comp =
        cell_comp[static_cast<std::size_t>(shift - 1)][static_cast<std::size_t>(j * grid.nx + i)];
    if (comp < 0) return nullptr;
    auto it = motions[static_cast<std::size_t>(shift - 1)].find({bx, by, comp});
    return it == motions[static_cast<std::size_t>(shift - 1)].end() ? nullptr : &it->second;
}

LocalMotionResult local_rigid_motion_map(const DeformationField& f, const GridSet& w, double k,
                                         double m, double eps,
                                         const std::array<ShiftFits, 4>& rhat,
                                         const EngineConfig& cfg) {
    LocalMotionResult out;
    const double h2 = f.h * f.h;

    // extended carving on 3k-squares: eps len(dW n Q) + gamma(Q) + delta4(Q) > c* eps k
    {
        const int side3 = std::max(1, static_cast<int>(std::lround(6.0 * k / f.h)));
        const TileGrid tiles = TileGrid::make(side3, 1, f.nx, f.ny);
        GridSet cur = w;
        std::vector<CellRect> carved;
        for (int by = 0; by < tiles.tiles_y(); ++by)
            for (int bx = 0; bx < tiles.tiles_x(); ++bx) {
                const CellRect rect = tiles.tile_rect(bx, by);
                if (rect.empty()) continue;
                std::vector<int> cells;
                for (int j = rect.y0; j < rect.y1; ++j)
                    for (int i = rect.x0; i < rect.x1; ++i)
                        if (w.mask()[static_cast<std::size_t>(j * f.nx + i)])
                            cells.push_back(j * f.nx + i);
                double crit = eps * boundary_length_in(w, rect) + cell_energy(f, cells);
                for (int shift = 0; shift < 4; ++shift) {
                    const auto& fits = rhat[static_cast<std::size_t>(shift)];
                    for (int c : cells) {
                        const int id = fits.fit_id[static_cast<std::size_t>(c)];
                        if (id < 0) continue;
                        if (auto g = gradient(f, c % f.nx, c / f.nx)) {
                            const double d2 =
                                (*g - fits.rotation[static_cast<std::size_t>(id)]).frobenius2();
                            crit += d2 * d2 * h2;
                        }
                    }
                }
                if (crit > cfg.carve_c * eps * k) carved.push_back(rect);
            }
        for (const auto& rect : carved) cur = subtract_and_mark(cur, rect);
        out.carved_squares = static_cast<int>(carved.size());
        out.set = std::move(cur);
    }

    const double lambda = k * m;
    const int side = std::max(1, static_cast<int>(std::lround(2.0 * lambda / f.h)));
    out.maps.side = side;
    out.maps.lambda = 0.5 * side * f.h;

    for (int shift = 1; shift <= 4; ++shift) {
        const TileGrid tiles = TileGrid::make(side, shift, f.nx, f.ny);
        out.maps.grids[static_cast<std::size_t>(shift - 1)] = tiles;
        auto& cell_comp = out.maps.cell_comp[static_cast<std::size_t>(shift - 1)];
        cell_comp.assign(static_cast<std::size_t>(f.cell_count()), -1);
        auto& motions = out.maps.motions[static_cast<std::size_t>(shift - 1)];

        for (int by = 0; by < tiles.tiles_y(); ++by)
            for (int bx = 0; bx < tiles.tiles_x(); ++bx) {
                const CellRect tile = tiles.tile_rect(bx, by);
                if (tile.empty()) continue;
                CellRect window{tile.x0 - side, tile.y0 - side, tile.x1 + side, tile.y1 + side};
                window = window.clipped(f.nx, f.ny);
                std::vector<int> comp;
                const int n = window_components(out.set, window, comp);
                if (n == 0) continue;
                std::vector<std::vector<int>> groups(static_cast<std::size_t>(n));
                for (int j = window.y0; j < window.y1; ++j)
                    for (int i = window.x0; i < window.x1; ++i) {
                        const int c = j * f.nx + i;
                        if (comp[static_cast<std::size_t>(c)] >= 0)
                            groups[static_cast<std::size_t>(comp[static_cast<std::size_t>(c)])]
                                .push_back(c);
                    }
                std::vector<std::uint8_t> touches_tile(static_cast<std::size_t>(n), 0);
                for (int j = tile.y0; j < tile.y1; ++j)
                    for (int i = tile.x0; i < tile.x1; ++i) {
                        const int g = comp[static_cast<std::size_t>(j * f.nx + i)];
                        if (g >= 0) touches_tile[static_cast<std::size_t>(g)] = 1;
                    }
                for (int g = 0; g < n; ++g) {
                    if (!touches_tile[static_cast<std::size_t>(g)]) continue;
                    const auto& cells = groups[static_cast<std::size_t>(g)];
                    // rotation from the k-square fits, unshifted lattice preferred
                    Mat2 rhat_g = Mat2::identity();
                    bool found = false;
                    for (int pref : {3, 0, 1, 2}) {
                        const auto& fits = rhat[static_cast<std::size_t>(pref)];
                        for (int c : cells) {
                            const int id = fits.fit_id[static_cast<std::size_t>(c)];
                            if (id >= 0) {
                                rhat_g = fits.rotation[static_cast<std::size_t>(id)];
                                found = true;
                                break;
                            }
                        }
                        if (found) break;
                    }
                    if (!found) {
                        if (auto fb = best_fit_rotation(f, cells)) {
                            rhat_g = fb->R;
                        } else {
                            ++out.flagged_components;
                        }
                    }
                    // Korn-Poincare projection of R^T y - id, then round back
                    const RegionNodes nodes = collect_nodes(f, cells);
                    std::vector<Vec2> disp(nodes.ids.size());
                    const Mat2 rt = rhat_g.transposed();
                    for (std::size_t q = 0; q < nodes.ids.size(); ++q)
                        disp[q] = rt * nodes.val[q] - nodes.pos[q];
                    const auto proj = project_infinitesimal_rigid(nodes.pos, disp);
                    const Mat2 rbar = rhat_g * Mat2::rotation(std::atan(proj.a));
                    Vec2 cbar{0.0, 0.0};
                    for (std::size_t q = 0; q < nodes.ids.size(); ++q)
                        cbar += nodes.val[q] - rbar * nodes.pos[q];
                    cbar *= 1.0 / static_cast<double>(nodes.ids.size());
                    motions[{bx, by, g}] = RigidMotion{rbar, cbar};
                    for (int c : cells) {
                        const int i = c % f.nx, j = c / f.nx;
                        if (tile.contains(i, j)) cell_comp[static_cast<std::size_t>(c)] = g;
                    }
                }
            }
    }

    // qualifying lambda squares (unshifted): coverage >= coverage_c * m * lambda^2
    out.maps.uj_cells.assign(static_cast<std::size_t>(f.cell_count()), 0);
    {
        const TileGrid tiles = TileGrid::make(side, 1, f.nx, f.ny);
        const double threshold = cfg.coverage_c * m * 0.25 * static_cast<double>(side) *
                                 static_cast<double>(side);
        for (int by = 0; by < tiles.tiles_y(); ++by)
            for (int bx = 0; bx < tiles.tiles_x(); ++bx) {
                const CellRect tile = tiles.tile_rect(bx, by);
                if (tile.empty()) continue;
                int covered = 0;
                for (int j = tile.y0; j < tile.y1; ++j)
                    for (int i = tile.x0; i < tile.x1; ++i)
                        if (out.set.mask()[static_cast<std::size_t>(j * f.nx + i)]) ++covered;
                if (covered == 0) continue;
                if (static_cast<double>(covered) >= threshold) {
                    for (int j = tile.y0; j < tile.y1; ++j)
                        for (int i = tile.x0; i < tile.x1; ++i)
                            out.maps.uj_cells[static_cast<std::size_t>(j * f.nx + i)] = 1;
                } else {
                    ++out.dropped_tiles;
                }
            }
    }

    // measured analogues of the per-square estimates
    double gamma = cell_energy(f, mask_cells(out.set));
    double delta2 = 0.0, delta4 = 0.0;
    {
        std::vector<double> d2t, d4t;
        for (int shift = 0; shift < 4; ++shift) {
            const auto& fits = rhat[static_cast<std::size_t>(shift)];
            for (int c = 0; c < f.cell_count(); ++c) {
                if (!out.set.mask()[static_cast<std::size_t>(c)]) continue;
                const int id = fits.fit_id[static_cast<std::size_t>(c)];
                if (id < 0) continue;
                if (auto g = gradient(f, c % f.nx, c / f.nx)) {
                    const double d2 = (*g - fits.rotation[static_cast<std::size_t>(id)]).frobenius2();
                    d2t.push_back(d2 * h2);
                    d4t.push_back(d2 * d2 * h2);
                }
            }
        }
        delta2 = pairwise_sum(d2t);
        delta4 = pairwise_sum(d4t);
    }
    const double star = set_norm(out.set, SetNorm::Star, {cfg.h_star});
    const double cm = std::pow(m, -cfg.z);
    out.ref_y2 = cm * cm * out.maps.lambda * out.maps.lambda * (gamma + delta2 + eps * star);
    out.ref_grad2 = cm * cm * (delta2 + gamma + delta4 + eps * star);

    for (int shift = 1; shift <= 4; ++shift) {
        std::vector<double> y2, g2, g4;
        for (int c = 0; c < f.cell_count(); ++c) {
            if (!out.set.mask()[static_cast<std::size_t>(c)]) continue;
            const int i = c % f.nx, j = c / f.nx;
            const RigidMotion* mo = out.maps.motion_at(shift, i, j);
            if (!mo) continue;
            const auto corners = f.corner_values(i, j);
            const Vec2 yc = 0.25 * (corners[0] + corners[1] + corners[2] + corners[3]);
            const Vec2 xc = f.cell_center(i, j);
            y2.push_back((yc - (*mo)(xc)).norm2() * h2);
            if (auto g = gradient(f, i, j)) {
                const double d2 = (*g - mo->R).frobenius2();
                g2.push_back(d2 * h2);
                g4.push_back(d2 * d2 * h2);
            }
        }
        out.dev_y2 = std::max(out.dev_y2, pairwise_sum(y2));
        out.dev_grad2 = std::max(out.dev_grad2, pairwise_sum(g2));
        out.dev_grad4 = std::max(out.dev_grad4, pairwise_sum(g4));
    }
    for (int j1 = 1; j1 <= 4; ++j1)
        for (int j2 = j1 + 1; j2 <= 4; ++j2) {
            std::vector<double> r2, m2;
            for (int c = 0; c < f.cell_count(); ++c) {
                if (!out.maps.uj_cells[static_cast<std::size_t>(c)]) continue;
                const int i = c % f.nx, j = c / f.nx;
                const RigidMotion* a = out.maps.motion_at(j1, i, j);
                const RigidMotion* b = out.maps.motion_at(j2, i, j);
                if (!a || !b) continue;
                r2.push_back((a->R - b->R).frobenius2() * h2);
                const Vec2 xc = f.cell_center(i, j);
                m2.push_back(((*a)(xc) - (*b)(xc)).norm2() * h2);
            }
            out.pair_rot2 = std::max(out.pair_rot2, pairwise_sum(r2));
            out.pair_motion2 = std::max(out.pair_motion2, pairwise_sum(m2));
        }
    return out;
}

namespace {

struct BlendContext {
    const DeformationField* f;
    const LocalMotionMaps* maps;
    double lambda_half;  // physical half-side of a lambda square
};

/// Partition-of-unity blend at x with the component context of cell (ci,cj).
/// Returns the value and accumulates missing (shift,tile) pairs.
Vec2 blend_value(const BlendContext& ctx, const Vec2& x, int ci, int cj,
                 std::set<std::tuple<int, int, int>>* missing) {
    double wsum = 0.0;
    Vec2 acc{0.0, 0.0};
    int present = 0;
    for (int shift = 1; shift <= 4; ++shift) {
        const auto& grid = ctx.maps->grids[static_cast<std::size_t>(shift - 1)];
        const auto [bx, by] = grid.tile_of(ci, cj);
        const RigidMotion* mo = ctx.maps->motion_at(shift, ci, cj);
        if (!mo) {
            if (missing) missing->insert({shift, bx, by});
            continue;
        }
        const CellRect full = grid.tile_rect_full(bx, by);
        const Vec2 center{ctx.f->origin.x + ctx.f->h * 0.5 * (full.x0 + full.x1),
                          ctx.f->origin.y + ctx.f->h * 0.5 * (full.y0 + full.y1)};
        const double ux = (x.x - center.x) / ctx.lambda_half;
        const double uy = (x.y - center.y) / ctx.lambda_half;
        const double wgt = cubic_bump(ux) * cubic_bump(uy);
        if (wgt <= 0.0) continue;
        wsum += wgt;
        acc += wgt * (*mo)(x);
        ++present;
    }
    if (wsum <= 1e-12 || present == 0) {
        const auto& grid = ctx.maps->grids[0];
        const auto [bx, by] = grid.tile_of(ci, cj);
        throw std::runtime_error("heal: no rigid motion covers the lambda square (" +
                                 std::to_string(bx) + "," + std::to_string(by) + ")");
    }
    return acc * (1.0 / wsum);
}

/// Analytic blend gradient at x (all four maps present), else empty.
std::optional<Mat2> blend_gradient(const BlendContext& ctx, const Vec2& x, int ci, int cj) {
    Mat2 acc;
    double wsum = 0.0;
    for (int shift = 1; shift <= 4; ++shift) {
        const auto& grid = ctx.maps->grids[static_cast<std::size_t>(shift - 1)];
        const auto [bx, by] = grid.tile_of(ci, cj);
        const RigidMotion* mo = ctx.maps->motion_at(shift, ci, cj);
        if (!mo) return std::nullopt;
        const CellRect full = grid.tile_rect_full(bx, by);
        const Vec2 center{ctx.f->origin.x + ctx.f->h * 0.5 * (full.x0 + full.x1),
                          ctx.f->origin.y + ctx.f->h * 0.5 * (full.y0 + full.y1)};
        const double ux = (x.x - center.x) / ctx.lambda_half;
        const double uy = (x.y - center.y) / ctx.lambda_half;
        const double wgt = cubic_bump(ux) * cubic_bump(uy);
        const Vec2 grad_w{cubic_bump_deriv(ux) * cubic_bump(uy) / ctx.lambda_half,
                          cubic_bump(ux) * cubic_bump_deriv(uy) / ctx.lambda_half};
        const Vec2 val = (*mo)(x);
        acc += wgt * mo->R;
        acc += Mat2{val.x * grad_w.x, val.x * grad_w.y, val.y * grad_w.x, val.y * grad_w.y};
        wsum += wgt;
    }
    if (std::abs(wsum - 1.0) > 1e-9) return std::nullopt;  // partial cover: fall back
    return acc;
}

}  // namespace

HealResult heal(const DeformationField& f, const GridSet& u, const LocalMotionMaps& maps,
                double lambda) {
    const GridSet healed = fill_holes(u, lambda);
    const auto& lat = healed.lattice();

    // context of every healed cell: itself when in U, else the nearest U cell
    std::vector<int> context(static_cast<std::size_t>(lat.cell_count()), -1);
    {
        std::deque<int> queue;
        for (int c = 0; c < lat.cell_count(); ++c)
            if (u.mask()[static_cast<std::size_t>(c)] &&
                healed.mask()[static_cast<std::size_t>(c)]) {
                context[static_cast<std::size_t>(c)] = c;
                queue.push_back(c);
            }
        while (!queue.empty()) {
            const int c = queue.front();
            queue.pop_front();
            const int a = c % lat.nx, b = c / lat.nx;
            struct Step {
                int da, db;
                EdgeKey e;
            };
            const Step steps[4] = {{0, -1, {0, a, b}},
                                   {0, 1, {0, a, b + 1}},
                                   {-1, 0, {1, a, b}},
                                   {1, 0, {1, a + 1, b}}};
            for (const auto& s : steps) {
                const int na = a + s.da, nb = b + s.db;
                if (!lat.in_range(na, nb)) continue;
                const int cc = lat.cell_id(na, nb);
                if (!healed.mask()[static_cast<std::size_t>(cc)] ||
                    context[static_cast<std::size_t>(cc)] >= 0)
                    continue;
                if (healed.is_cut(s.e)) continue;
                context[static_cast<std::size_t>(cc)] = context[static_cast<std::size_t>(c)];
                queue.push_back(cc);
            }
        }
    }

    const BlendContext ctx{&f, &maps, maps.lambda};
    std::set<std::tuple<int, int, int>> missing;

    HealResult out;
    out.field = f;
    out.field.jumps = JumpSet{};
    out.field.active.assign(static_cast<std::size_t>(f.cell_count()), 0);
    for (int c = 0; c < lat.cell_count(); ++c)
        if (healed.mask()[static_cast<std::size_t>(c)])
            out.field.active[static_cast<std::size_t>(c)] = 1;

    // nodal values: context = smallest adjacent healed cell
    std::vector<int> node_ctx(static_cast<std::size_t>(f.node_count()), -1);
    for (int c = 0; c < lat.cell_count(); ++c) {
        if (!healed.mask()[static_cast<std::size_t>(c)]) continue;
        const int i = c % f.nx, j = c / f.nx;
        const int ns[4] = {f.node_id(i, j), f.node_id(i + 1, j), f.node_id(i, j + 1),
                           f.node_id(i + 1, j + 1)};
        for (int nid : ns)
            if (node_ctx[static_cast<std::size_t>(nid)] < 0)
                node_ctx[static_cast<std::size_t>(nid)] = c;
    }
    for (int nid = 0; nid < f.node_count(); ++nid) {
        const int c = node_ctx[static_cast<std::size_t>(nid)];
        if (c < 0) continue;
        const int ci = c % f.nx, cj = c / f.nx;
        const int src = context[static_cast<std::size_t>(c)];
        const int si = src % f.nx, sj = src / f.nx;
        const Vec2 x = f.node_pos(nid % (f.nx + 1), nid / (f.nx + 1));
        (void)ci;
        (void)cj;
        out.field.values[static_cast<std::size_t>(nid)] = blend_value(ctx, x, si, sj, &missing);
    }

    // retained cuts carry one-sided blended traces
    for (const auto& e : healed.cut_edges()) {
        JumpEdge je;
        je.edge = e;
        int lo_cell, hi_cell;
        Vec2 p0, p1;
        if (e.orient == 0) {
            lo_cell = lat.cell_id(e.i, e.j - 1);
            hi_cell = lat.cell_id(e.i, e.j);
            p0 = f.node_pos(e.i, e.j);
            p1 = f.node_pos(e.i + 1, e.j);
        } else {
            lo_cell = lat.cell_id(e.i - 1, e.j);
            hi_cell = lat.cell_id(e.i, e.j);
            p0 = f.node_pos(e.i, e.j);
            p1 = f.node_pos(e.i, e.j + 1);
        }
        const int lo_src = context[static_cast<std::size_t>(lo_cell)];
        const int hi_src = context[static_cast<std::size_t>(hi_cell)];
        je.lo0 = blend_value(ctx, p0, lo_src % f.nx, lo_src / f.nx, &missing);
        je.lo1 = blend_value(ctx, p1, lo_src % f.nx, lo_src / f.nx, &missing);
        je.hi0 = blend_value(ctx, p0, hi_src % f.nx, hi_src / f.nx, &missing);
        je.hi1 = blend_value(ctx, p1, hi_src % f.nx, hi_src / f.nx, &missing);
        out.field.jumps.insert(je);
    }
    out.healed_set = healed;
    out.missing_squares = static_cast<int>(missing.size());

    // metrics
    const double h2 = f.h * f.h;
    std::vector<double> dist_terms, move_terms, grad_terms;
    for (int c = 0; c < lat.cell_count(); ++c) {
        const int i = c % f.nx, j = c / f.nx;
        if (healed.mask()[static_cast<std::size_t>(c)]) {
            const int src = context[static_cast<std::size_t>(c)];
            std::optional<Mat2> g = blend_gradient(ctx, f.cell_center(i, j), src % f.nx, src / f.nx);
            if (!g) g = gradient_one_sided(out.field, i, j);
            if (g) {
                const double d = dist_to_SO2(*g);
                dist_terms.push_back(d * d * h2);
            }
        }
        if (u.mask()[static_cast<std::size_t>(c)] && healed.mask()[static_cast<std::size_t>(c)]) {
            const auto before = f.corner_values(i, j);
            const auto after = out.field.corner_values(i, j);
            double acc = 0.0;
            for (int q = 0; q < 4; ++q) acc += (after[static_cast<std::size_t>(q)] -
                                                before[static_cast<std::size_t>(q)])
                                                   .norm2();
            move_terms.push_back(0.25 * acc * h2);
            const auto gy = gradient_one_sided(f, i, j);
            const int src = context[static_cast<std::size_t>(c)];
            std::optional<Mat2> gt = blend_gradient(ctx, f.cell_center(i, j), src % f.nx, src / f.nx);
            if (!gt) gt = gradient_one_sided(out.field, i, j);
            if (gy && gt) grad_terms.push_back((*gt - *gy).frobenius2() * h2);
        }
    }
    out.dist2 = pairwise_sum(dist_terms);
    out.move2 = pairwise_sum(move_terms);
    out.grad_move2 = pairwise_sum(grad_terms);
    return out;
}

SubatomisticResult subatomistic_fit(const DeformationField& f, const GridSet& u, double k,
                                    double eps, double grad_bound) {
    (void)grad_bound;
    SubatomisticResult out;
    const int side = static_cast<int>(std::lround(2.0 * k / f.h));
    if (side <= 2) {
        out.regime_flag = true;  // crack spacing below the grid: defer to carving
        return out;
    }
    const TileGrid tiles = TileGrid::make(side, 1, f.nx, f.ny);
    std::vector<double> curl_terms, lhs_terms;

    for (int by = 0; by < tiles.tiles_y(); ++by)
        for (int bx = 0; bx < tiles.tiles_x(); ++bx) {
            const CellRect rect = tiles.tile_rect(bx, by);
            if (rect.empty()) continue;
            const int wx = rect.width(), wy = rect.height();
            const int nn = (wx + 1) * (wy + 1);
            auto nid = [&](int i, int j) { return (j - rect.y0) * (wx + 1) + (i - rect.x0); };

            // identity extension: one-sided values on U, positions elsewhere
            std::vector<Vec2> vbar(static_cast<std::size_t>(nn));
            {
                std::vector<int> node_src(static_cast<std::size_t>(nn), -1);
                for (int j = rect.y0; j < rect.y1; ++j)
                    for (int i = rect.x0; i < rect.x1; ++i) {
                        if (!u.mask()[static_cast<std::size_t>(j * f.nx + i)]) continue;
                        const int corners[4][2] = {{i, j}, {i + 1, j}, {i, j + 1}, {i + 1, j + 1}};
                        const auto vals = f.corner_values(i, j);
                        for (int q = 0; q < 4; ++q) {
                            const int id = nid(corners[q][0], corners[q][1]);
                            if (node_src[static_cast<std::size_t>(id)] < 0) {
                                node_src[static_cast<std::size_t>(id)] = 1;
                                vbar[static_cast<std::size_t>(id)] = vals[static_cast<std::size_t>(q)];
                            }
                        }
                    }
                for (int j = rect.y0; j <= rect.y1; ++j)
                    for (int i = rect.x0; i <= rect.x1; ++i)
                        if (node_src[static_cast<std::size_t>(nid(i, j))] < 0)
                            vbar[static_cast<std::size_t>(nid(i, j))] = f.node_pos(i, j);
            }

            // per-cell target gradients: y's one-sided gradient on U, Id off U
            std::vector<Mat2> G(static_cast<std::size_t>(wx * wy), Mat2::identity());
            for (int j = rect.y0; j < rect.y1; ++j)
                for (int i = rect.x0; i < rect.x1; ++i)
                    if (u.mask()[static_cast<std::size_t>(j * f.nx + i)])
                        if (auto g = gradient_one_sided(f, i, j))
                            G[static_cast<std::size_t>((j - rect.y0) * wx + (i - rect.x0))] = *g;

            // curl of the piecewise target field (vertices interior to the tile)
            for (int j = rect.y0 + 1; j < rect.y1; ++j)
                for (int i = rect.x0 + 1; i < rect.x1; ++i) {
                    auto at = [&](int ci, int cj) {
                        return G[static_cast<std::size_t>((cj - rect.y0) * wx + (ci - rect.x0))];
                    };
                    const Mat2 sw = at(i - 1, j - 1), se = at(i, j - 1), nw = at(i - 1, j),
                               ne = at(i, j);
                    Vec2 circ{0.0, 0.0};
                    const double half = 0.5 * f.h;
                    for (int row = 0; row < 2; ++row) {
                        double cval = 0.0;
                        cval += half * (sw(row, 0) + se(row, 0));
                        cval += half * (se(row, 1) + ne(row, 1));
                        cval -= half * (ne(row, 0) + nw(row, 0));
                        cval -= half * (nw(row, 1) + sw(row, 1));
                        if (row == 0)
                            circ.x = cval;
                        else
                            circ.y = cval;
                    }
                    curl_terms.push_back(circ.norm());
                }

            // least-squares potential: minimize sum_cells |D psi - G|^2
            auto apply_D = [&](const std::vector<Vec2>& w, int ci, int cj) {
                const Vec2 swv = w[static_cast<std::size_t>(nid(ci, cj))];
                const Vec2 sev = w[static_cast<std::size_t>(nid(ci + 1, cj))];
                const Vec2 nwv = w[static_cast<std::size_t>(nid(ci, cj + 1))];
                const Vec2 nev = w[static_cast<std::size_t>(nid(ci + 1, cj + 1))];
                const double inv = 1.0 / (2.0 * f.h);
                const Vec2 gx = (sev + nev - swv - nwv) * inv;
                const Vec2 gy = (nwv + nev - swv - sev) * inv;
                return Mat2{gx.x, gy.x, gx.y, gy.y};
            };
            auto apply_Dt = [&](const std::vector<Mat2>& g, std::vector<Vec2>& outv) {
                std::fill(outv.begin(), outv.end(), Vec2{0.0, 0.0});
                const double inv = 1.0 / (2.0 * f.h);
                for (int cj = rect.y0; cj < rect.y1; ++cj)
                    for (int ci = rect.x0; ci < rect.x1; ++ci) {
                        const Mat2& m = g[static_cast<std::size_t>((cj - rect.y0) * wx +
                                                                   (ci - rect.x0))];
                        for (int row = 0; row < 2; ++row) {
                            const double cx = m(row, 0) * inv, cy = m(row, 1) * inv;
                            auto& swv = outv[static_cast<std::size_t>(nid(ci, cj))];
                            auto& sev = outv[static_cast<std::size_t>(nid(ci + 1, cj))];
                            auto& nwv = outv[static_cast<std::size_t>(nid(ci, cj + 1))];
                            auto& nev = outv[static_cast<std::size_t>(nid(ci + 1, cj + 1))];
                            auto upd = [&](Vec2& v, double val) {
                                if (row == 0)
                                    v.x += val;
                                else
                                    v.y += val;
                            };
                            upd(swv, -cx - cy);
                            upd(sev, cx - cy);
                            upd(nwv, -cx + cy);
                            upd(nev, cx + cy);
                        }
                    }
            };

            std::vector<Vec2> psi = vbar, b(static_cast<std::size_t>(nn)), r(static_cast<std::size_t>(nn)),
                              p(static_cast<std::size_t>(nn)), ap(static_cast<std::size_t>(nn));
            std::vector<Mat2> tmp(static_cast<std::size_t>(wx * wy));
            apply_Dt(G, b);
            auto apply_A = [&](const std::vector<Vec2>& w, std::vector<Vec2>& outv) {
                for (int cj = rect.y0; cj < rect.y1; ++cj)
                    for (int ci = rect.x0; ci < rect.x1; ++ci)
                        tmp[static_cast<std::size_t>((cj - rect.y0) * wx + (ci - rect.x0))] =
                            apply_D(w, ci, cj);
                apply_Dt(tmp, outv);
            };
            auto dot = [&](const std::vector<Vec2>& a, const std::vector<Vec2>& b2) {
                std::vector<double> terms(a.size());
                for (std::size_t q = 0; q < a.size(); ++q) terms[q] = a[q].dot(b2[q]);
                return pairwise_sum(terms);
            };
            apply_A(psi, ap);
            for (std::size_t q = 0; q < r.size(); ++q) r[q] = b[q] - ap[q];
            double rr = dot(r, r);
            const double tol2 = 1e-20 * std::max(dot(b, b), 1e-300);
            p = r;
            int it = 0;
            const int budget = 10 * nn + 16;
            while (rr > tol2 && it < budget) {
                apply_A(p, ap);
                const double pap = dot(p, ap);
                if (pap <= 0.0) break;
                const double alpha = rr / pap;
                for (std::size_t q = 0; q < psi.size(); ++q) {
                    psi[q] += alpha * p[q];
                    r[q] -= alpha * ap[q];
                }
                const double rr2 = dot(r, r);
                const double beta = rr2 / rr;
                rr = rr2;
                for (std::size_t q = 0; q < p.size(); ++q) p[q] = r[q] + beta * p[q];
                ++it;
            }
            out.solver_iterations += it;

            // rotation fit on the repaired gradients
            Mat2 sum;
            for (int cj = rect.y0; cj < rect.y1; ++cj)
                for (int ci = rect.x0; ci < rect.x1; ++ci) sum += apply_D(psi, ci, cj);
            const Mat2 rot = polar_rotation(sum);
            out.rotations[{bx, by}] = rot;

            const double h2 = f.h * f.h;
            for (int cj = rect.y0; cj < rect.y1; ++cj)
                for (int ci = rect.x0; ci < rect.x1; ++ci) {
                    if (!u.mask()[static_cast<std::size_t>(cj * f.nx + ci)]) continue;
                    if (auto g = gradient_one_sided(f, ci, cj))
                        lhs_terms.push_back((*g - rot).frobenius2() * h2);
                }
        }

    out.curl_total = pairwise_sum(curl_terms);
    out.bound_lhs = pairwise_sum(lhs_terms);
    out.bound_rhs = cell_energy(f, mask_cells(u)) + eps * set_norm(u, SetNorm::Star, {});
    return out;
}

IterateResult iterate(const DeformationField& f, const GridSet& omega_y0,
                      const EngineConfig& cfg_in) {
    const auto& lat0 = omega_y0.lattice();
    if (lat0.nx != f.nx || lat0.ny != f.ny ||
        std::abs(lat0.spacing - 0.5 * f.h) > 1e-12 * f.h)
        throw std::invalid_argument("iterate: grid set lattice does not match the field grid");

    EngineConfig cfg = cfg_in;
    cfg.base_star_norm =
        std::max(set_norm(omega_y0, SetNorm::Star, {cfg.h_star}), 1e-6);
    const ScaleSchedule sched = make_schedule(cfg);

    IterateResult out;
    out.field = f;
    out.set = omega_y0;
    out.initial_cells = omega_y0.active_cells();

    const double extent = std::min(f.nx, f.ny) * f.h;
    const double log_eps_total = std::log(cfg.eps);
    const double omega = cfg.omega_value();
    const double band_lo = 4.0 * omega * log_eps_total;  // log eps^{4 omega}

    int j0 = -1;
    for (const auto& st : sched.steps) {
        if (st.log_s < std::log(4.0 * f.h) - 1e-9) continue;
        if (st.d_floor < 2) continue;
        if (!(st.log_k <= std::log(extent / 12.0))) continue;
        j0 = st.j;
        break;
    }
    out.start_j = j0;
    if (j0 < 0) {
        out.stop_reason = "no executable scale: schedule scales and the grid do not overlap";
        return out;
    }

    double prev_lambda = 0.0;
    for (int j = j0; j < static_cast<int>(sched.steps.size()); ++j) {
        const auto& st = sched.steps[static_cast<std::size_t>(j)];
        if (out.steps_run >= cfg.max_steps) {
            out.stop_reason = "max steps reached";
            break;
        }
        if (st.log_s >= band_lo) {
            out.band_reached = true;
            out.stop_reason = "terminal scale band reached";
            break;
        }
        if (!(st.log_k <= std::log(extent / 12.0))) {
            out.stop_reason = "analysis scale exceeds the grid";
            break;
        }
        if (st.d_floor < 2) {
            out.stop_reason = "schedule stalled (d_j < 2)";
            break;
        }
        const double k = st.k();
        const double lambda = st.lambda();
        const double eps_j = st.eps_j();
        const double m_j = cfg.m > 0.0 ? cfg.m : st.t_j;

        const GridSet& w_set = out.set;
        const DeformationField& y = out.field;

        StepRecord rec;
        rec.j = j;
        rec.s = st.s();
        rec.eps = eps_j;
        rec.k = k;
        rec.lambda = lambda;
        rec.gamma = cell_energy(y, mask_cells(w_set));
        rec.alpha = cell_energy_L4(y, CellRect{0, 0, f.nx, f.ny});
        rec.beta = set_norm(prev_lambda > 0.0 ? fill_holes(w_set, prev_lambda) : w_set,
                            SetNorm::Star, {cfg.h_star});
        const double star_prev = set_norm(w_set, SetNorm::Star, {cfg.h_star});

        // harmonic split per connected component
        DeformationField wf = y;
        {
            const auto labels = mask_component_labels(w_set);
            const int ncomp = 1 + *std::max_element(labels.begin(), labels.end());
            std::vector<std::vector<int>> comps(static_cast<std::size_t>(std::max(ncomp, 0)));
            for (int c = 0; c < static_cast<int>(labels.size()); ++c)
                if (labels[static_cast<std::size_t>(c)] >= 0)
                    comps[static_cast<std::size_t>(labels[static_cast<std::size_t>(c)])].push_back(c);
            for (const auto& cells : comps) {
                if (cells.empty()) continue;
                const HarmonicSplit hs = harmonic_split(y, cells);
                const RegionNodes nodes = collect_nodes(y, cells);
                for (int nid : nodes.ids)
                    wf.values[static_cast<std::size_t>(nid)] =
                        hs.w.values[static_cast<std::size_t>(nid)];
            }
        }

        auto pr = piecewise_rotation_map(wf, w_set, k, m_j, eps_j);
        rec.delta2 = pr.delta2;
        rec.delta4 = pr.delta4;

        auto lm = local_rigid_motion_map(wf, pr.set, k, m_j, eps_j, pr.fits, cfg);
        rec.dropped_tiles = lm.dropped_tiles;

        auto hl = heal(y, lm.set, lm.maps, lambda);
        rec.heal_dist2 = hl.dist2;
        rec.heal_move2 = hl.move2;
        rec.heal_grad_move2 = hl.grad_move2;

        GridSet next = merge_small_components(hl.healed_set, k, 0.0, 2);
        rec.carved_cells = std::max(0, w_set.active_cells() - lm.set.active_cells());
        out.carved_cells_total += rec.carved_cells;
        rec.star_norm = set_norm(next, SetNorm::Star, {cfg.h_star});

        const double budget =
            (1.0 + cfg.budget_c1 * st.t_j) * star_prev + cfg.budget_c * rec.gamma / eps_j + 1e-12;
        if (rec.star_norm > budget) {
            out.violations.push_back(
                "step " + std::to_string(j) +
                ": star norm growth exceeds (1+C1 t_j) |W|_* + C gamma/eps (measured " +
                std::to_string(rec.star_norm) + " > budget " + std::to_string(budget) + ")");
            out.trace.push_back(rec);
            out.stop_reason = "budget violation";
            break;
        }

        out.field = std::move(hl.field);
        out.set = std::move(next);
        out.trace.push_back(rec);
        prev_lambda = lambda;
        ++out.steps_run;
    }
    if (out.stop_reason.empty())
        out.stop_reason = out.steps_run > 0 ? "schedule exhausted" : "no steps executed";
    out.final_cells = out.set.active_cells();
    return out;
}

}  // namespace rigidity
