#include "rigidity/grid_set.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <stdexcept>

namespace rigidity {

namespace {

using EdgeVec = std::vector<EdgeKey>;

EdgeVec sorted_unique(EdgeVec v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

EdgeVec edge_difference(const EdgeVec& a, const EdgeVec& b) {
    EdgeVec r;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r));
    return r;
}

EdgeVec edge_union(const EdgeVec& a, const EdgeVec& b) {
    EdgeVec r;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r));
    return r;
}

bool edge_on_border(const EdgeKey& e, const Lattice& lat) {
    if (e.orient == 0) return e.j == 0 || e.j == lat.ny;
    return e.i == 0 || e.i == lat.nx;
}

/// Cells adjacent to an edge; out-of-range ids are -1.
std::pair<int, int> edge_cells(const EdgeKey& e, const Lattice& lat) {
    if (e.orient == 0) {
        const int below = (e.j > 0 && e.i < lat.nx) ? lat.cell_id(e.i, e.j - 1) : -1;
        const int above = (e.j < lat.ny && e.i < lat.nx) ? lat.cell_id(e.i, e.j) : -1;
        return {below, above};
    }
    const int left = (e.i > 0 && e.j < lat.ny) ? lat.cell_id(e.i - 1, e.j) : -1;
    const int right = (e.i < lat.nx && e.j < lat.ny) ? lat.cell_id(e.i, e.j) : -1;
    return {left, right};
}

/// Vertex ids of an edge's endpoints on the (nx+1) x (ny+1) corner grid.
std::pair<int, int> edge_vertices(const EdgeKey& e, const Lattice& lat) {
    const int w = lat.nx + 1;
    if (e.orient == 0) return {e.j * w + e.i, e.j * w + e.i + 1};
    return {e.j * w + e.i, (e.j + 1) * w + e.i};
}

/// Edge lies in the closed rectangle [x0,x1] x [y0,y1] of cells.
bool edge_in_closed_rect(const EdgeKey& e, const CellRect& r) {
    if (e.orient == 0) return e.i >= r.x0 && e.i < r.x1 && e.j >= r.y0 && e.j <= r.y1;
    return e.i >= r.x0 && e.i <= r.x1 && e.j >= r.y0 && e.j < r.y1;
}

bool edge_adjacent_to_cells(const EdgeKey& e, const std::vector<std::uint8_t>& in_set,
                            const Lattice& lat) {
    const auto [a, b] = edge_cells(e, lat);
    return (a >= 0 && in_set[a]) || (b >= 0 && in_set[b]);
}

struct Projections {
    double px = 0.0, py = 0.0;
};

/// Measure of the axis projections of an edge set: horizontal edges cover
/// x-columns, vertical edges cover y-rows.
Projections edge_projections(const EdgeVec& boundary, const EdgeVec& slit, const Lattice& lat) {
    std::vector<std::uint8_t> cols(static_cast<std::size_t>(lat.nx) + 1, 0);
    std::vector<std::uint8_t> rows(static_cast<std::size_t>(lat.ny) + 1, 0);
    auto mark = [&](const EdgeKey& e) {
        if (e.orient == 0)
            cols[static_cast<std::size_t>(e.i)] = 1;
        else
            rows[static_cast<std::size_t>(e.j)] = 1;
    };
    for (const auto& e : boundary) mark(e);
    for (const auto& e : slit) mark(e);
    const double len = 2.0 * lat.spacing;
    Projections p;
    for (auto c : cols) p.px += c ? len : 0.0;
    for (auto r : rows) p.py += r ? len : 0.0;
    return p;
}

double infty_of(const BoundaryComponent& c, const Lattice& lat) {
    const auto p = edge_projections(c.boundary, c.slit, lat);
    return std::hypot(p.px, p.py);
}

/// theta/border bookkeeping shared by every constructor path. `comps` carry
/// cells/boundary/slit; ordering indexes comps with interior components first.
GridSet finalize(const Lattice& lat, std::vector<std::uint8_t> mask,
                 std::vector<BoundaryComponent> comps, std::vector<int> ordering,
                 std::vector<EdgeKey> cuts) {
    for (auto& c : comps) {
        c.touches_border = false;
        for (const auto& e : c.boundary)
            if (edge_on_border(e, lat)) {
                c.touches_border = true;
                break;
            }
    }
    // stable partition: interior components first, preserving relative order
    std::vector<int> interior, border;
    for (int idx : ordering) {
        if (comps[static_cast<std::size_t>(idx)].touches_border)
            border.push_back(idx);
        else
            interior.push_back(idx);
    }
    ordering.clear();
    ordering.insert(ordering.end(), interior.begin(), interior.end());
    ordering.insert(ordering.end(), border.begin(), border.end());

    EdgeVec seen;
    for (int idx : ordering) {
        auto& c = comps[static_cast<std::size_t>(idx)];
        c.theta_boundary = edge_difference(c.boundary, seen);
        c.theta_slit = edge_difference(c.slit, seen);
        seen = edge_union(seen, edge_union(c.boundary, c.slit));
    }
    return GridSet(lat, std::move(mask), std::move(comps), std::move(ordering), std::move(cuts));
}

int lex_min_cell(const BoundaryComponent& c) {
    if (!c.cells.empty()) return c.cells.front();
    return c.slit.empty() ? 0 : c.slit.front().j * 1000000 + c.slit.front().i;
}

std::vector<int> canonical_interior_order(const std::vector<BoundaryComponent>& comps,
                                          const Lattice& lat) {
    std::vector<int> order(comps.size());
    for (std::size_t i = 0; i < comps.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double da = infty_of(comps[static_cast<std::size_t>(a)], lat);
        const double db = infty_of(comps[static_cast<std::size_t>(b)], lat);
        if (da != db) return da > db;
        return lex_min_cell(comps[static_cast<std::size_t>(a)]) <
               lex_min_cell(comps[static_cast<std::size_t>(b)]);
    });
    return order;
}

}  // namespace

GridSet::GridSet(Lattice lat, std::vector<std::uint8_t> mask, std::vector<BoundaryComponent> comps,
                 std::vector<int> ordering, std::vector<EdgeKey> cuts)
    : lat_(lat),
      mask_(std::move(mask)),
      comps_(std::move(comps)),
      ordering_(std::move(ordering)),
      cuts_(std::move(cuts)) {}

bool GridSet::is_cut(const EdgeKey& e) const {
    return std::binary_search(cuts_.begin(), cuts_.end(), e);
}

int GridSet::active_cells() const {
    int n = 0;
    for (auto m : mask_) n += m ? 1 : 0;
    return n;
}

std::vector<EdgeKey> boundary_edges(std::span<const int> cells, const Lattice& lat) {
    std::vector<std::uint8_t> in_set(static_cast<std::size_t>(lat.cell_count()), 0);
    for (int c : cells) in_set[static_cast<std::size_t>(c)] = 1;
    EdgeVec edges;
    for (int c : cells) {
        const int a = c % lat.nx, b = c / lat.nx;
        auto outside = [&](int aa, int bb) {
            return !lat.in_range(aa, bb) || !in_set[static_cast<std::size_t>(lat.cell_id(aa, bb))];
        };
        if (outside(a, b - 1)) edges.push_back({0, a, b});
        if (outside(a, b + 1)) edges.push_back({0, a, b + 1});
        if (outside(a - 1, b)) edges.push_back({1, a, b});
        if (outside(a + 1, b)) edges.push_back({1, a + 1, b});
    }
    return sorted_unique(std::move(edges));
}

GridSet extract_components(const std::vector<std::uint8_t>& mask, const Lattice& ambient,
                           std::vector<EdgeKey> cuts) {
    if (static_cast<int>(mask.size()) != ambient.cell_count())
        throw std::invalid_argument("extract_components: mask size does not match lattice extent");

    // keep only cuts strictly interior to the mask
    EdgeVec live_cuts;
    for (const auto& e : sorted_unique(std::move(cuts))) {
        const auto [a, b] = edge_cells(e, ambient);
        if (a >= 0 && b >= 0 && mask[static_cast<std::size_t>(a)] && mask[static_cast<std::size_t>(b)])
            live_cuts.push_back(e);
    }

    std::vector<BoundaryComponent> comps;

    // complement components, 4-connected, row-major seeds
    const int n = ambient.cell_count();
    std::vector<int> label(static_cast<std::size_t>(n), -1);
    for (int seed = 0; seed < n; ++seed) {
        if (mask[static_cast<std::size_t>(seed)] || label[static_cast<std::size_t>(seed)] >= 0)
            continue;
        const int id = static_cast<int>(comps.size());
        std::deque<int> queue{seed};
        label[static_cast<std::size_t>(seed)] = id;
        std::vector<int> cells;
        while (!queue.empty()) {
            const int c = queue.front();
            queue.pop_front();
            cells.push_back(c);
            const int a = c % ambient.nx, b = c / ambient.nx;
            const int na[4] = {a, a, a - 1, a + 1};
            const int nb[4] = {b - 1, b + 1, b, b};
            for (int k = 0; k < 4; ++k) {
                if (!ambient.in_range(na[k], nb[k])) continue;
                const int cc = ambient.cell_id(na[k], nb[k]);
                if (mask[static_cast<std::size_t>(cc)] || label[static_cast<std::size_t>(cc)] >= 0)
                    continue;
                label[static_cast<std::size_t>(cc)] = id;
                queue.push_back(cc);
            }
        }
        std::sort(cells.begin(), cells.end());
        BoundaryComponent comp;
        comp.boundary = boundary_edges(cells, ambient);
        comp.cells = std::move(cells);
        comps.push_back(std::move(comp));
    }

    // slit components: vertex-connected groups of cut edges
    if (!live_cuts.empty()) {
        std::map<int, std::vector<std::size_t>> by_vertex;
        for (std::size_t i = 0; i < live_cuts.size(); ++i) {
            const auto [v0, v1] = edge_vertices(live_cuts[i], ambient);
            by_vertex[v0].push_back(i);
            by_vertex[v1].push_back(i);
        }
        std::vector<int> egroup(live_cuts.size(), -1);
        for (std::size_t seed = 0; seed < live_cuts.size(); ++seed) {
            if (egroup[seed] >= 0) continue;
            const int id = static_cast<int>(comps.size());
            std::deque<std::size_t> queue{seed};
            egroup[seed] = id;
            EdgeVec edges;
            while (!queue.empty()) {
                const std::size_t e = queue.front();
                queue.pop_front();
                edges.push_back(live_cuts[e]);
                const auto [v0, v1] = edge_vertices(live_cuts[e], ambient);
                for (int v : {v0, v1})
                    for (std::size_t o : by_vertex[v])
                        if (egroup[o] < 0) {
                            egroup[o] = id;
                            queue.push_back(o);
                        }
            }
            BoundaryComponent comp;
            comp.slit = sorted_unique(std::move(edges));
            comps.push_back(std::move(comp));
        }
    }

    auto ordering = canonical_interior_order(comps, ambient);
    return finalize(ambient, mask, std::move(comps), std::move(ordering), std::move(live_cuts));
}

GridSet full_set(const Lattice& lat, std::vector<EdgeKey> cuts) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(lat.cell_count()), 1);
    return extract_components(mask, lat, std::move(cuts));
}

double measure_infty(const GridSet& w, int comp) {
    return infty_of(w.components()[static_cast<std::size_t>(comp)], w.lattice());
}

double measure_hausdorff_gamma(const GridSet& w, int comp) {
    const auto& c = w.components()[static_cast<std::size_t>(comp)];
    const double len = 2.0 * w.lattice().spacing;
    return len * (static_cast<double>(c.boundary.size()) + 2.0 * static_cast<double>(c.slit.size()));
}

double measure_hausdorff_theta(const GridSet& w, int comp) {
    const auto& c = w.components()[static_cast<std::size_t>(comp)];
    const double len = 2.0 * w.lattice().spacing;
    return len * (static_cast<double>(c.theta_boundary.size()) +
                  2.0 * static_cast<double>(c.theta_slit.size()));
}

double measure_star(const GridSet& w, int comp, const StarMeasureConfig& cfg) {
    return cfg.h_star * measure_hausdorff_theta(w, comp) +
           (1.0 - cfg.h_star) * measure_infty(w, comp);
}

double set_norm(const GridSet& w, SetNorm kind, const StarMeasureConfig& cfg) {
    std::vector<double> terms;
    for (int idx : w.ordering()) {
        const auto& c = w.components()[static_cast<std::size_t>(idx)];
        if (c.touches_border || c.empty()) continue;
        switch (kind) {
            case SetNorm::Infty: terms.push_back(measure_infty(w, idx)); break;
            case SetNorm::Hausdorff: terms.push_back(measure_hausdorff_theta(w, idx)); break;
            case SetNorm::Star: terms.push_back(measure_star(w, idx, cfg)); break;
        }
    }
    return pairwise_sum(terms);
}

GridSet fill_holes(const GridSet& w, double threshold) {
    const auto& lat = w.lattice();
    std::vector<std::uint8_t> mask = w.mask();
    std::vector<BoundaryComponent> comps;
    std::vector<int> remap(w.components().size(), -1);
    for (std::size_t i = 0; i < w.components().size(); ++i) {
        const auto& c = w.components()[i];
        const bool absorb =
            !c.touches_border && !c.empty() && infty_of(c, lat) <= threshold;
        if (absorb) {
            for (int cell : c.cells) mask[static_cast<std::size_t>(cell)] = 1;
        } else {
            remap[i] = static_cast<int>(comps.size());
            comps.push_back(c);
        }
    }
    EdgeVec cuts;
    for (const auto& c : comps)
        for (const auto& e : c.slit) cuts.push_back(e);
    cuts = sorted_unique(std::move(cuts));

    std::vector<int> ordering;
    for (int idx : w.ordering())
        if (remap[static_cast<std::size_t>(idx)] >= 0)
            ordering.push_back(remap[static_cast<std::size_t>(idx)]);
    return finalize(lat, std::move(mask), std::move(comps), std::move(ordering), std::move(cuts));
}

GridSet subtract_and_mark(const GridSet& w, const CellRect& v) {
    const auto& lat = w.lattice();
    const CellRect r = v.clipped(lat.nx, lat.ny);
    if (r.empty()) return w;
    if (!(r == v) && !(v.clipped(lat.nx, lat.ny) == v))
        throw std::invalid_argument("subtract_and_mark: V is not cell-aligned within the lattice");

    std::vector<std::uint8_t> mask = w.mask();
    std::vector<std::uint8_t> in_v(static_cast<std::size_t>(lat.cell_count()), 0);
    std::vector<int> vcells = rect_cells(r, lat.nx);
    for (int c : vcells) {
        mask[static_cast<std::size_t>(c)] = 0;
        in_v[static_cast<std::size_t>(c)] = 1;
    }

    std::vector<BoundaryComponent> comps;
    BoundaryComponent nu;
    nu.cells = vcells;
    nu.boundary = boundary_edges(vcells, lat);
    comps.push_back(std::move(nu));

    std::vector<int> remap(w.components().size(), -1);
    for (std::size_t i = 0; i < w.components().size(); ++i) {
        const auto& c = w.components()[i];
        BoundaryComponent out;
        for (int cell : c.cells)
            if (!in_v[static_cast<std::size_t>(cell)]) out.cells.push_back(cell);
        for (const auto& e : c.slit)
            if (!edge_in_closed_rect(e, r)) out.slit.push_back(e);
        if (out.cells.empty() && out.slit.empty()) continue;
        out.boundary = boundary_edges(out.cells, lat);
        remap[i] = static_cast<int>(comps.size());
        comps.push_back(std::move(out));
    }

    EdgeVec cuts;
    for (const auto& e : w.cut_edges())
        if (!edge_in_closed_rect(e, r)) cuts.push_back(e);

    std::vector<int> ordering{0};
    for (int idx : w.ordering())
        if (remap[static_cast<std::size_t>(idx)] >= 0)
            ordering.push_back(remap[static_cast<std::size_t>(idx)]);
    return finalize(lat, std::move(mask), std::move(comps), std::move(ordering), std::move(cuts));
}

namespace {

std::vector<int> gamma_vertices(const BoundaryComponent& c, const Lattice& lat) {
    std::vector<int> vs;
    auto add = [&](const EdgeKey& e) {
        const auto [v0, v1] = edge_vertices(e, lat);
        vs.push_back(v0);
        vs.push_back(v1);
    };
    for (const auto& e : c.boundary) add(e);
    for (const auto& e : c.slit) add(e);
    std::sort(vs.begin(), vs.end());
    vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
    return vs;
}

bool share_vertex(const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) return true;
        if (a[i] < b[j])
            ++i;
        else
            ++j;
    }
    return false;
}

BoundaryComponent merge_two(const BoundaryComponent& a, const BoundaryComponent& b,
                            const Lattice& lat) {
    BoundaryComponent m;
    m.cells.reserve(a.cells.size() + b.cells.size());
    std::set_union(a.cells.begin(), a.cells.end(), b.cells.begin(), b.cells.end(),
                   std::back_inserter(m.cells));
    m.boundary = boundary_edges(m.cells, lat);
    EdgeVec slits = edge_union(a.slit, b.slit);
    m.slit = edge_difference(slits, m.boundary);
    return m;
}

}  // namespace

GridSet merge_small_components(const GridSet& w, double k, double t, int part) {
    (void)t;  // class bound 2(t+k) on the output is the caller's concern
    const auto& lat = w.lattice();
    std::vector<BoundaryComponent> comps;
    for (int idx : w.ordering()) comps.push_back(w.components()[static_cast<std::size_t>(idx)]);

    auto pass = [&](bool both_small) {
        bool changed = true;
        while (changed) {
            changed = false;
            std::vector<std::vector<int>> verts(comps.size());
            std::vector<double> size(comps.size());
            for (std::size_t i = 0; i < comps.size(); ++i) {
                verts[i] = gamma_vertices(comps[i], lat);
                size[i] = infty_of(comps[i], lat);
            }
            for (std::size_t i = 0; i < comps.size() && !changed; ++i) {
                if (comps[i].touches_border) continue;
                for (std::size_t j = i + 1; j < comps.size() && !changed; ++j) {
                    if (comps[j].touches_border) continue;
                    const bool eligible = both_small ? (size[i] <= k && size[j] <= k)
                                                     : (std::min(size[i], size[j]) <= k);
                    if (!eligible) continue;
                    if (!share_vertex(verts[i], verts[j])) continue;
                    BoundaryComponent m = merge_two(comps[i], comps[j], lat);
                    comps.erase(comps.begin() + static_cast<std::ptrdiff_t>(j));
                    comps[i] = std::move(m);
                    changed = true;
                }
            }
        }
    };

    pass(true);
    if (part >= 2) pass(false);

    std::vector<int> ordering = canonical_interior_order(comps, lat);
    EdgeVec cuts;
    for (const auto& c : comps)
        for (const auto& e : c.slit) cuts.push_back(e);
    return finalize(lat, w.mask(), std::move(comps), std::move(ordering), sorted_unique(std::move(cuts)));
}

CellRect rectangle_hull(const GridSet& w, int comp, const Lattice& target) {
    const auto& c = w.components()[static_cast<std::size_t>(comp)];
    const auto& lat = w.lattice();
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    auto grow = [&](const EdgeKey& e) {
        // edge endpoints in physical coordinates
        const Vec2 v0 = lat.vertex(e.i, e.j);
        Vec2 v1 = v0;
        if (e.orient == 0)
            v1.x += 2.0 * lat.spacing;
        else
            v1.y += 2.0 * lat.spacing;
        xmin = std::min({xmin, v0.x, v1.x});
        xmax = std::max({xmax, v0.x, v1.x});
        ymin = std::min({ymin, v0.y, v1.y});
        ymax = std::max({ymax, v0.y, v1.y});
    };
    for (const auto& e : c.boundary) grow(e);
    for (const auto& e : c.slit) grow(e);
    if (xmin > xmax) return {0, 0, 0, 0};

    const double step = 2.0 * target.spacing;
    const Vec2 base = target.vertex(0, 0);
    const double eps = 1e-9 * step;
    CellRect r;
    r.x0 = static_cast<int>(std::floor((xmin - base.x) / step + eps));
    r.y0 = static_cast<int>(std::floor((ymin - base.y) / step + eps));
    r.x1 = static_cast<int>(std::ceil((xmax - base.x) / step - eps));
    r.y1 = static_cast<int>(std::ceil((ymax - base.y) / step - eps));
    return r.clipped(target.nx, target.ny);
}

namespace {

std::vector<std::vector<int>> connected_parts(const std::vector<int>& cells, const Lattice& lat) {
    std::vector<std::uint8_t> in_set(static_cast<std::size_t>(lat.cell_count()), 0);
    for (int c : cells) in_set[static_cast<std::size_t>(c)] = 1;
    std::vector<std::uint8_t> seen(in_set.size(), 0);
    std::vector<std::vector<int>> parts;
    for (int seed : cells) {
        if (seen[static_cast<std::size_t>(seed)]) continue;
        std::vector<int> part;
        std::deque<int> queue{seed};
        seen[static_cast<std::size_t>(seed)] = 1;
        while (!queue.empty()) {
            const int c = queue.front();
            queue.pop_front();
            part.push_back(c);
            const int a = c % lat.nx, b = c / lat.nx;
            const int na[4] = {a, a, a - 1, a + 1};
            const int nb[4] = {b - 1, b + 1, b, b};
            for (int q = 0; q < 4; ++q) {
                if (!lat.in_range(na[q], nb[q])) continue;
                const int cc = lat.cell_id(na[q], nb[q]);
                if (!in_set[static_cast<std::size_t>(cc)] || seen[static_cast<std::size_t>(cc)])
                    continue;
                seen[static_cast<std::size_t>(cc)] = 1;
                queue.push_back(cc);
            }
        }
        std::sort(part.begin(), part.end());
        parts.push_back(std::move(part));
    }
    std::sort(parts.begin(), parts.end(),
              [](const auto& a, const auto& b) {
                  if (a.size() != b.size()) return a.size() > b.size();
                  return a.front() < b.front();
              });
    return parts;
}

bool rect_difference_connected(const CellRect& a, const CellRect& b) {
    // a \ b is disconnected only when b spans a fully across one axis and is
    // strictly interior along the other
    const CellRect i = a.intersect(b);
    if (i.empty()) return true;
    const bool spans_x = i.x0 <= a.x0 && i.x1 >= a.x1;
    const bool spans_y = i.y0 <= a.y0 && i.y1 >= a.y1;
    if (spans_x && i.y0 > a.y0 && i.y1 < a.y1) return false;
    if (spans_y && i.x0 > a.x0 && i.x1 < a.x1) return false;
    return true;
}

}  // namespace

RectangleizeResult rectangleize(const GridSet& v, std::span<const CellRect> hulls, double nu) {
    const auto& lat = v.lattice();
    const StarMeasureConfig cfg{};

    std::vector<int> interior;
    for (int idx : v.ordering()) {
        const auto& c = v.components()[static_cast<std::size_t>(idx)];
        if (!c.touches_border && !c.is_slit() && !c.empty()) interior.push_back(idx);
    }
    if (interior.size() != hulls.size())
        throw std::invalid_argument("rectangleize: one hull per interior component required");

    const double step = 2.0 * lat.spacing;
    for (std::size_t i = 0; i < interior.size(); ++i) {
        const auto& c = v.components()[static_cast<std::size_t>(interior[i])];
        for (int cell : c.cells) {
            const int a = cell % lat.nx, b = cell / lat.nx;
            if (!hulls[i].contains(a, b))
                throw std::invalid_argument("rectangleize: hull " + std::to_string(i) +
                                            " does not contain its component");
        }
        const auto p = edge_projections(c.boundary, c.slit, lat);
        const double diam = std::hypot(p.px, p.py);
        const double slack = 1e-9 * step;
        if (hulls[i].width() * step > p.px + nu * diam + slack ||
            hulls[i].height() * step > p.py + nu * diam + slack)
            throw std::invalid_argument("rectangleize: hull " + std::to_string(i) +
                                        " exceeds the nu-margin of its component");
    }
    for (std::size_t i = 0; i < hulls.size(); ++i)
        for (std::size_t j = i + 1; j < hulls.size(); ++j)
            if (!rect_difference_connected(hulls[i], hulls[j]) &&
                !rect_difference_connected(hulls[j], hulls[i]))
                throw std::invalid_argument("rectangleize: hull pair (" + std::to_string(i) + "," +
                                            std::to_string(j) + ") violates the difference condition");

    // priority sweep: topmost hull first, then leftmost
    std::vector<std::size_t> order(hulls.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (hulls[a].y1 != hulls[b].y1) return hulls[a].y1 > hulls[b].y1;
        if (hulls[a].x0 != hulls[b].x0) return hulls[a].x0 < hulls[b].x0;
        return a < b;
    });
    std::vector<int> owner(static_cast<std::size_t>(lat.cell_count()), -1);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const CellRect r = hulls[order[rank]].clipped(lat.nx, lat.ny);
        for (int b = r.y0; b < r.y1; ++b)
            for (int a = r.x0; a < r.x1; ++a) {
                auto& o = owner[static_cast<std::size_t>(lat.cell_id(a, b))];
                if (o < 0) o = static_cast<int>(order[rank]);
            }
    }

    std::vector<std::vector<int>> regions(hulls.size());
    for (int c = 0; c < lat.cell_count(); ++c)
        if (owner[static_cast<std::size_t>(c)] >= 0)
            regions[static_cast<std::size_t>(owner[static_cast<std::size_t>(c)])].push_back(c);

    // connectivity repair: each region keeps its largest part; orphan cells are
    // donated to an adjacent region whose hull may own them; irreparable parts
    // split off as extra components
    std::vector<std::vector<int>> final_regions;
    std::vector<std::size_t> region_hull;
    std::vector<std::vector<int>> orphans;
    for (std::size_t i = 0; i < regions.size(); ++i) {
        auto parts = connected_parts(regions[i], lat);
        if (parts.empty()) continue;
        final_regions.push_back(std::move(parts.front()));
        region_hull.push_back(i);
        for (std::size_t p = 1; p < parts.size(); ++p) orphans.push_back(std::move(parts[p]));
    }
    bool progress = true;
    while (progress && !orphans.empty()) {
        progress = false;
        for (auto& part : orphans) {
            for (std::size_t pi = 0; pi < part.size();) {
                const int cell = part[pi];
                const int a = cell % lat.nx, b = cell / lat.nx;
                bool moved = false;
                for (std::size_t ri = 0; ri < final_regions.size() && !moved; ++ri) {
                    if (!hulls[region_hull[ri]].contains(a, b)) continue;
                    for (int q = 0; q < 4 && !moved; ++q) {
                        const int na = a + (q == 2 ? -1 : q == 3 ? 1 : 0);
                        const int nb = b + (q == 0 ? -1 : q == 1 ? 1 : 0);
                        if (!lat.in_range(na, nb)) continue;
                        const int nc = lat.cell_id(na, nb);
                        if (std::binary_search(final_regions[ri].begin(), final_regions[ri].end(),
                                               nc)) {
                            final_regions[ri].insert(
                                std::lower_bound(final_regions[ri].begin(), final_regions[ri].end(),
                                                 cell),
                                cell);
                            moved = true;
                        }
                    }
                }
                if (moved) {
                    part.erase(part.begin() + static_cast<std::ptrdiff_t>(pi));
                    progress = true;
                } else {
                    ++pi;
                }
            }
        }
        std::erase_if(orphans, [](const std::vector<int>& p) { return p.empty(); });
    }
    for (auto& part : orphans)
        for (auto& piece : connected_parts(part, lat)) final_regions.push_back(std::move(piece));

    // assemble the new set
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(lat.cell_count()), 1);
    std::vector<std::uint8_t> carved(static_cast<std::size_t>(lat.cell_count()), 0);
    for (const auto& region : final_regions)
        for (int c : region) {
            mask[static_cast<std::size_t>(c)] = 0;
            carved[static_cast<std::size_t>(c)] = 1;
        }

    std::vector<BoundaryComponent> comps;
    for (auto& region : final_regions) {
        BoundaryComponent c;
        c.boundary = boundary_edges(region, lat);
        c.cells = std::move(region);
        comps.push_back(std::move(c));
    }
    // border components and slits survive minus the carved cells
    EdgeVec cuts;
    for (int idx : v.ordering()) {
        const auto& c = v.components()[static_cast<std::size_t>(idx)];
        if (!c.touches_border && !c.is_slit()) continue;
        BoundaryComponent out;
        for (int cell : c.cells)
            if (!carved[static_cast<std::size_t>(cell)]) {
                out.cells.push_back(cell);
                mask[static_cast<std::size_t>(cell)] = 0;
            }
        for (const auto& e : c.slit)
            if (!edge_adjacent_to_cells(e, carved, lat)) out.slit.push_back(e);
        if (out.cells.empty() && out.slit.empty()) continue;
        out.boundary = boundary_edges(out.cells, lat);
        for (const auto& e : out.slit) cuts.push_back(e);
        comps.push_back(std::move(out));
    }

    auto ordering = canonical_interior_order(comps, lat);
    GridSet u = finalize(lat, std::move(mask), std::move(comps), std::move(ordering),
                         sorted_unique(std::move(cuts)));

    RectangleizeResult res{std::move(u), 0.0};
    const double before = set_norm(v, SetNorm::Star, cfg);
    const double after = set_norm(res.set, SetNorm::Star, cfg);
    if (before > 0.0) {
        const double growth = after / before - 1.0;
        res.fitted_c = nu > 0.0 ? std::max(0.0, growth / nu) : std::max(0.0, growth);
    }
    return res;
}

double perimeter(std::span<const int> cells, const GridSet& ambient) {
    const auto& lat = ambient.lattice();
    std::vector<std::uint8_t> in_set(static_cast<std::size_t>(lat.cell_count()), 0);
    for (int c : cells) in_set[static_cast<std::size_t>(c)] = 1;
    long count = 0;
    for (int c : cells) {
        const int a = c % lat.nx, b = c / lat.nx;
        const int na[4] = {a, a, a - 1, a + 1};
        const int nb[4] = {b - 1, b + 1, b, b};
        for (int q = 0; q < 4; ++q) {
            if (!lat.in_range(na[q], nb[q])) continue;  // ambient border: not counted
            const int cc = lat.cell_id(na[q], nb[q]);
            if (in_set[static_cast<std::size_t>(cc)]) continue;
            if (!ambient.mask()[static_cast<std::size_t>(cc)]) continue;  // outside region
            ++count;
        }
    }
    return static_cast<double>(count) * 2.0 * lat.spacing;
}

std::vector<int> mask_component_labels(const GridSet& w) {
    const auto& lat = w.lattice();
    std::vector<int> label(static_cast<std::size_t>(lat.cell_count()), -1);
    int next = 0;
    for (int seed = 0; seed < lat.cell_count(); ++seed) {
        if (!w.mask()[static_cast<std::size_t>(seed)] || label[static_cast<std::size_t>(seed)] >= 0)
            continue;
        const int id = next++;
        std::deque<int> queue{seed};
        label[static_cast<std::size_t>(seed)] = id;
        while (!queue.empty()) {
            const int c = queue.front();
            queue.pop_front();
            const int a = c % lat.nx, b = c / lat.nx;
            struct Step {
                int da, db;
                EdgeKey edge;
            };
            const Step steps[4] = {
                {0, -1, {0, a, b}},
                {0, 1, {0, a, b + 1}},
                {-1, 0, {1, a, b}},
                {1, 0, {1, a + 1, b}},
            };
            for (const auto& s : steps) {
                const int na = a + s.da, nb = b + s.db;
                if (!lat.in_range(na, nb)) continue;
                const int cc = lat.cell_id(na, nb);
                if (!w.mask()[static_cast<std::size_t>(cc)] ||
                    label[static_cast<std::size_t>(cc)] >= 0)
                    continue;
                if (w.is_cut(s.edge)) continue;
                label[static_cast<std::size_t>(cc)] = id;
                queue.push_back(cc);
            }
        }
    }
    return label;
}

}  // namespace rigidity
