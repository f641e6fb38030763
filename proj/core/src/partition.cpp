#include "rigidity/partition.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <set>

#include "rigidity/fit.hpp"

namespace rigidity {

namespace {

CellRect omega_rho_rect(int nx, int ny, double h, double rho, double margin_factor) {
    const int margin = static_cast<int>(std::ceil(margin_factor * rho / h - 1e-9));
    CellRect r{margin, margin, nx - margin, ny - margin};
    if (r.empty()) return {0, 0, 0, 0};
    return r;
}

}  // namespace

CaccioppoliPartition extract_partition(const GridSet& w_final, double rho, double margin_factor) {
    const auto& lat = w_final.lattice();
    CaccioppoliPartition part;
    part.nx = lat.nx;
    part.ny = lat.ny;
    part.h = 2.0 * lat.spacing;
    part.origin = {lat.origin.x, lat.origin.y};
    part.omega_rho = omega_rho_rect(lat.nx, lat.ny, part.h, rho, margin_factor);
    part.labels.assign(static_cast<std::size_t>(lat.cell_count()), 0);

    // cut-aware components of the healed region inside Omega_rho
    const CellRect& win = part.omega_rho;
    std::vector<int> comp(static_cast<std::size_t>(lat.cell_count()), -1);
    int next = 0;
    for (int sj = win.y0; sj < win.y1; ++sj)
        for (int si = win.x0; si < win.x1; ++si) {
            const int seed = lat.cell_id(si, sj);
            if (!w_final.mask()[static_cast<std::size_t>(seed)] ||
                comp[static_cast<std::size_t>(seed)] >= 0)
                continue;
            const int id = next++;
            std::deque<int> queue{seed};
            comp[static_cast<std::size_t>(seed)] = id;
            std::vector<int> cells;
            while (!queue.empty()) {
                const int c = queue.front();
                queue.pop_front();
                cells.push_back(c);
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
                    if (!win.contains(na, nb)) continue;
                    const int cc = lat.cell_id(na, nb);
                    if (!w_final.mask()[static_cast<std::size_t>(cc)] ||
                        comp[static_cast<std::size_t>(cc)] >= 0)
                        continue;
                    if (w_final.is_cut(s.e)) continue;
                    comp[static_cast<std::size_t>(cc)] = id;
                    queue.push_back(cc);
                }
            }
            std::sort(cells.begin(), cells.end());
            PieceInfo piece;
            piece.cells = std::move(cells);
            part.pieces.push_back(std::move(piece));
        }
    for (int c = 0; c < lat.cell_count(); ++c)
        if (comp[static_cast<std::size_t>(c)] >= 0)
            part.labels[static_cast<std::size_t>(c)] = comp[static_cast<std::size_t>(c)] + 1;

    // piece perimeters inside Omega_rho (interfaces with anything else)
    double total = 0.0;
    for (std::size_t p = 0; p < part.pieces.size(); ++p) {
        long edges = 0;
        const int my = static_cast<int>(p) + 1;
        for (int c : part.pieces[p].cells) {
            const int a = c % lat.nx, b = c / lat.nx;
            const int na[4] = {a, a, a - 1, a + 1};
            const int nb[4] = {b - 1, b + 1, b, b};
            for (int q = 0; q < 4; ++q) {
                if (!win.contains(na[q], nb[q])) continue;
                if (part.labels[static_cast<std::size_t>(lat.cell_id(na[q], nb[q]))] != my) ++edges;
            }
        }
        part.pieces[p].perimeter = static_cast<double>(edges) * part.h;
        total += part.pieces[p].perimeter;
    }
    part.total_perimeter = total;
    return part;
}

MotionAssignment assign_rigid_motions(const DeformationField& f_healed,
                                      CaccioppoliPartition& part, double rho) {
    MotionAssignment out;
    const int side = std::max(2, static_cast<int>(std::lround(2.0 * rho / f_healed.h)));
    for (auto& piece : part.pieces) {
        if (piece.cells.empty()) {
            ++out.dropped_pieces;
            continue;
        }
        piece.motion = best_fit_rigid_motion(f_healed, piece.cells);

        // chain cross-check over rho-squares inside the piece
        std::map<std::pair<int, int>, std::vector<int>> tile_cells;
        for (int c : piece.cells)
            tile_cells[{(c % f_healed.nx) / side, (c / f_healed.nx) / side}].push_back(c);
        if (tile_cells.size() < 2) continue;
        std::map<std::pair<int, int>, RigidMotion> tile_motion;
        for (const auto& [key, cells] : tile_cells)
            if (cells.size() >= 2) tile_motion[key] = best_fit_rigid_motion(f_healed, cells);
        if (tile_motion.size() < 2) continue;

        // BFS over tiles from the lexicographically first; track the farthest path
        const auto root = tile_motion.begin()->first;
        std::map<std::pair<int, int>, std::pair<int, int>> parent;
        std::deque<std::pair<int, int>> queue{root};
        parent[root] = root;
        std::pair<int, int> far = root;
        int far_d = 0;
        std::map<std::pair<int, int>, int> depth{{root, 0}};
        while (!queue.empty()) {
            const auto cur = queue.front();
            queue.pop_front();
            const std::pair<int, int> nbrs[4] = {{cur.first - 1, cur.second},
                                                 {cur.first + 1, cur.second},
                                                 {cur.first, cur.second - 1},
                                                 {cur.first, cur.second + 1}};
            for (const auto& nb : nbrs) {
                if (!tile_motion.count(nb) || parent.count(nb)) continue;
                parent[nb] = cur;
                depth[nb] = depth[cur] + 1;
                if (depth[nb] > far_d) {
                    far_d = depth[nb];
                    far = nb;
                }
                queue.push_back(nb);
            }
        }
        std::vector<std::pair<int, int>> path;
        for (auto cur = far;; cur = parent[cur]) {
            path.push_back(cur);
            if (cur == parent[cur]) break;
        }
        std::reverse(path.begin(), path.end());
        if (path.size() < 2) continue;
        std::vector<RigidMotion> motions;
        std::vector<CellRect> rects;
        for (const auto& key : path) {
            motions.push_back(tile_motion[key]);
            CellRect r{key.first * side - 1, key.second * side - 1, (key.first + 1) * side + 1,
                       (key.second + 1) * side + 1};
            rects.push_back(r.clipped(f_healed.nx, f_healed.ny));
        }
        const auto chain = rigid_chain_propagate(motions, rects, f_healed);
        // deviation of the chain endpoint from the global fit on the root square
        const Vec2 lo = f_healed.node_pos(rects.front().x0, rects.front().y0);
        const Vec2 hi = f_healed.node_pos(rects.front().x1, rects.front().y1);
        const double gap = motion_gap_L2sq(motions.back(), piece.motion, lo, hi);
        out.max_chain_gap = std::max(out.max_chain_gap, gap);
        (void)chain;
    }
    return out;
}

DeformationField build_displacement(const DeformationField& f_healed,
                                    const CaccioppoliPartition& part) {
    DeformationField u = f_healed;
    u.jumps = JumpSet{};
    u.active.assign(static_cast<std::size_t>(f_healed.cell_count()), 0);
    for (int c = 0; c < f_healed.cell_count(); ++c)
        if (part.labels[static_cast<std::size_t>(c)] > 0)
            u.active[static_cast<std::size_t>(c)] = 1;

    auto cell_label = [&](int i, int j) {
        if (i < 0 || i >= part.nx || j < 0 || j >= part.ny) return 0;
        return part.labels[static_cast<std::size_t>(j * part.nx + i)];
    };
    auto trace = [&](int ci, int cj, const Vec2& x, int corner) -> Vec2 {
        const int lab = cell_label(ci, cj);
        if (lab <= 0) return {0.0, 0.0};
        const auto vals = f_healed.corner_values(ci, cj);
        return vals[static_cast<std::size_t>(corner)] - part.pieces[static_cast<std::size_t>(lab - 1)].motion(x);
    };

    // nodal values: context = smallest adjacent labeled cell
    std::vector<Vec2> vals(static_cast<std::size_t>(f_healed.node_count()), Vec2{0.0, 0.0});
    std::vector<std::uint8_t> done(vals.size(), 0);
    for (int j = 0; j < f_healed.ny; ++j)
        for (int i = 0; i < f_healed.nx; ++i) {
            if (cell_label(i, j) <= 0) continue;
            const int corners[4] = {f_healed.node_id(i, j), f_healed.node_id(i + 1, j),
                                    f_healed.node_id(i, j + 1), f_healed.node_id(i + 1, j + 1)};
            const Vec2 pos[4] = {f_healed.node_pos(i, j), f_healed.node_pos(i + 1, j),
                                 f_healed.node_pos(i, j + 1), f_healed.node_pos(i + 1, j + 1)};
            for (int q = 0; q < 4; ++q)
                if (!done[static_cast<std::size_t>(corners[q])]) {
                    done[static_cast<std::size_t>(corners[q])] = 1;
                    vals[static_cast<std::size_t>(corners[q])] = trace(i, j, pos[q], q);
                }
        }
    u.values = std::move(vals);

    // jump records on label interfaces and on yhat's own jump edges
    auto add_jump = [&](const EdgeKey& e) {
        int lo_i, lo_j, hi_i, hi_j;
        Vec2 p0, p1;
        if (e.orient == 0) {
            lo_i = e.i;
            lo_j = e.j - 1;
            hi_i = e.i;
            hi_j = e.j;
            p0 = f_healed.node_pos(e.i, e.j);
            p1 = f_healed.node_pos(e.i + 1, e.j);
        } else {
            lo_i = e.i - 1;
            lo_j = e.j;
            hi_i = e.i;
            hi_j = e.j;
            p0 = f_healed.node_pos(e.i, e.j);
            p1 = f_healed.node_pos(e.i, e.j + 1);
        }
        // corner index of p0/p1 within each side cell
        JumpEdge je;
        je.edge = e;
        if (e.orient == 0) {
            je.lo0 = trace(lo_i, lo_j, p0, 2);  // NW of the lower cell
            je.lo1 = trace(lo_i, lo_j, p1, 3);
            je.hi0 = trace(hi_i, hi_j, p0, 0);
            je.hi1 = trace(hi_i, hi_j, p1, 1);
        } else {
            je.lo0 = trace(lo_i, lo_j, p0, 1);  // SE of the left cell
            je.lo1 = trace(lo_i, lo_j, p1, 3);
            je.hi0 = trace(hi_i, hi_j, p0, 0);
            je.hi1 = trace(hi_i, hi_j, p1, 2);
        }
        u.jumps.insert(je);
    };
    std::set<EdgeKey> edges;
    for (int j = 0; j < part.ny; ++j)
        for (int i = 0; i < part.nx; ++i) {
            const int lab = cell_label(i, j);
            if (lab <= 0) continue;
            if (cell_label(i + 1, j) != lab && i + 1 < part.nx) edges.insert({1, i + 1, j});
            if (cell_label(i, j + 1) != lab && j + 1 < part.ny) edges.insert({0, i, j + 1});
            if (cell_label(i - 1, j) != lab && i >= 1) edges.insert({1, i, j});
            if (cell_label(i, j - 1) != lab && j >= 1) edges.insert({0, i, j});
        }
    for (const auto& [k, je] : f_healed.jumps) edges.insert(k);
    for (const auto& e : edges) add_jump(e);
    return u;
}

namespace {

/// Boundary loops of a cell region, traced with the region kept on the left.
std::vector<std::vector<EdgeKey>> boundary_loops(const std::vector<std::uint8_t>& in_region,
                                                 int nx, int ny) {
    // directed boundary edges: region on the left of the walking direction
    struct DirEdge {
        EdgeKey e;
        int dir;  // 0 +x, 1 +y, 2 -x, 3 -y
        auto operator<=>(const DirEdge&) const = default;
    };
    auto cell_at = [&](int i, int j) {
        return i >= 0 && i < nx && j >= 0 && j < ny &&
               in_region[static_cast<std::size_t>(j * nx + i)] != 0;
    };
    std::set<DirEdge> pending;
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const bool below = cell_at(i, j - 1), above = cell_at(i, j);
            if (above && !below) pending.insert({{0, i, j}, 0});   // walk +x, region above/left
            if (below && !above) pending.insert({{0, i, j}, 2});   // walk -x
        }
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            const bool left = cell_at(i - 1, j), right = cell_at(i, j);
            if (left && !right) pending.insert({{1, i, j}, 1});    // walk +y, region on left
            if (right && !left) pending.insert({{1, i, j}, 3});
        }

    auto head_vertex = [&](const DirEdge& d) -> std::pair<int, int> {
        if (d.e.orient == 0) return d.dir == 0 ? std::pair{d.e.i + 1, d.e.j} : std::pair{d.e.i, d.e.j};
        return d.dir == 1 ? std::pair{d.e.i, d.e.j + 1} : std::pair{d.e.i, d.e.j};
    };
    auto next_candidates = [&](const DirEdge& d) {
        const auto [vi, vj] = head_vertex(d);
        // prefer left turn, then straight, then right (keeps loops simple)
        const int order[3] = {(d.dir + 1) % 4, d.dir, (d.dir + 3) % 4};
        std::vector<DirEdge> cand;
        for (int dir : order) {
            DirEdge n;
            n.dir = dir;
            switch (dir) {
                case 0: n.e = {0, vi, vj}; break;
                case 2: n.e = {0, vi - 1, vj}; break;
                case 1: n.e = {1, vi, vj}; break;
                default: n.e = {1, vi, vj - 1}; break;
            }
            cand.push_back(n);
        }
        return cand;
    };

    std::vector<std::vector<EdgeKey>> loops;
    while (!pending.empty()) {
        const DirEdge start = *pending.begin();
        std::vector<EdgeKey> loop;
        DirEdge cur = start;
        do {
            pending.erase(cur);
            loop.push_back(cur.e);
            DirEdge next{};
            bool found = false;
            for (const auto& cand : next_candidates(cur))
                if (pending.count(cand) || (cand == start)) {
                    next = cand;
                    found = true;
                    break;
                }
            if (!found) break;  // open chain (should not happen for closed regions)
            cur = next;
        } while (!(cur == start));
        loops.push_back(std::move(loop));
    }
    // outer loop first: the one containing the lexicographically least edge
    std::stable_sort(loops.begin(), loops.end(), [](const auto& a, const auto& b) {
        return *std::min_element(a.begin(), a.end()) < *std::min_element(b.begin(), b.end());
    });
    return loops;
}

}  // namespace

SeparatorResult jordan_separator(const CaccioppoliPartition& part, const GridSet& hat_omega,
                                 double rho, int q_exponent,
                                 const std::vector<EdgeKey>& walls) {
    SeparatorResult out;
    const int nx = part.nx, ny = part.ny;
    const CellRect& win = part.omega_rho;
    out.full_labels = part.labels;
    std::vector<EdgeKey> wall_edges = walls;
    std::sort(wall_edges.begin(), wall_edges.end());
    auto blocked = [&](const EdgeKey& e) {
        return hat_omega.is_cut(e) ||
               std::binary_search(wall_edges.begin(), wall_edges.end(), e);
    };

    // Voronoi fill: multi-source BFS from piece cells, blocked by cracks,
    // seeded in label order so ties go to the lower label
    {
        std::deque<int> queue;
        for (const auto& piece : part.pieces)
            for (int c : piece.cells) queue.push_back(c);
        while (!queue.empty()) {
            const int c = queue.front();
            queue.pop_front();
            const int a = c % nx, b = c / nx;
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
                if (!win.contains(na, nb)) continue;
                const int cc = nb * nx + na;
                if (out.full_labels[static_cast<std::size_t>(cc)] != 0) continue;
                if (blocked(s.e)) continue;
                out.full_labels[static_cast<std::size_t>(cc)] =
                    out.full_labels[static_cast<std::size_t>(c)];
                queue.push_back(cc);
            }
        }
        for (int j = win.y0; j < win.y1; ++j)
            for (int i = win.x0; i < win.x1; ++i)
                if (out.full_labels[static_cast<std::size_t>(j * nx + i)] == 0)
                    ++out.unreachable_cells;
    }

    auto lab = [&](int i, int j) {
        if (!win.contains(i, j)) return -1;  // outside Omega_rho
        return out.full_labels[static_cast<std::size_t>(j * nx + i)];
    };

    // S: interfaces between distinct labels inside Omega_rho
    std::set<EdgeKey> s_edges;
    for (int j = win.y0; j < win.y1; ++j)
        for (int i = win.x0; i < win.x1; ++i) {
            const int l = lab(i, j);
            if (lab(i + 1, j) >= 0 && lab(i + 1, j) != l) s_edges.insert({1, i + 1, j});
            if (lab(i, j + 1) >= 0 && lab(i, j + 1) != l) s_edges.insert({0, i, j + 1});
        }
    out.edges.assign(s_edges.begin(), s_edges.end());
    out.h1_S = static_cast<double>(out.edges.size()) * part.h;
    const double norm = set_norm(hat_omega, SetNorm::Star, {});
    out.c1_length = rho > 0.0 ? std::max(0.0, (out.h1_S - norm) / rho) : 0.0;

    // per-piece generalized Jordan curves: boundary loops of the completed regions
    for (std::size_t p = 0; p < part.pieces.size(); ++p) {
        std::vector<std::uint8_t> region(static_cast<std::size_t>(nx * ny), 0);
        for (int j = win.y0; j < win.y1; ++j)
            for (int i = win.x0; i < win.x1; ++i)
                if (lab(i, j) == static_cast<int>(p) + 1)
                    region[static_cast<std::size_t>(j * nx + i)] = 1;
        out.curves.push_back(boundary_loops(region, nx, ny));
    }

    // (iii): every face of S u dOmega_rho (= completed label region) holds a piece
    out.cycles_ok = out.unreachable_cells == 0;

    // (iv): excluded cells' distance to S u dOmega_hat
    {
        std::vector<int> dist(static_cast<std::size_t>(nx * ny), -1);
        std::deque<int> queue;
        auto healed_at = [&](int i, int j) {
            return win.contains(i, j) &&
                   hat_omega.mask()[static_cast<std::size_t>(j * nx + i)] != 0;
        };
        for (int j = win.y0; j < win.y1; ++j)
            for (int i = win.x0; i < win.x1; ++i) {
                if (healed_at(i, j)) continue;
                const int c = j * nx + i;
                bool near = false;
                const EdgeKey around[4] = {{0, i, j}, {0, i, j + 1}, {1, i, j}, {1, i + 1, j}};
                for (const auto& e : around)
                    if (s_edges.count(e)) near = true;
                // adjacent to the healed set counts as touching dOmega_hat
                if (healed_at(i - 1, j) || healed_at(i + 1, j) || healed_at(i, j - 1) ||
                    healed_at(i, j + 1))
                    near = true;
                if (near) {
                    dist[static_cast<std::size_t>(c)] = 0;
                    queue.push_back(c);
                }
            }
        while (!queue.empty()) {
            const int c = queue.front();
            queue.pop_front();
            const int a = c % nx, b = c / nx;
            const int na[4] = {a - 1, a + 1, a, a};
            const int nb[4] = {b, b, b - 1, b + 1};
            for (int q = 0; q < 4; ++q) {
                if (!win.contains(na[q], nb[q])) continue;
                if (healed_at(na[q], nb[q])) continue;
                const int cc = nb[q] * nx + na[q];
                if (dist[static_cast<std::size_t>(cc)] >= 0) continue;
                dist[static_cast<std::size_t>(cc)] = dist[static_cast<std::size_t>(c)] + 1;
                queue.push_back(cc);
            }
        }
        int maxd = 0;
        for (int j = win.y0; j < win.y1; ++j)
            for (int i = win.x0; i < win.x1; ++i) {
                if (healed_at(i, j)) continue;
                maxd = std::max(maxd, dist[static_cast<std::size_t>(j * nx + i)]);
            }
        out.max_fill_dist = maxd * part.h;
        const double ref = std::pow(rho, q_exponent - 2);
        out.c1_dist = ref > 0.0 ? out.max_fill_dist / ref : 0.0;
    }

    // (v): S u dOmega_rho connected within each excluded component (audit)
    {
        auto healed_at = [&](int i, int j) {
            return win.contains(i, j) &&
                   hat_omega.mask()[static_cast<std::size_t>(j * nx + i)] != 0;
        };
        std::vector<int> comp(static_cast<std::size_t>(nx * ny), -1);
        int ncomp = 0;
        for (int sj = win.y0; sj < win.y1; ++sj)
            for (int si = win.x0; si < win.x1; ++si) {
                if (healed_at(si, sj) || comp[static_cast<std::size_t>(sj * nx + si)] >= 0)
                    continue;
                const int id = ncomp++;
                std::deque<int> queue{sj * nx + si};
                comp[static_cast<std::size_t>(sj * nx + si)] = id;
                while (!queue.empty()) {
                    const int c = queue.front();
                    queue.pop_front();
                    const int a = c % nx, b = c / nx;
                    const int na[4] = {a - 1, a + 1, a, a};
                    const int nb[4] = {b, b, b - 1, b + 1};
                    for (int q = 0; q < 4; ++q) {
                        if (!win.contains(na[q], nb[q]) || healed_at(na[q], nb[q])) continue;
                        const int cc = nb[q] * nx + na[q];
                        if (comp[static_cast<std::size_t>(cc)] >= 0) continue;
                        comp[static_cast<std::size_t>(cc)] = id;
                        queue.push_back(cc);
                    }
                }
            }
        // per component, the incident S/rim edges must share vertices transitively
        for (int id = 0; id < ncomp && out.connected_ok; ++id) {
            std::vector<EdgeKey> local;
            for (int j = win.y0; j < win.y1; ++j)
                for (int i = win.x0; i < win.x1; ++i) {
                    if (comp[static_cast<std::size_t>(j * nx + i)] != id) continue;
                    const EdgeKey around[4] = {{0, i, j}, {0, i, j + 1}, {1, i, j}, {1, i + 1, j}};
                    for (const auto& e : around) {
                        if (s_edges.count(e)) local.push_back(e);
                        // rim edges of Omega_rho
                        const bool rim = (e.orient == 0 && (e.j == win.y0 || e.j == win.y1)) ||
                                         (e.orient == 1 && (e.i == win.x0 || e.i == win.x1));
                        if (rim) local.push_back(e);
                    }
                }
            std::sort(local.begin(), local.end());
            local.erase(std::unique(local.begin(), local.end()), local.end());
            if (local.size() <= 1) continue;  // vacuous
            // union-find over edge endpoints
            std::map<std::pair<int, int>, int> vid;
            auto vertex_id = [&](int i, int j) {
                auto [it, ok] = vid.try_emplace({i, j}, static_cast<int>(vid.size()));
                (void)ok;
                return it->second;
            };
            std::vector<int> parent;
            std::function<int(int)> find = [&](int x) {
                while (parent[static_cast<std::size_t>(x)] != x)
                    x = parent[static_cast<std::size_t>(x)] =
                        parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
                return x;
            };
            std::vector<std::pair<int, int>> links;
            for (const auto& e : local) {
                const int v0 = vertex_id(e.i, e.j);
                const int v1 = e.orient == 0 ? vertex_id(e.i + 1, e.j) : vertex_id(e.i, e.j + 1);
                links.push_back({v0, v1});
            }
            parent.resize(vid.size());
            for (std::size_t v = 0; v < parent.size(); ++v) parent[v] = static_cast<int>(v);
            for (const auto& [a, b] : links) parent[static_cast<std::size_t>(find(a))] = find(b);
            std::set<int> roots;
            for (std::size_t v = 0; v < parent.size(); ++v) roots.insert(find(static_cast<int>(v)));
            if (roots.size() > 1) out.connected_ok = false;
        }
    }
    return out;
}

AssemblyResult assemble_extension(const DeformationField& y_original,
                                  const DeformationField& f_healed,
                                  const CaccioppoliPartition& part, const SeparatorResult& sep,
                                  const GridSet& hat_omega, double eps, double rho,
                                  int q_exponent) {
    AssemblyResult out;
    const int nx = part.nx, ny = part.ny;
    const CellRect& win = part.omega_rho;
    const double h = part.h;
    out.yhat = f_healed;
    out.block_of_cell.assign(static_cast<std::size_t>(nx * ny), -1);

    auto healed_at = [&](int i, int j) {
        return i >= 0 && i < nx && j >= 0 && j < ny &&
               hat_omega.mask()[static_cast<std::size_t>(j * nx + i)] != 0;
    };
    auto flab = [&](int i, int j) {
        if (!win.contains(i, j)) return -1;
        return sep.full_labels[static_cast<std::size_t>(j * nx + i)];
    };

    // fill regions: connected same-label groups of non-healed Omega_rho cells
    std::vector<int> region(static_cast<std::size_t>(nx * ny), -1);
    std::vector<std::vector<int>> region_cells;
    std::vector<int> region_label;
    for (int sj = win.y0; sj < win.y1; ++sj)
        for (int si = win.x0; si < win.x1; ++si) {
            if (healed_at(si, sj) || region[static_cast<std::size_t>(sj * nx + si)] >= 0) continue;
            const int lbl = flab(si, sj);
            const int id = static_cast<int>(region_cells.size());
            std::deque<int> queue{sj * nx + si};
            region[static_cast<std::size_t>(sj * nx + si)] = id;
            std::vector<int> cells;
            while (!queue.empty()) {
                const int c = queue.front();
                queue.pop_front();
                cells.push_back(c);
                const int a = c % nx, b = c / nx;
                const int na[4] = {a - 1, a + 1, a, a};
                const int nb[4] = {b, b, b - 1, b + 1};
                for (int q = 0; q < 4; ++q) {
                    if (!win.contains(na[q], nb[q]) || healed_at(na[q], nb[q])) continue;
                    if (flab(na[q], nb[q]) != lbl) continue;
                    const int cc = nb[q] * nx + na[q];
                    if (region[static_cast<std::size_t>(cc)] >= 0) continue;
                    region[static_cast<std::size_t>(cc)] = id;
                    queue.push_back(cc);
                }
            }
            std::sort(cells.begin(), cells.end());
            region_cells.push_back(std::move(cells));
            region_label.push_back(lbl);
        }

    // per region: blocks along the adjacent healed strip, then nearest-block fill
    const int block_len = std::max(4, static_cast<int>(std::lround(
                                           std::pow(rho, q_exponent - 2) / h)));
    std::vector<RigidMotion> block_motion;  // global list
    std::vector<int> cell_block(static_cast<std::size_t>(nx * ny), -1);
    for (std::size_t rid = 0; rid < region_cells.size(); ++rid) {
        const int lbl = region_label[rid];
        // strip: healed cells of this label adjacent to the region
        std::vector<int> strip;
        {
            std::set<int> seen;
            for (int c : region_cells[rid]) {
                const int a = c % nx, b = c / nx;
                const int na[4] = {a - 1, a + 1, a, a};
                const int nb[4] = {b, b, b - 1, b + 1};
                for (int q = 0; q < 4; ++q) {
                    if (!healed_at(na[q], nb[q])) continue;
                    if (flab(na[q], nb[q]) != lbl) continue;
                    const int cc = nb[q] * nx + na[q];
                    if (seen.insert(cc).second) strip.push_back(cc);
                }
            }
        }
        if (strip.empty() || lbl <= 0) {
            ++out.identity_fills;
            continue;  // identity fill, block -1
        }
        // order the strip by BFS from its lexicographically first cell
        std::sort(strip.begin(), strip.end());
        std::vector<int> ordered;
        {
            std::set<int> strip_set(strip.begin(), strip.end());
            std::set<int> seen;
            for (int seed : strip) {
                if (seen.count(seed)) continue;
                std::deque<int> queue{seed};
                seen.insert(seed);
                while (!queue.empty()) {
                    const int c = queue.front();
                    queue.pop_front();
                    ordered.push_back(c);
                    const int a = c % nx, b = c / nx;
                    const int na[8] = {a - 1, a + 1, a, a, a - 1, a - 1, a + 1, a + 1};
                    const int nb[8] = {b, b, b - 1, b + 1, b - 1, b + 1, b - 1, b + 1};
                    for (int q = 0; q < 8; ++q) {
                        const int cc = nb[q] * nx + na[q];
                        if (na[q] < 0 || na[q] >= nx || nb[q] < 0 || nb[q] >= ny) continue;
                        if (!strip_set.count(cc) || seen.count(cc)) continue;
                        seen.insert(cc);
                        queue.push_back(cc);
                    }
                }
            }
        }
        const int first_block = static_cast<int>(block_motion.size());
        for (std::size_t ofs = 0; ofs < ordered.size(); ofs += static_cast<std::size_t>(block_len)) {
            std::vector<int> cells(ordered.begin() + static_cast<std::ptrdiff_t>(ofs),
                                   ordered.begin() +
                                       static_cast<std::ptrdiff_t>(
                                           std::min(ofs + static_cast<std::size_t>(block_len),
                                                    ordered.size())));
            std::sort(cells.begin(), cells.end());
            block_motion.push_back(best_fit_rigid_motion(f_healed, cells));
        }
        // nearest-block assignment: BFS from region cells adjacent to strip cells
        std::map<int, int> block_of_strip;
        for (std::size_t pos = 0; pos < ordered.size(); ++pos)
            block_of_strip[ordered[pos]] = first_block + static_cast<int>(pos) / block_len;
        std::deque<int> queue;
        for (int c : region_cells[rid]) {
            const int a = c % nx, b = c / nx;
            const int na[4] = {a - 1, a + 1, a, a};
            const int nb[4] = {b, b, b - 1, b + 1};
            int best = -1;
            for (int q = 0; q < 4; ++q) {
                if (!healed_at(na[q], nb[q]) || flab(na[q], nb[q]) != lbl) continue;
                const auto it = block_of_strip.find(nb[q] * nx + na[q]);
                if (it != block_of_strip.end() && (best < 0 || it->second < best))
                    best = it->second;
            }
            if (best >= 0) {
                cell_block[static_cast<std::size_t>(c)] = best;
                queue.push_back(c);
            }
        }
        while (!queue.empty()) {
            const int c = queue.front();
            queue.pop_front();
            const int a = c % nx, b = c / nx;
            const int na[4] = {a - 1, a + 1, a, a};
            const int nb[4] = {b, b, b - 1, b + 1};
            for (int q = 0; q < 4; ++q) {
                if (na[q] < 0 || na[q] >= nx || nb[q] < 0 || nb[q] >= ny) continue;
                const int cc = nb[q] * nx + na[q];
                if (region[static_cast<std::size_t>(cc)] != static_cast<int>(rid)) continue;
                if (cell_block[static_cast<std::size_t>(cc)] >= 0) continue;
                cell_block[static_cast<std::size_t>(cc)] = cell_block[static_cast<std::size_t>(c)];
                queue.push_back(cc);
            }
        }
        for (int c : region_cells[rid])
            if (cell_block[static_cast<std::size_t>(c)] < 0) {
                cell_block[static_cast<std::size_t>(c)] = -1;  // unreachable inside region
            }
    }
    out.block_of_cell = cell_block;

    // neighbor-index audit within regions
    for (int j = win.y0; j < win.y1; ++j)
        for (int i = win.x0; i < win.x1 - 1; ++i) {
            const int c0 = j * nx + i, c1 = j * nx + i + 1;
            if (region[static_cast<std::size_t>(c0)] >= 0 &&
                region[static_cast<std::size_t>(c0)] == region[static_cast<std::size_t>(c1)]) {
                const int b0 = cell_block[static_cast<std::size_t>(c0)];
                const int b1 = cell_block[static_cast<std::size_t>(c1)];
                if (b0 >= 0 && b1 >= 0 && std::abs(b0 - b1) > 1) ++out.neighbor_rule_violations;
            }
        }

    // extend the field: fill cells take their block motion (identity when -1)
    auto fill_value = [&](int cell, const Vec2& x) -> Vec2 {
        const int blk = cell_block[static_cast<std::size_t>(cell)];
        if (blk < 0) return x;  // identity fill
        return block_motion[static_cast<std::size_t>(blk)](x);
    };
    for (int c = 0; c < nx * ny; ++c)
        if (region[static_cast<std::size_t>(c)] >= 0)
            out.yhat.active[static_cast<std::size_t>(c)] = 1;

    std::vector<std::uint8_t> node_set(static_cast<std::size_t>(out.yhat.node_count()), 0);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            if (healed_at(i, j)) {
                const int ids[4] = {out.yhat.node_id(i, j), out.yhat.node_id(i + 1, j),
                                    out.yhat.node_id(i, j + 1), out.yhat.node_id(i + 1, j + 1)};
                for (int id : ids) node_set[static_cast<std::size_t>(id)] = 1;
            }
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int c = j * nx + i;
            if (region[static_cast<std::size_t>(c)] < 0) continue;
            const int ids[4] = {out.yhat.node_id(i, j), out.yhat.node_id(i + 1, j),
                                out.yhat.node_id(i, j + 1), out.yhat.node_id(i + 1, j + 1)};
            const Vec2 pos[4] = {out.yhat.node_pos(i, j), out.yhat.node_pos(i + 1, j),
                                 out.yhat.node_pos(i, j + 1), out.yhat.node_pos(i + 1, j + 1)};
            for (int q = 0; q < 4; ++q)
                if (!node_set[static_cast<std::size_t>(ids[q])]) {
                    node_set[static_cast<std::size_t>(ids[q])] = 1;
                    out.yhat.values[static_cast<std::size_t>(ids[q])] = fill_value(c, pos[q]);
                }
        }

    // seam jumps: edges between cells with different value sources
    auto source_key = [&](int i, int j) -> long {
        if (healed_at(i, j)) return -2;  // healed
        if (i < 0 || i >= nx || j < 0 || j >= ny) return -3;
        if (region[static_cast<std::size_t>(j * nx + i)] < 0) return -3;  // outside
        return cell_block[static_cast<std::size_t>(j * nx + i)];
    };
    auto trace_of = [&](int i, int j, const Vec2& x, int corner) -> Vec2 {
        if (healed_at(i, j)) return f_healed.corner_values(i, j)[static_cast<std::size_t>(corner)];
        return fill_value(j * nx + i, x);
    };
    std::vector<double> seam_relax, seam_offpart;
    std::set<EdgeKey> part_boundary;
    for (int j = win.y0; j < win.y1; ++j)
        for (int i = win.x0; i < win.x1; ++i) {
            const int l = flab(i, j);
            if (flab(i + 1, j) >= 0 && flab(i + 1, j) != l) part_boundary.insert({1, i + 1, j});
            if (flab(i, j + 1) >= 0 && flab(i, j + 1) != l) part_boundary.insert({0, i, j + 1});
        }
    auto consider_edge = [&](const EdgeKey& e, int ai, int aj, int bi, int bj, const Vec2& p0,
                             const Vec2& p1, int ca0, int ca1, int cb0, int cb1) {
        if (source_key(ai, aj) == -3 || source_key(bi, bj) == -3) return;
        if (source_key(ai, aj) == source_key(bi, bj) && source_key(ai, aj) == -2) return;
        if (out.yhat.jumps.contains(e)) return;  // retained crack, keep its record
        JumpEdge je;
        je.edge = e;
        je.lo0 = trace_of(ai, aj, p0, ca0);
        je.lo1 = trace_of(ai, aj, p1, ca1);
        je.hi0 = trace_of(bi, bj, p0, cb0);
        je.hi1 = trace_of(bi, bj, p1, cb1);
        const double amp = je.amplitude().norm();
        if (amp < 1e-13 * (1.0 + je.lo0.norm())) return;
        out.yhat.jumps.insert(je);
        const double relax = f_eps_rho(amp, eps, rho) * h;
        seam_relax.push_back(relax);
        if (!part_boundary.count(e)) seam_offpart.push_back(relax);
    };
    for (int j = win.y0; j < win.y1; ++j)
        for (int i = win.x0; i < win.x1; ++i) {
            if (i + 1 < win.x1)
                consider_edge({1, i + 1, j}, i, j, i + 1, j, out.yhat.node_pos(i + 1, j),
                              out.yhat.node_pos(i + 1, j + 1), 1, 3, 0, 2);
            if (j + 1 < win.y1)
                consider_edge({0, i, j + 1}, i, j, i, j + 1, out.yhat.node_pos(i, j + 1),
                              out.yhat.node_pos(i + 1, j + 1), 2, 3, 0, 1);
        }
    out.seam_relaxed_energy = pairwise_sum(seam_relax);

    // structural inequality: sum 1/2 P + off-partition relaxed seams vs H1(J_y) + C1 rho
    double off_part = pairwise_sum(seam_offpart);
    // retained cracks of the healed field that are off the partition boundary
    {
        std::vector<double> extra;
        for (const auto& [k, je] : f_healed.jumps)
            if (!part_boundary.count(k)) extra.push_back(f_eps_rho(je.amplitude().norm(), eps, rho) * h);
        off_part += pairwise_sum(extra);
    }
    double half_perims = 0.0;
    {
        // perimeters of the completed pieces
        for (std::size_t p = 0; p < part.pieces.size(); ++p) {
            long edges = 0;
            const int my = static_cast<int>(p) + 1;
            for (int j = win.y0; j < win.y1; ++j)
                for (int i = win.x0; i < win.x1; ++i) {
                    if (flab(i, j) != my) continue;
                    const int na[4] = {i - 1, i + 1, i, i};
                    const int nb[4] = {j, j, j - 1, j + 1};
                    for (int q = 0; q < 4; ++q)
                        if (win.contains(na[q], nb[q]) && flab(na[q], nb[q]) != my) ++edges;
                }
            half_perims += 0.5 * static_cast<double>(edges) * h;
        }
    }
    out.part_crack_lhs = half_perims + off_part;
    double jy = 0.0;
    {
        std::vector<double> terms;
        for (const auto& [k, je] : y_original.jumps) {
            const bool in_win =
                k.orient == 0
                    ? (k.i >= win.x0 && k.i < win.x1 && k.j >= win.y0 && k.j <= win.y1)
                    : (k.i >= win.x0 && k.i <= win.x1 && k.j >= win.y0 && k.j < win.y1);
            if (in_win) terms.push_back(h);
        }
        jy = pairwise_sum(terms);
    }
    out.measured_c1 = rho > 0.0 ? std::max(0.0, (out.part_crack_lhs - jy) / rho) : 0.0;
    out.part_crack_rhs = jy + out.measured_c1 * rho;
    return out;
}

RigidityReport report(const DeformationField& y_original, const DeformationField& yhat,
                      const DeformationField& u, const CaccioppoliPartition& part, double eps,
                      double rho, double eta) {
    RigidityReport rep;
    const int nx = part.nx, ny = part.ny;
    const double h = part.h, h2 = h * h;
    const CellRect& win = part.omega_rho;

    const double utol = 1e-11 * (1.0 + u.grad_inf_norm());
    {
        std::vector<double> interior, rim;
        for (const auto& [k, je] : u.jumps) {
            if (je.amplitude().norm() <= utol) continue;
            const bool on_rim = (k.orient == 0 && (k.j == win.y0 || k.j == win.y1)) ||
                                (k.orient == 1 && (k.i == win.x0 || k.i == win.x1));
            if (on_rim)
                rim.push_back(h);
            else
                interior.push_back(h);
        }
        rep.H1_Ju = pairwise_sum(interior);
        rep.H1_Ju_with_rim = rep.H1_Ju + pairwise_sum(rim);
    }

    std::vector<double> u2_terms, sym_terms, grad_terms;
    for (int j = win.y0; j < win.y1; ++j)
        for (int i = win.x0; i < win.x1; ++i) {
            const int lab = part.labels[static_cast<std::size_t>(j * nx + i)];
            if (lab <= 0) continue;
            const auto vals = u.corner_values(i, j);
            double acc = 0.0;
            for (const auto& v : vals) acc += v.norm2();
            u2_terms.push_back(0.25 * acc * h2);
            if (auto g = gradient_one_sided(u, i, j)) {
                grad_terms.push_back(g->frobenius2() * h2);
                const Mat2 rt = part.pieces[static_cast<std::size_t>(lab - 1)].motion.R.transposed();
                const Mat2 e = (rt * (*g)).sym();
                sym_terms.push_back(e.frobenius2() * h2);
            }
        }
    rep.u_L2_sq = pairwise_sum(u2_terms);
    rep.sym_strain_sq = pairwise_sum(sym_terms);
    rep.grad_u_sq = pairwise_sum(grad_terms);

    rep.E_eps_y = griffith_energy(y_original, eps);
    rep.E_eps_rho_yhat = relaxed_energy(yhat, eps, rho, win);

    // modification distances on the shared active region
    std::vector<double> d2, g2;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int c = j * nx + i;
            if (!y_original.active[static_cast<std::size_t>(c)] ||
                !yhat.active[static_cast<std::size_t>(c)])
                continue;
            const auto a = y_original.corner_values(i, j);
            const auto b = yhat.corner_values(i, j);
            double acc = 0.0;
            for (int q = 0; q < 4; ++q)
                acc += (a[static_cast<std::size_t>(q)] - b[static_cast<std::size_t>(q)]).norm2();
            d2.push_back(0.25 * acc * h2);
            const auto ga = gradient_one_sided(y_original, i, j);
            const auto gb = gradient_one_sided(yhat, i, j);
            if (ga && gb) g2.push_back((*ga - *gb).frobenius2() * h2);
        }
    rep.mod_dist_y2 = pairwise_sum(d2);
    rep.mod_dist_grad2 = pairwise_sum(g2);

    rep.total_perimeter = part.total_perimeter;
    double min_area = -1.0;
    for (const auto& piece : part.pieces) {
        const double area = static_cast<double>(piece.cells.size()) * h2;
        if (min_area < 0.0 || area < min_area) min_area = area;
    }
    rep.min_piece_area_over_rho = min_area > 0.0 && rho > 0.0 ? min_area / rho : 0.0;

    const double u2_eps = rep.u_L2_sq / eps;
    const double sym_eps = rep.sym_strain_sq / eps;
    const double grad_eps = rep.grad_u_sq / std::pow(eps, 1.0 - eta);
    const double energy_c = std::max(
        0.0, (rep.E_eps_rho_yhat.relaxed_total() - rep.E_eps_y.total()) / std::max(rho, 1e-12));
    rep.budget_flags = {
        {"H1_Ju", rep.H1_Ju, 0.0, true},
        {"u_l2_over_eps", u2_eps, 0.0, true},
        {"sym_strain_over_eps", sym_eps, 0.0, true},
        {"grad_u_over_eps_1meta", grad_eps, 0.0, true},
        {"relaxed_le_griffith", rep.E_eps_rho_yhat.relaxed_total(), rep.E_eps_y.total() + 1e-12,
         rep.E_eps_rho_yhat.relaxed_total() <=
             rep.E_eps_y.total() + energy_c * rho + 1e-9},
        {"energy_le_c", energy_c, 0.0, true},
        {"min_piece_area_over_rho", rep.min_piece_area_over_rho, 0.0, true},
    };
    return rep;
}

LinearVariantReport linear_variant(const DeformationField& u_field, double eps, double rho,
                                   double margin_factor) {
    LinearVariantReport rep;
    // grid set view of the displacement domain with cracks as cuts
    GridSet domain = extract_components(u_field.active, u_field.cell_lattice(),
                                        u_field.jumps.edge_keys());
    CaccioppoliPartition part = extract_partition(domain, rho, margin_factor);
    const CellRect& win = part.omega_rho;
    const double h2 = u_field.h * u_field.h;

    std::vector<double> sym_terms, dist_terms, jump_terms;
    for (const auto& piece : part.pieces) {
        LinearPiece lp;
        lp.cells = piece.cells;
        lp.motion = project_infinitesimal_rigid(u_field, piece.cells);
        for (int c : piece.cells) {
            const int i = c % u_field.nx, j = c / u_field.nx;
            if (auto g = gradient_one_sided(u_field, i, j)) {
                const Mat2 e = g->sym();
                sym_terms.push_back(e.frobenius2() * h2);
            }
            const auto vals = u_field.corner_values(i, j);
            const Vec2 pos[4] = {u_field.node_pos(i, j), u_field.node_pos(i + 1, j),
                                 u_field.node_pos(i, j + 1), u_field.node_pos(i + 1, j + 1)};
            double acc = 0.0;
            for (int q = 0; q < 4; ++q)
                acc += (vals[static_cast<std::size_t>(q)] - lp.motion(pos[q])).norm2();
            dist_terms.push_back(0.25 * acc * h2);
        }
        rep.pieces.push_back(std::move(lp));
    }
    const double utol = 1e-11 * (1.0 + u_field.grad_inf_norm());
    for (const auto& [k, je] : u_field.jumps) {
        const bool in_win = k.orient == 0
                                ? (k.i >= win.x0 && k.i < win.x1 && k.j >= win.y0 && k.j <= win.y1)
                                : (k.i >= win.x0 && k.i <= win.x1 && k.j >= win.y0 && k.j < win.y1);
        if (in_win && je.amplitude().norm() > utol) jump_terms.push_back(u_field.h);
    }
    rep.sym_strain_sq = pairwise_sum(sym_terms);
    rep.piecewise_dist_sq = pairwise_sum(dist_terms);
    rep.H1_Ju = pairwise_sum(jump_terms);
    rep.total_perimeter = part.total_perimeter;
    rep.budget_flags = {
        {"sym_strain_over_eps", rep.sym_strain_sq / eps, 0.0, true},
        {"piecewise_dist_over_eps", rep.piecewise_dist_sq / eps, 0.0, true},
        {"H1_Ju", rep.H1_Ju, 0.0, true},
    };
    return rep;
}

}  // namespace rigidity
