#include "rigidity/generators.hpp"

#include <cmath>
#include <future>
#include <stdexcept>

#include "rigidity/fit.hpp"

namespace rigidity {

namespace {

Vec2 beam_map(double x1, double x2) { return {(x2 + 1.0) * std::sin(x1), (x2 + 1.0) * std::cos(x1)}; }

}  // namespace

DeformationField gen_beam(double delta, double h) {
    if (!(h > 0.0) || h > delta / 8.0 + 1e-15)
        throw std::invalid_argument("gen_beam: need h <= delta/8");
    const int ny = std::max(8, static_cast<int>(std::lround(delta / h)));
    const double hh = delta / ny;  // snap so the strip height is exact
    const int nx = std::max(1, static_cast<int>(std::lround(1.0 / hh)));
    DeformationField f;
    f.h = hh;
    f.nx = nx;
    f.ny = ny;
    f.origin = {0.0, 0.0};
    f.values.resize(static_cast<std::size_t>(f.node_count()));
    f.active.assign(static_cast<std::size_t>(f.cell_count()), 1);
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            f.values[static_cast<std::size_t>(f.node_id(i, j))] = beam_map(i * hh, j * hh);
    return f;
}

DeformationField gen_twopiece(double eps, double h, double pad) {
    const double d = std::cbrt(eps);
    if (!(h > 0.0) || h > d / 8.0 + 1e-15)
        throw std::invalid_argument("gen_twopiece: need h <= eps^(1/3)/8");
    const int nd = std::max(8, static_cast<int>(std::lround(d / h)));
    const double hh = d / nd;  // strip height exactly on the grid
    const int nL = std::max(1, static_cast<int>(std::lround(1.0 / hh)));
    const int npad = std::max(2, static_cast<int>(std::lround(pad / hh)));
    const double L = nL * hh;

    DeformationField f;
    f.h = hh;
    f.nx = nL + 2 * npad;
    f.ny = nd + 2 * npad;
    f.origin = {-npad * hh, -npad * hh};
    f.values.resize(static_cast<std::size_t>(f.node_count()));
    f.active.assign(static_cast<std::size_t>(f.cell_count()), 1);

    // U spans cells [npad, npad+nL) x [npad, npad+nd)
    auto in_strip = [&](int ci, int cj) {
        return ci >= npad && ci < npad + nL && cj >= npad && cj < npad + nd;
    };
    auto outside_map = [&](const Vec2& x) { return Vec2{x.x, x.y + 1.0}; };
    for (int j = 0; j <= f.ny; ++j)
        for (int i = 0; i <= f.nx; ++i) {
            const Vec2 x = f.node_pos(i, j);
            const bool interior_node =
                i > npad && i < npad + nL && j > npad && j < npad + nd;
            // nodes on the continuous left side x1=0 agree for both maps
            const bool left_node = i == npad && j >= npad && j <= npad + nd;
            f.values[static_cast<std::size_t>(f.node_id(i, j))] =
                (interior_node || left_node) ? beam_map(x.x, x.y) : outside_map(x);
        }

    auto add_jump = [&](const EdgeKey& e, const Vec2& p0, const Vec2& p1, bool lo_is_strip) {
        JumpEdge je;
        je.edge = e;
        const Vec2 s0 = beam_map(p0.x, p0.y), s1 = beam_map(p1.x, p1.y);
        const Vec2 o0 = outside_map(p0), o1 = outside_map(p1);
        je.lo0 = lo_is_strip ? s0 : o0;
        je.lo1 = lo_is_strip ? s1 : o1;
        je.hi0 = lo_is_strip ? o0 : s0;
        je.hi1 = lo_is_strip ? o1 : s1;
        f.jumps.insert(je);
    };
    for (int i = npad; i < npad + nL; ++i) {
        add_jump({0, i, npad}, f.node_pos(i, npad), f.node_pos(i + 1, npad), false);  // bottom
        add_jump({0, i, npad + nd}, f.node_pos(i, npad + nd), f.node_pos(i + 1, npad + nd),
                 true);  // top
    }
    for (int j = npad; j < npad + nd; ++j)
        add_jump({1, npad + nL, j}, f.node_pos(npad + nL, j), f.node_pos(npad + nL, j + 1),
                 true);  // right side {L} x (0,d)
    (void)L;
    return f;
}

namespace {

struct SplitNode {
    CellRect rect;
};

}  // namespace

PiecewiseRigidInstance gen_piecewise_rigid(std::uint64_t seed, int n_pieces, int nx, int ny,
                                           double h) {
    if (n_pieces < 1) throw std::invalid_argument("gen_piecewise_rigid: n_pieces >= 1 required");
    Rng rng(seed);
    const int margin = 2;

    // guillotine cuts with bounded retries
    std::vector<CellRect> rects{CellRect{0, 0, nx, ny}};
    int attempts = 0;
    while (static_cast<int>(rects.size()) < n_pieces && attempts < 1000) {
        ++attempts;
        // split the largest rectangle that still has room
        std::size_t pick = 0;
        int best = -1;
        for (std::size_t i = 0; i < rects.size(); ++i) {
            const int room = std::max(rects[i].width(), rects[i].height());
            if (room > best) {
                best = room;
                pick = i;
            }
        }
        CellRect r = rects[pick];
        const bool vertical = r.width() >= r.height();
        const int span = vertical ? r.width() : r.height();
        if (span < 2 * margin + 1) break;
        const int cut = margin + static_cast<int>(rng.below(static_cast<std::uint64_t>(span - 2 * margin)));
        CellRect a = r, b = r;
        if (vertical) {
            a.x1 = r.x0 + cut;
            b.x0 = r.x0 + cut;
        } else {
            a.y1 = r.y0 + cut;
            b.y0 = r.y0 + cut;
        }
        if (a.empty() || b.empty()) continue;
        rects[pick] = a;
        rects.push_back(b);
    }

    PiecewiseRigidInstance inst;
    inst.truth_labels.assign(static_cast<std::size_t>(nx * ny), 0);
    for (std::size_t p = 0; p < rects.size(); ++p)
        for (int j = rects[p].y0; j < rects[p].y1; ++j)
            for (int i = rects[p].x0; i < rects[p].x1; ++i)
                inst.truth_labels[static_cast<std::size_t>(j * nx + i)] = static_cast<int>(p) + 1;

    for (std::size_t p = 0; p < rects.size(); ++p) {
        RigidMotion m;
        const double angle = rng.uniform(-3.14159265358979323846, 3.14159265358979323846);
        m.R = Mat2::rotation(angle);
        m.c = {rng.next_double(), rng.next_double()};
        inst.motions.push_back(m);
    }

    DeformationField f;
    f.h = h;
    f.nx = nx;
    f.ny = ny;
    f.origin = {0.0, 0.0};
    f.values.resize(static_cast<std::size_t>(f.node_count()));
    f.active.assign(static_cast<std::size_t>(nx * ny), 1);

    auto label_at = [&](int i, int j) {
        if (i < 0 || i >= nx || j < 0 || j >= ny) return 0;
        return inst.truth_labels[static_cast<std::size_t>(j * nx + i)];
    };
    // base nodal values: motion of the adjacent cell with the smallest label
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            int lab = 0;
            for (const auto [ci, cj] : {std::pair{i - 1, j - 1}, std::pair{i, j - 1},
                                        std::pair{i - 1, j}, std::pair{i, j}}) {
                const int l = label_at(ci, cj);
                if (l > 0 && (lab == 0 || l < lab)) lab = l;
            }
            const Vec2 x = f.node_pos(i, j);
            f.values[static_cast<std::size_t>(f.node_id(i, j))] =
                lab > 0 ? inst.motions[static_cast<std::size_t>(lab - 1)](x) : x;
        }
    // crack edges along label interfaces with exact one-sided traces
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int l = label_at(i, j);
            if (label_at(i + 1, j) != l && i + 1 < nx) {
                JumpEdge je;
                je.edge = {1, i + 1, j};
                const Vec2 p0 = f.node_pos(i + 1, j), p1 = f.node_pos(i + 1, j + 1);
                je.lo0 = inst.motions[static_cast<std::size_t>(l - 1)](p0);
                je.lo1 = inst.motions[static_cast<std::size_t>(l - 1)](p1);
                const int lr = label_at(i + 1, j);
                je.hi0 = inst.motions[static_cast<std::size_t>(lr - 1)](p0);
                je.hi1 = inst.motions[static_cast<std::size_t>(lr - 1)](p1);
                f.jumps.insert(je);
            }
            if (label_at(i, j + 1) != l && j + 1 < ny) {
                JumpEdge je;
                je.edge = {0, i, j + 1};
                const Vec2 p0 = f.node_pos(i, j + 1), p1 = f.node_pos(i + 1, j + 1);
                je.lo0 = inst.motions[static_cast<std::size_t>(l - 1)](p0);
                je.lo1 = inst.motions[static_cast<std::size_t>(l - 1)](p1);
                const int lu = label_at(i, j + 1);
                je.hi0 = inst.motions[static_cast<std::size_t>(lu - 1)](p0);
                je.hi1 = inst.motions[static_cast<std::size_t>(lu - 1)](p1);
                f.jumps.insert(je);
            }
        }
    inst.field = std::move(f);
    return inst;
}

ProbeResult probe_constant(const std::vector<double>& deltas, int cells_per_delta, int threads) {
    ProbeResult out;
    if (deltas.size() < 3) {
        out.ok = false;
        return out;
    }
    auto eval = [&](double delta) {
        const DeformationField f = gen_beam(delta, delta / cells_per_delta);
        const CellRect all{0, 0, f.nx, f.ny};
        const auto rot = best_fit_rotation(f, all);
        double num = 0.0;
        std::vector<double> terms;
        const double h2 = f.h * f.h;
        for (int j = 0; j < f.ny; ++j)
            for (int i = 0; i < f.nx; ++i)
                if (auto g = gradient(f, i, j)) terms.push_back((*g - rot->R).frobenius2() * h2);
        num = pairwise_sum(terms);
        const double den = cell_energy(f, all);
        ProbePoint pt;
        pt.parameter = delta;
        pt.ratio = den > 0.0 ? num / den : 0.0;
        pt.constant = pt.ratio * delta * delta;
        return pt;
    };
    if (threads > 1) {
        std::vector<std::future<ProbePoint>> futs;
        for (double d : deltas)
            futs.push_back(std::async(std::launch::async, eval, d));
        for (auto& fu : futs) out.points.push_back(fu.get());
    } else {
        for (double d : deltas) out.points.push_back(eval(d));
    }

    // log-log least squares
    const std::size_t n = out.points.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& p : out.points) {
        const double x = std::log(p.parameter), y = std::log(std::max(p.ratio, 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    const double nn = static_cast<double>(n);
    const double denom = nn * sxx - sx * sx;
    out.slope = denom != 0.0 ? (nn * sxy - sx * sy) / denom : 0.0;
    const double sst = syy - sy * sy / nn;
    const double ssr = sst - out.slope * (sxy - sx * sy / nn);
    out.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
    out.ok = n >= 3 && out.r_squared >= 0.95;
    return out;
}

}  // namespace rigidity
