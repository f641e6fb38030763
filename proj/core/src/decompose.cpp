#include "rigidity/decompose.hpp"

#include <algorithm>

namespace rigidity {

void complete_partition(CaccioppoliPartition& part, const SeparatorResult& sep) {
    part.labels = sep.full_labels;
    for (auto& piece : part.pieces) piece.cells.clear();
    const CellRect& win = part.omega_rho;
    for (int j = win.y0; j < win.y1; ++j)
        for (int i = win.x0; i < win.x1; ++i) {
            const int lab = part.labels[static_cast<std::size_t>(j * part.nx + i)];
            if (lab > 0) part.pieces[static_cast<std::size_t>(lab - 1)].cells.push_back(j * part.nx + i);
        }
    double total = 0.0;
    for (std::size_t p = 0; p < part.pieces.size(); ++p) {
        std::sort(part.pieces[p].cells.begin(), part.pieces[p].cells.end());
        long edges = 0;
        const int my = static_cast<int>(p) + 1;
        for (int c : part.pieces[p].cells) {
            const int a = c % part.nx, b = c / part.nx;
            const int na[4] = {a - 1, a + 1, a, a};
            const int nb[4] = {b, b, b - 1, b + 1};
            for (int q = 0; q < 4; ++q) {
                if (!win.contains(na[q], nb[q])) continue;
                if (part.labels[static_cast<std::size_t>(nb[q] * part.nx + na[q])] != my) ++edges;
            }
        }
        part.pieces[p].perimeter = static_cast<double>(edges) * part.h;
        total += part.pieces[p].perimeter;
    }
    part.total_perimeter = total;
}

DecomposeResult run_decompose(const DeformationField& f, const EngineConfig& cfg) {
    DecomposeResult out;
    GridSet w0 = extract_components(f.active, f.cell_lattice(), f.jumps.edge_keys());
    out.engine = iterate(f, w0, cfg);
    out.partition = extract_partition(out.engine.set, cfg.rho, cfg.omega_rho_factor);
    assign_rigid_motions(out.engine.field, out.partition, cfg.rho);
    // original cracks in carved territory keep separating the fill
    std::vector<EdgeKey> walls;
    for (const auto& [k, je] : f.jumps) {
        const auto& mask = out.engine.set.mask();
        auto active_at = [&](int i, int j) {
            return i >= 0 && i < f.nx && j >= 0 && j < f.ny &&
                   mask[static_cast<std::size_t>(j * f.nx + i)] != 0;
        };
        const bool interior = k.orient == 0
                                  ? (active_at(k.i, k.j - 1) && active_at(k.i, k.j))
                                  : (active_at(k.i - 1, k.j) && active_at(k.i, k.j));
        if (!interior) walls.push_back(k);
    }
    out.separator =
        jordan_separator(out.partition, out.engine.set, cfg.rho, cfg.q_exponent, walls);
    out.assembly = assemble_extension(f, out.engine.field, out.partition, out.separator,
                                      out.engine.set, cfg.eps, cfg.rho, cfg.q_exponent);
    complete_partition(out.partition, out.separator);
    out.displacement = build_displacement(out.assembly.yhat, out.partition);
    out.rep = report(f, out.assembly.yhat, out.displacement, out.partition, cfg.eps, cfg.rho,
                     cfg.eta);
    return out;
}

}  // namespace rigidity
