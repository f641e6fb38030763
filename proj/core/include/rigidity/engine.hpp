#pragma once

#include <array>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "rigidity/field.hpp"
#include "rigidity/fit.hpp"
#include "rigidity/grid_set.hpp"
#include "rigidity/schedule.hpp"

namespace rigidity {

/// Shifted square tiling of the cell grid. Tiles have side `side` cells;
/// shift in {1,..,4} offsets the tiling by half a tile in x and/or y.
struct TileGrid {
    int side = 1;
    int ox = 0, oy = 0;  // cell offsets
    int nx = 0, ny = 0;

    static TileGrid make(int side, int shift, int nx, int ny);
    std::pair<int, int> tile_of(int i, int j) const {
        return {(i + ox) / side, (j + oy) / side};
    }
    CellRect tile_rect(int bx, int by) const {
        return CellRect{bx * side - ox, by * side - oy, (bx + 1) * side - ox, (by + 1) * side - oy}
            .clipped(nx, ny);
    }
    /// Unclipped tile bounds (for geometric centers of partial tiles).
    CellRect tile_rect_full(int bx, int by) const {
        return {bx * side - ox, by * side - oy, (bx + 1) * side - ox, (by + 1) * side - oy};
    }
    int tiles_x() const { return (nx + ox + side - 1) / side; }
    int tiles_y() const { return (ny + oy + side - 1) / side; }
};

struct CarveResult {
    GridSet set;
    std::vector<CellRect> carved;
    double gamma = 0.0;       // threshold energy of the carving criterion
    double budget_lhs = 0.0;  // sum of |dQ|_* over carved squares
    double budget_rhs = 0.0;  // 8 gamma / eps
};

/// Carve the k-squares whose dist^2 energy exceeds eps*k out of W
/// (W' = (W \ Q) u dQ per square). The carved star-norm increase satisfies
/// budget_lhs <= budget_rhs exactly.
CarveResult threshold_carve(const DeformationField& f, const GridSet& w, double k, double eps);

struct ShiftFits {
    std::vector<int> fit_id;  // per cell; -1 outside any fitted component
    std::vector<Mat2> rotation;
};

struct PiecewiseRotationResult {
    GridSet set;  // carved W'
    std::array<ShiftFits, 4> fits;
    double gamma = 0.0;   // dist^2 on W'
    double delta2 = 0.0;  // sum_i |grad y - R_i|^2
    double delta4 = 0.0;
    int carved_squares = 0;
    double budget_lhs = 0.0, budget_rhs = 0.0;
    int flagged_components = 0;  // components without gradient cells
};

/// Threshold carving followed by per-square best-fit rotations on the four
/// shifted k-lattices, constant on connected components of Q n W.
PiecewiseRotationResult piecewise_rotation_map(const DeformationField& f, const GridSet& w,
                                               double k, double m, double eps);

struct LocalMotionMaps {
    int side = 1;      // lambda-square side in cells
    double lambda = 0.0;
    std::array<TileGrid, 4> grids;
    std::array<std::map<std::tuple<int, int, int>, RigidMotion>, 4> motions;
    std::array<std::vector<int>, 4> cell_comp;  // per shift, per cell: window comp id or -1
    std::vector<std::uint8_t> uj_cells;         // cells covered by qualifying lambda squares

    const RigidMotion* motion_at(int shift, int i, int j) const;
};

struct LocalMotionResult {
    GridSet set;  // U, after the extended carving
    LocalMotionMaps maps;
    int carved_squares = 0;
    int dropped_tiles = 0;
    int flagged_components = 0;
    // measured analogues of the lambda-square estimates and their references
    double dev_y2 = 0.0;       // max_j |y - (R_j . + c_j)|^2_{L2(U)}
    double dev_grad2 = 0.0;    // max_j |grad y - R_j|^2
    double dev_grad4 = 0.0;
    double pair_rot2 = 0.0;    // max pair |R_j1 - R_j2|^2_{L2(U_J)}
    double pair_motion2 = 0.0;
    double ref_y2 = 0.0;       // C_m^2 lambda^2 (gamma + delta2 + eps |W|_*)
    double ref_grad2 = 0.0;
};

/// Korn-Poincare step: per lambda-square (four shifts), per connected
/// component of the enlarged 3-lambda window, project R^T y - id onto
/// infinitesimal rigid motions and round back to a rigid motion.
LocalMotionResult local_rigid_motion_map(const DeformationField& f, const GridSet& w, double k,
                                         double m, double eps,
                                         const std::array<ShiftFits, 4>& rhat,
                                         const EngineConfig& cfg);

struct HealResult {
    DeformationField field;
    GridSet healed_set;
    double dist2 = 0.0;       // |dist(grad ytilde, SO(2))|^2 on U^H
    double move2 = 0.0;       // |ytilde - y|^2_{L2(U)}
    double grad_move2 = 0.0;  // |grad ytilde - grad y|^2_{L2(U)}
    int missing_squares = 0;  // squares blended with a renormalized partial sum
};

/// Partition-of-unity blend of the lambda-square rigid motions; crack
/// components below lambda are healed away. Throws std::runtime_error naming
/// the square when no rigid motion covers a node.
HealResult heal(const DeformationField& f, const GridSet& u, const LocalMotionMaps& maps,
                double lambda);

struct SubatomisticResult {
    std::map<std::pair<int, int>, Mat2> rotations;
    double curl_total = 0.0;
    double bound_lhs = 0.0;  // sum |grad y - R|^2 on U
    double bound_rhs = 0.0;  // gamma + eps |U|_*
    bool regime_flag = false;  // k at or below the grid: deferred to carving
    int solver_iterations = 0;
};

/// Sub-atomistic fit: extend by the identity off U, repair the gradient field
/// through a least-squares potential, fit one rotation per k-square.
SubatomisticResult subatomistic_fit(const DeformationField& f, const GridSet& u, double k,
                                    double eps, double grad_bound);

struct StepRecord {
    int j = 0;
    double s = 0.0, eps = 0.0, k = 0.0, lambda = 0.0;
    double beta = 0.0;   // |H^lambda(W)|_*
    double gamma = 0.0;  // dist^2 on W
    double alpha = 0.0;  // dist^4 on W
    int carved_cells = 0;
    double star_norm = 0.0;
    double delta2 = 0.0, delta4 = 0.0;
    double heal_dist2 = 0.0, heal_move2 = 0.0, heal_grad_move2 = 0.0;
    int dropped_tiles = 0;
};

struct IterateResult {
    DeformationField field;
    GridSet set;
    std::vector<StepRecord> trace;
    std::string stop_reason;
    std::vector<std::string> violations;  // budget violations (CLI exit 4)
    int start_j = -1;
    int steps_run = 0;
    bool band_reached = false;
    int initial_cells = 0;
    int final_cells = 0;
    int carved_cells_total = 0;
};

/// The coarsening loop: harmonic split, rotation maps, rigid-motion maps,
/// healing and set bookkeeping per schedule step, until the terminal scale
/// band or a stopping guard.
IterateResult iterate(const DeformationField& f, const GridSet& omega_y0, const EngineConfig& cfg);

/// dist^4 analogue of cell_energy (alpha bookkeeping).
double cell_energy_L4(const DeformationField& f, const CellRect& region);

/// Boundary length of W inside a cell rect: mask boundary edges plus cut
/// edges counted twice.
double boundary_length_in(const GridSet& w, const CellRect& rect);

}  // namespace rigidity
