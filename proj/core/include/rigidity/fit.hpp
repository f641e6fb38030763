#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "rigidity/field.hpp"
#include "rigidity/grid_set.hpp"

namespace rigidity {

/// Unique nodes of a cell region with one-sided values. The context cell of a
/// node is the first region cell touching it (row-major), so values on crack
/// edges are taken from this region's side.
struct RegionNodes {
    std::vector<int> ids;
    std::vector<Vec2> pos;
    std::vector<Vec2> val;
};
RegionNodes collect_nodes(const DeformationField& f, std::span<const int> cells);

/// Rotation minimizing sum |grad y - R|^2 h^2 over the region's gradient
/// cells; closed-form polar factor of the summed gradient. Empty when the
/// region has no gradient-bearing cell.
std::optional<RigidMotion> best_fit_rotation(const DeformationField& f, std::span<const int> cells);
std::optional<RigidMotion> best_fit_rotation(const DeformationField& f, const CellRect& region);

/// (R, c) minimizing sum |y - (R x + c)|^2 h^2 over region nodes (centered
/// Procrustes). A single node yields R = Id, c = y - x.
RigidMotion best_fit_rigid_motion(const DeformationField& f, std::span<const int> cells);
RigidMotion best_fit_rigid_motion(const DeformationField& f, const CellRect& region);

/// L2-orthogonal projection onto span{(1,0),(0,1),(-x2,x1)} over region nodes.
InfinitesimalRigidMotion project_infinitesimal_rigid(const DeformationField& f,
                                                     std::span<const int> cells);
/// Same projection for explicit samples (used by the engine on transformed values).
InfinitesimalRigidMotion project_infinitesimal_rigid(std::span<const Vec2> pos,
                                                     std::span<const Vec2> val);

struct HarmonicSplit {
    DeformationField w;  // harmonic on the region interior, w = y on the boundary
    DeformationField z;  // y - w
    int iterations = 0;
    double residual = 0.0;
};

/// Split y = w + z on a connected, crack-free cell region: w solves the
/// 5-point Laplace equation with Dirichlet data y. Conjugate gradient to
/// relative residual 1e-10 within 10*n_unknowns iterations; throws
/// std::runtime_error with the residual on non-convergence.
HarmonicSplit harmonic_split(const DeformationField& f, std::span<const int> cells);

struct ChainComponentResult {
    Mat2 rotation;            // R(p0) of the component's root square
    bool exact_rigid = false; // gamma below rounding; ratio meaningless
    double gamma = 0.0;       // dist^2 energy on the component
    double residual2 = 0.0;   // |grad y - R|^2_{L2}
    double ratio = 0.0;       // residual2 / gamma
    int squares = 0;
};

struct ChainRotationResult {
    std::vector<ChainComponentResult> components;
    /// per-square best-fit rotations: key = (bx, by) tile index
    std::map<std::pair<int, int>, Mat2> square_rotation;
};

/// Per-square best-fit rotations on the k-tiling of U, chained breadth-first
/// from each component's root square; returns the measured rigidity ratio per
/// connected component at scale k.
ChainRotationResult chain_rotation_field(const DeformationField& f, const GridSet& u, double k);

struct ChainPropagateResult {
    double lhs = 0.0;       // |(R_m . + c_m) - (R_0 . + c_0)|^2_{L2(rect_0)}
    double rhs = 0.0;       // m^3 sum of squared per-link gaps
    double fitted_c = 0.0;  // lhs / rhs when rhs > 0
    std::vector<double> link_gap2;
};

/// Chain estimate for rigid motions on overlapping rectangles (physical
/// coordinates). Consecutive rectangles must overlap with nonempty interior.
ChainPropagateResult rigid_chain_propagate(std::span<const RigidMotion> motions,
                                           std::span<const CellRect> rects,
                                           const DeformationField& grid);

/// Exact integral of |(A x + b)| ^2 over an axis-aligned box.
double affine_gap_integral(const Mat2& a, const Vec2& b, const Vec2& lo, const Vec2& hi);

/// L2^2 distance of two rigid motions over a box.
double motion_gap_L2sq(const RigidMotion& m1, const RigidMotion& m2, const Vec2& lo,
                       const Vec2& hi);

}  // namespace rigidity
