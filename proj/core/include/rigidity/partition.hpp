#pragma once

#include <map>
#include <string>
#include <vector>

#include "rigidity/engine.hpp"
#include "rigidity/field.hpp"
#include "rigidity/grid_set.hpp"

namespace rigidity {

struct PieceInfo {
    std::vector<int> cells;  // healed cells of the piece, sorted
    RigidMotion motion;
    double perimeter = 0.0;
};

struct CaccioppoliPartition {
    int nx = 0, ny = 0;
    double h = 1.0;
    Vec2 origin{0.0, 0.0};
    CellRect omega_rho;       // analysis window
    std::vector<int> labels;  // per cell: 0 outside Omega_rho or excluded, >=1 piece id
    std::vector<PieceInfo> pieces;
    double total_perimeter = 0.0;
};

/// Pieces are the cut-aware connected components of the healed region inside
/// Omega_rho (margin = factor * rho on each side); labels only.
CaccioppoliPartition extract_partition(const GridSet& w_final, double rho,
                                       double margin_factor = 1.0);

struct MotionAssignment {
    double max_chain_gap = 0.0;  // worst deviation chain fit vs global fit
    int dropped_pieces = 0;
};

/// Per-piece Procrustes fit plus a chain-aggregated cross-check over
/// rho-squares inside each piece.
MotionAssignment assign_rigid_motions(const DeformationField& f_healed,
                                      CaccioppoliPartition& partition, double rho);

/// u = yhat - (R_j x + c_j) on each piece, 0 outside Omega_rho. Jump traces
/// across piece interfaces carry the one-sided motion mismatch.
DeformationField build_displacement(const DeformationField& f_healed,
                                    const CaccioppoliPartition& partition);

struct SeparatorResult {
    std::vector<EdgeKey> edges;  // S
    /// per piece: boundary loops of its completed region (outer loop first)
    std::vector<std::vector<std::vector<EdgeKey>>> curves;
    std::vector<int> full_labels;  // every Omega_rho cell assigned to a piece (0 outside)
    double h1_S = 0.0;
    double c1_length = 0.0;    // (H1(S) - |W|_*)/rho, reported
    double max_fill_dist = 0.0;  // (iv) audit: max distance of excluded cells to S u dOmega_hat
    double c1_dist = 0.0;
    bool cycles_ok = true;       // (iii): every bounded face holds a piece
    bool connected_ok = true;    // (v) audit after repair
    int unreachable_cells = 0;   // fill cells with no reachable piece (flagged)
};

/// Grid separator: excluded cells join their nearest piece (cut-aware BFS,
/// ties to the lower label); S is the set of label interfaces. Properties
/// (i)-(v) are audited and reported. `walls` adds crack edges that block the
/// fill (original cracks in carved territory).
SeparatorResult jordan_separator(const CaccioppoliPartition& partition, const GridSet& hat_omega,
                                 double rho, int q_exponent,
                                 const std::vector<EdgeKey>& walls = {});

struct AssemblyResult {
    DeformationField yhat;
    std::vector<int> block_of_cell;  // fill bookkeeping, -1 on healed cells
    int identity_fills = 0;          // fill regions without a fitted block (flagged)
    int neighbor_rule_violations = 0;
    double seam_relaxed_energy = 0.0;  // relaxed energy of the off-partition seams
    double part_crack_lhs = 0.0;       // sum 1/2 P(P_j) + relaxed off-partition seams
    double part_crack_rhs = 0.0;       // H1(J_y) + C1 rho with measured C1
    double measured_c1 = 0.0;
};

/// Piecewise-rigid fill of the excluded set from per-block boundary fits;
/// neighbor blocks differ by at most one index (audited).
AssemblyResult assemble_extension(const DeformationField& y_original,
                                  const DeformationField& f_healed,
                                  const CaccioppoliPartition& partition,
                                  const SeparatorResult& sep, const GridSet& hat_omega, double eps,
                                  double rho, int q_exponent);

struct BudgetFlag {
    std::string name;
    double measured = 0.0;
    double reference = 0.0;
    bool pass = true;
};

struct RigidityReport {
    double H1_Ju = 0.0;           // essential jumps of u, interior convention
    double H1_Ju_with_rim = 0.0;  // including the Omega_rho rim
    double u_L2_sq = 0.0;
    double sym_strain_sq = 0.0;  // sum_j |e(R_j^T grad u)|^2
    double grad_u_sq = 0.0;
    EnergyBreakdown E_eps_y;
    EnergyBreakdown E_eps_rho_yhat;
    double mod_dist_y2 = 0.0;     // |yhat - y|^2 on the shared region
    double mod_dist_grad2 = 0.0;  // |grad yhat - grad y|^2
    double min_piece_area_over_rho = 0.0;
    double total_perimeter = 0.0;
    std::vector<BudgetFlag> budget_flags;
};

RigidityReport report(const DeformationField& y_original, const DeformationField& yhat,
                      const DeformationField& u, const CaccioppoliPartition& partition, double eps,
                      double rho, double eta = 0.2);

struct LinearPiece {
    std::vector<int> cells;
    InfinitesimalRigidMotion motion;
};

struct LinearVariantReport {
    std::vector<LinearPiece> pieces;
    double sym_strain_sq = 0.0;       // |e(grad u)|^2 on Omega_rho
    double piecewise_dist_sq = 0.0;   // sum_j |u - (A_j . + c_j)|^2
    double H1_Ju = 0.0;
    double total_perimeter = 0.0;
    std::vector<BudgetFlag> budget_flags;
};

/// Linearized pipeline: infinitesimal-rigid projections per piece, no
/// rotation rounding.
LinearVariantReport linear_variant(const DeformationField& u_field, double eps, double rho,
                                   double margin_factor = 1.0);

}  // namespace rigidity
