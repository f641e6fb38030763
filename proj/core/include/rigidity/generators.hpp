#pragma once

#include <cstdint>
#include <vector>

#include "rigidity/field.hpp"

namespace rigidity {

/// Thin-beam bending map y = (x2+1)(sin x1, cos x1) on (0,L) x (0,delta),
/// L snapped to the grid near 1. Requires h <= delta/8.
DeformationField gen_beam(double delta, double h);

/// Composite field: identity + e2 off U, the beam map on U = (0,L) x (0,d)
/// with d = eps^(1/3) snapped to the grid; crack along the bottom, top and
/// right sides of U. The pad parameter widens the ambient box.
DeformationField gen_twopiece(double eps, double h, double pad = 0.25);

struct PiecewiseRigidInstance {
    DeformationField field;
    std::vector<int> truth_labels;  // per cell, 1..n
    std::vector<RigidMotion> motions;
};

/// Random guillotine split of an nx x ny grid into n pieces, one random rigid
/// motion per piece; slits are grid-aligned cut lines. Deterministic in seed.
PiecewiseRigidInstance gen_piecewise_rigid(std::uint64_t seed, int n_pieces, int nx, int ny,
                                           double h);

struct ProbePoint {
    double parameter = 0.0;
    double ratio = 0.0;     // |grad y - R|^2 / |dist|^2
    double constant = 0.0;  // ratio * parameter^2
};

struct ProbeResult {
    std::vector<ProbePoint> points;
    double slope = 0.0;  // log-log least squares
    double r_squared = 0.0;
    bool ok = false;  // >= 3 points and R^2 >= 0.95
};

/// Rigidity-constant probe on the beam family: fits the log-log slope of the
/// best-rotation ratio against delta (expected -2).
ProbeResult probe_constant(const std::vector<double>& deltas, int cells_per_delta = 64,
                           int threads = 1);

}  // namespace rigidity
