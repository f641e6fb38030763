#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "rigidity/grid_set.hpp"
#include "rigidity/lattice.hpp"

namespace rigidity {

enum class Side : std::int8_t { S = 0, N = 1, W = 2, E = 3 };

/// One crack edge with one-sided endpoint traces. `lo`/`hi` name the cell on
/// the lower/left respectively upper/right side of the canonical edge;
/// endpoint 0 is the lexicographically smaller edge endpoint.
struct JumpEdge {
    EdgeKey edge;
    Vec2 lo0, lo1;  // trace from the lower/left cell
    Vec2 hi0, hi1;  // trace from the upper/right cell
    /// Crack opening [y] at the edge midpoint, plus side = lower/left cell.
    Vec2 amplitude() const { return 0.5 * ((lo0 + lo1) - (hi0 + hi1)); }
};

/// Crack edges with one-sided traces. Edges are stored canonically and each
/// physical edge appears at most once, so H^1(J_y) never double counts.
class JumpSet {
  public:
    void insert(JumpEdge e) { edges_[e.edge] = e; }
    bool contains(const EdgeKey& e) const { return edges_.count(e) != 0; }
    const JumpEdge* find(const EdgeKey& e) const {
        auto it = edges_.find(e);
        return it == edges_.end() ? nullptr : &it->second;
    }
    std::size_t size() const { return edges_.size(); }
    bool empty() const { return edges_.empty(); }
    auto begin() const { return edges_.begin(); }
    auto end() const { return edges_.end(); }
    std::vector<EdgeKey> edge_keys() const {
        std::vector<EdgeKey> keys;
        keys.reserve(edges_.size());
        for (const auto& [k, v] : edges_) keys.push_back(k);
        return keys;
    }

  private:
    std::map<EdgeKey, JumpEdge> edges_;
};

/// Nodal 2-vector deformation on a square grid of h-cells with an active-cell
/// mask and a crack edge set. Nodes are (nx+1) x (ny+1), row major; node (i,j)
/// sits at origin + h*(i,j). Fields are immutable by convention: operations
/// build new values.
struct DeformationField {
    double h = 1.0;
    int nx = 0, ny = 0;
    Vec2 origin{0.0, 0.0};
    std::vector<Vec2> values;        // nodal, (nx+1)*(ny+1)
    std::vector<std::uint8_t> active;  // per cell, nx*ny
    JumpSet jumps;

    int node_count() const { return (nx + 1) * (ny + 1); }
    int cell_count() const { return nx * ny; }
    int node_id(int i, int j) const { return j * (nx + 1) + i; }
    int cell_id(int i, int j) const { return j * nx + i; }
    bool cell_in_range(int i, int j) const { return i >= 0 && i < nx && j >= 0 && j < ny; }
    bool cell_active(int i, int j) const {
        return cell_in_range(i, j) && active[static_cast<std::size_t>(cell_id(i, j))] != 0;
    }
    Vec2 node_pos(int i, int j) const { return {origin.x + h * i, origin.y + h * j}; }
    Vec2 cell_center(int i, int j) const {
        return {origin.x + h * (i + 0.5), origin.y + h * (j + 0.5)};
    }

    EdgeKey side_edge(int i, int j, Side s) const {
        switch (s) {
            case Side::S: return {0, i, j};
            case Side::N: return {0, i, j + 1};
            case Side::W: return {1, i, j};
            default: return {1, i + 1, j};
        }
    }
    bool cell_cut(int i, int j) const {
        return jumps.contains(side_edge(i, j, Side::S)) || jumps.contains(side_edge(i, j, Side::N)) ||
               jumps.contains(side_edge(i, j, Side::W)) || jumps.contains(side_edge(i, j, Side::E));
    }

    /// Corner values of a cell seen from inside that cell: nodes on a crack
    /// edge take the trace of this cell's side. Order SW, SE, NW, NE.
    std::array<Vec2, 4> corner_values(int i, int j) const;

    /// Lattice of the cell grid (cells of side h, so spacing = h/2).
    Lattice cell_lattice() const {
        return Lattice{0.5 * h, 1, nx, ny, {origin.x + 0.5 * h, origin.y + 0.5 * h}};
    }

    /// max |grad y| over gradient-bearing cells (the recorded Lipschitz bound).
    double grad_inf_norm() const;
};

/// Bilinear per-cell gradient at the cell center; exact on affine fields.
/// Empty when the cell is inactive or cut by a crack edge.
std::optional<Mat2> gradient(const DeformationField& f, int i, int j);

/// One-sided bilinear gradient: crack-cut corners take this cell's traces.
/// Empty only when the cell is inactive.
std::optional<Mat2> gradient_one_sided(const DeformationField& f, int i, int j);

/// Sum of dist^2(grad y, SO(2)) h^2 over active, uncut cells of the region.
double cell_energy(const DeformationField& f, const CellRect& region);
double cell_energy(const DeformationField& f, std::span<const int> cells);
double cell_energy(const DeformationField& f);

struct EnergyBreakdown {
    double bulk = 0.0;             // (1/eps) * int dist^2
    double surface = 0.0;          // H^1(J_y)
    double relaxed_surface = 0.0;  // int f_eps^rho(|[y]|)
    double epsilon = 0.0;
    double rho = 0.0;

    double total() const { return bulk + surface; }
    double relaxed_total() const { return bulk + relaxed_surface; }
};

/// Griffith energy: bulk = cell energy / eps, surface = H^1(J_y).
EnergyBreakdown griffith_energy(const DeformationField& f, double eps);

/// Relaxed surface density min(x / (sqrt(eps) rho), 1).
double f_eps_rho(double x, double eps, double rho);

/// Relaxed Griffith energy on a cell region; jump edges are counted when
/// adjacent to a region cell.
EnergyBreakdown relaxed_energy(const DeformationField& f, double eps, double rho,
                               const CellRect& region);
EnergyBreakdown relaxed_energy(const DeformationField& f, double eps, double rho);

/// Total variation of the discrete curl of the gradient over interior
/// vertices of the region: gradient circulation around the dual plaquette
/// plus crack-opening differences where the loop crosses jump edges.
double curl_defect(const DeformationField& f, const CellRect& region);

/// H^1 length of the stored jump set (each edge once).
double jump_length(const DeformationField& f);

/// Essential jump length: edges whose opening exceeds `tol`.
double essential_jump_length(const DeformationField& f, double tol);

}  // namespace rigidity
