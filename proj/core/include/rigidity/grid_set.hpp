#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rigidity/lattice.hpp"

namespace rigidity {

struct StarMeasureConfig {
    double h_star = 0.1;
};

/// One component of the complement of a grid set (a "hole"), or a degenerate
/// slit made of interior cut edges only. `gamma` is the topological boundary;
/// `theta` is gamma minus the edges already owned by earlier components in the
/// owning set's ordering. Slit edges are crack faces inside the mask and count
/// twice in the Hausdorff measure; boundary edges count once.
struct BoundaryComponent {
    std::vector<int> cells;           // complement cells, sorted; empty for slits
    std::vector<EdgeKey> boundary;    // edges of the cell-set boundary, sorted
    std::vector<EdgeKey> slit;        // attached cut edges not in `boundary`, sorted
    std::vector<EdgeKey> theta_boundary;
    std::vector<EdgeKey> theta_slit;
    bool touches_border = false;      // gamma meets the ambient boundary

    bool is_slit() const { return cells.empty(); }
    bool empty() const { return cells.empty() && slit.empty(); }
};

/// A union of lattice cells minus labeled complement components, plus an
/// optional set of interior cut edges (zero-width cracks). Immutable after
/// construction; all operations return new values.
class GridSet {
  public:
    GridSet() = default;
    GridSet(Lattice lat, std::vector<std::uint8_t> mask, std::vector<BoundaryComponent> comps,
            std::vector<int> ordering, std::vector<EdgeKey> cuts);

    const Lattice& lattice() const { return lat_; }
    const std::vector<std::uint8_t>& mask() const { return mask_; }
    const std::vector<BoundaryComponent>& components() const { return comps_; }
    const std::vector<int>& ordering() const { return ordering_; }
    const std::vector<EdgeKey>& cut_edges() const { return cuts_; }

    bool cell(int a, int b) const { return lat_.in_range(a, b) && mask_[lat_.cell_id(a, b)] != 0; }
    bool is_cut(const EdgeKey& e) const;
    int active_cells() const;
    double area() const { return active_cells() * 4.0 * lat_.spacing * lat_.spacing; }

  private:
    Lattice lat_;
    std::vector<std::uint8_t> mask_;
    std::vector<BoundaryComponent> comps_;
    std::vector<int> ordering_;
    std::vector<EdgeKey> cuts_;  // sorted
};

enum class SetNorm { Infty, Hausdorff, Star };

/// Decompose the complement of `mask` into 4-connected components and the cut
/// set into vertex-connected slits; canonical ordering (interior components by
/// descending diameter then lexicographic least cell, border components last).
/// An empty mask yields a single component covering the ambient square.
GridSet extract_components(const std::vector<std::uint8_t>& mask, const Lattice& ambient,
                           std::vector<EdgeKey> cuts = {});

/// Boundary edges of a cell set (edges with exactly one side inside).
std::vector<EdgeKey> boundary_edges(std::span<const int> cells, const Lattice& lat);

double measure_infty(const GridSet& w, int comp);
double measure_hausdorff_gamma(const GridSet& w, int comp);
double measure_hausdorff_theta(const GridSet& w, int comp);
double measure_star(const GridSet& w, int comp, const StarMeasureConfig& cfg);

/// Sum of per-component measures over interior components.
double set_norm(const GridSet& w, SetNorm kind, const StarMeasureConfig& cfg = {});

/// H^lambda(W): absorb interior components (and slits) of diameter <= threshold.
GridSet fill_holes(const GridSet& w, double threshold);

/// W' = (W \ V) u dV. V becomes the leading component; existing components are
/// clipped, X'_i = X_i \ closure(V), Theta'_i = Theta_i \ closure(V).
GridSet subtract_and_mark(const GridSet& w, const CellRect& v);

/// Merge touching components. Part (i): merge pairs with both diameters <= k.
/// Part (ii): additionally merge touching pairs with min diameter <= k.
/// Never increases the star norm.
GridSet merge_small_components(const GridSet& w, double k, double t, int part = 2);

/// Smallest lattice-aligned rectangle of `target` containing gamma.
CellRect rectangle_hull(const GridSet& w, int comp, const Lattice& target);

struct RectangleizeResult {
    GridSet set;
    /// Fitted constant in |U|_* <= (1 + c nu) |V|_*; 0 when nu == 0 and the
    /// norm did not grow.
    double fitted_c = 0.0;
};

/// Replace the interior components of V by pairwise-disjoint connected pieces
/// covering the union of the given hulls (one hull per interior component, in
/// ordering order). Throws std::invalid_argument when a hull fails its
/// preconditions, naming the offending pair.
RectangleizeResult rectangleize(const GridSet& v, std::span<const CellRect> hulls, double nu);

/// Total length of edges separating `cells` from their complement, counted
/// strictly inside the ambient region.
double perimeter(std::span<const int> cells, const GridSet& ambient);

/// Cut-aware 4-connected component labels of the mask; -1 on complement cells.
/// Labels are assigned in row-major discovery order.
std::vector<int> mask_component_labels(const GridSet& w);

/// Convenience: full-mask set over the lattice with optional cuts.
GridSet full_set(const Lattice& lat, std::vector<EdgeKey> cuts = {});

}  // namespace rigidity
