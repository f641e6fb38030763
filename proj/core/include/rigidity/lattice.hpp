#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "rigidity/geometry.hpp"

namespace rigidity {

/// Square lattice of cells with side 2*spacing. Cell centers sit at
/// origin + spacing*shift_offset + 2*spacing*(a,b); `shift` in {1,2,3,4}
/// selects the offset (0,0), (1,0), (0,1), (1,1).
struct Lattice {
    double spacing = 1.0;
    int shift = 1;
    int nx = 0, ny = 0;
    Vec2 origin{0.0, 0.0};

    static Vec2 shift_offset(int shift) {
        switch (shift) {
            case 1: return {0.0, 0.0};
            case 2: return {1.0, 0.0};
            case 3: return {0.0, 1.0};
            default: return {1.0, 1.0};
        }
    }

    int cell_count() const { return nx * ny; }
    int cell_id(int a, int b) const { return b * nx + a; }
    bool in_range(int a, int b) const { return a >= 0 && a < nx && b >= 0 && b < ny; }

    Vec2 cell_center(int a, int b) const {
        const Vec2 off = shift_offset(shift);
        return {origin.x + spacing * off.x + 2.0 * spacing * a,
                origin.y + spacing * off.y + 2.0 * spacing * b};
    }
    /// Lower-left corner of cell (a,b).
    Vec2 vertex(int a, int b) const {
        const Vec2 c = cell_center(a, b);
        return {c.x - spacing, c.y - spacing};
    }
};

/// Lattice edge between two cells (or on the ambient border).
/// orient 0: horizontal edge, the bottom side of cell (i,j), j in [0,ny];
/// orient 1: vertical edge, the left side of cell (i,j), i in [0,nx].
struct EdgeKey {
    std::int8_t orient = 0;
    int i = 0, j = 0;

    auto operator<=>(const EdgeKey&) const = default;
};

/// Half-open cell rectangle [x0,x1) x [y0,y1).
struct CellRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool empty() const { return x1 <= x0 || y1 <= y0; }
    int area() const { return empty() ? 0 : width() * height(); }
    bool contains(int a, int b) const { return a >= x0 && a < x1 && b >= y0 && b < y1; }
    bool contains(const CellRect& o) const {
        return o.empty() || (o.x0 >= x0 && o.x1 <= x1 && o.y0 >= y0 && o.y1 <= y1);
    }
    CellRect intersect(const CellRect& o) const {
        CellRect r{std::max(x0, o.x0), std::max(y0, o.y0), std::min(x1, o.x1), std::min(y1, o.y1)};
        if (r.empty()) return {0, 0, 0, 0};
        return r;
    }
    CellRect clipped(int nx, int ny) const {
        CellRect r{std::max(x0, 0), std::max(y0, 0), std::min(x1, nx), std::min(y1, ny)};
        if (r.empty()) return {0, 0, 0, 0};
        return r;
    }
    bool operator==(const CellRect&) const = default;
};

inline std::vector<int> rect_cells(const CellRect& r, int nx) {
    std::vector<int> cells;
    cells.reserve(static_cast<std::size_t>(r.area()));
    for (int b = r.y0; b < r.y1; ++b)
        for (int a = r.x0; a < r.x1; ++a) cells.push_back(b * nx + a);
    return cells;
}

}  // namespace rigidity
