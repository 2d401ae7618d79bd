#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lambda1/errors.hpp"

namespace lambda1 {

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Rect {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;
};

/// Ball B(center, radius).
struct BallSpec {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.0;
};

/// Scalar field sampled at cell centers, length nx*ny, row-major.
using Field = std::vector<double>;

/// The box D rasterized on a uniform cell-centred grid. A cell belongs
/// to D iff its centre lies in the union of the defining rectangles.
/// Cells double as finite-difference nodes: unknowns live at centres,
/// homogeneous Dirichlet data at every centre outside the support.
///
/// Immutable after construction.
struct GridDomain {
    int nx = 0;
    int ny = 0;
    double h = 0.0;
    double origin_x = 0.0; ///< centre of cell (0,0)
    double origin_y = 0.0;
    std::vector<std::uint8_t> mask;  ///< cell in D
    std::vector<int> component_id;   ///< 4-connected label, -1 outside D
    int component_count = 0;
    int admissible_count = 0;

    int size() const { return nx * ny; }
    int index(int i, int j) const { return i + nx * j; }
    bool in_grid(int i, int j) const { return i >= 0 && i < nx && j >= 0 && j < ny; }
    bool admissible(int idx) const { return mask[static_cast<std::size_t>(idx)] != 0; }
    double cell_x(int i) const { return origin_x + h * i; }
    double cell_y(int j) const { return origin_y + h * j; }
    double total_volume() const { return static_cast<double>(admissible_count) * h * h; }
};

/// A candidate shape: subset of the domain's admissible cells.
struct Support {
    const GridDomain* domain = nullptr;
    std::vector<std::uint8_t> cells; ///< indicator over the full grid
    int cell_count = 0;
    double volume = 0.0; ///< cell_count * h^2

    bool contains(int idx) const { return cells[static_cast<std::size_t>(idx)] != 0; }
};

/// Rasterizes the union of rectangles at spacing h.
/// Throws "empty domain" when no cell centre falls in the union and
/// "bad grid" when the resolution is unusable.
GridDomain build_box_domain(std::span<const Rect> rects, double h);

/// Support made from an explicit indicator (must be a subset of the mask).
Support make_support(const GridDomain& domain, std::vector<std::uint8_t> cells);

/// All admissible cells.
Support full_support(const GridDomain& domain);

/// Discrete ball: admissible cells whose centre is within `radius` of the
/// centre point. Throws "degenerate ball" when empty.
Support ball_support(const GridDomain& domain, const BallSpec& ball);

/// Cell count times h^2.
double measure_volume(const Support& support);

/// 4-connected component labels of a support (-1 outside), plus count.
std::vector<int> support_components(const Support& support, int* count);

} // namespace lambda1
