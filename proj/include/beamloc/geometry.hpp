#pragma once

#include <compare>
#include <optional>

#include "beamloc/common.hpp"

namespace beamloc::geometry {

struct GridPoint {
    int x = 0;
    int y = 0;
    auto operator<=>(const GridPoint&) const = default;
    GridPoint operator-(GridPoint o) const { return {x - o.x, y - o.y}; }
    GridPoint operator-() const { return {-x, -y}; }
};

/// Planar sensor layout on an integer grid with a physical pitch.
///
/// Coordinates live inside the bounding master grid (0..extent-1 per axis,
/// default 8x8); elements are kept sorted and unique.
struct GridArray {
    std::string name;
    double pitch_m = 0.0;
    std::vector<GridPoint> elements;
    int master_extent = 8;

    std::size_t size() const { return elements.size(); }

    /// 3D sensor positions in meters (z = 0), row per sensor.
    MatrixXd positions() const;

    /// Throws InvalidArgument on duplicate / out-of-grid elements or
    /// non-positive pitch.
    void validate() const;
};

/// Difference co-array: the full difference set, its bounds, and the largest
/// origin-centered hole-free rectangle usable for spatial smoothing.
struct CoArray {
    std::vector<GridPoint> differences;  // sorted, symmetric about the origin
    std::vector<GridPoint> hole_free;    // full rectangle [-hx,hx] x [-hy,hy]
    GridPoint min_bound, max_bound;      // coordinate-wise bounds of differences
    int half_x = 0, half_y = 0;          // hole-free half-extents

    bool contains(GridPoint m) const;
    int virtual_extent_x() const { return 2 * half_x + 1; }
    int virtual_extent_y() const { return 2 * half_y + 1; }
};

/// Window placement for 2D spatial smoothing over the hole-free virtual URA.
struct SmoothingPlan {
    int virtual_x = 0, virtual_y = 0;  // M_x, M_y
    int window_x = 0, window_y = 0;    // L_x, L_y
    std::vector<GridPoint> offsets;    // all (p, q) window positions
};

enum class GeometryKind { Ura, Ura5x5, Nested, Billboard, OpenBox, Coprime, Random };

GeometryKind parse_geometry_kind(const std::string& name);
std::string geometry_kind_name(GeometryKind kind);

/// Per-kind construction parameters; fields are read as each kind requires.
struct GeometryParams {
    int nx = 8, ny = 8;             // URA dimensions
    std::vector<int> nested_axis = {0, 1, 2, 5};  // per-axis 2-level nested positions
    int box_w = 6, box_h = 6;       // Open-Box U shape
    int bill_w = 8, bill_h = 5;     // Billboard U shape (wide aspect)
    int coprime_a = 2, coprime_b = 3;
    int coprime_span = 3;           // elements per axis in each coprime lattice
    int random_count = 16;
    std::uint64_t seed = 1;
    double pitch_m = 0.009528;      // half wavelength at 18 kHz, c = 343 m/s
    int master_extent = 8;
};

/// Construct one of the named layouts. Element lists for the sparse kinds
/// are fixed, documented constructions:
///  - Nested: per-axis two-level nested positions {0,1,2,5}, taken as a
///    cross product; difference cover is the full [-5,5] range per axis.
///  - Open-Box: three sides of a box_w x box_h rectangle (bottom row plus
///    both side columns).
///  - Billboard: the same three-sided construction with a wide aspect
///    (panel on two posts), bill_w x bill_h.
///  - Coprime: union of two square lattices with coprime pitches a and b
///    (span elements per axis each), minus the outermost corner of the
///    coarser lattice so the default lands on 16 sensors.
///  - Random: seeded uniform draw of distinct cells.
GridArray make_geometry(GeometryKind kind, const GeometryParams& params = {});

CoArray difference_coarray(const GridArray& array);

SmoothingPlan smoothing_plan(const CoArray& coarray, int window_x, int window_y);

/// Default window: ceil-half of the virtual extent per axis.
std::pair<int, int> default_window(const CoArray& coarray);

}  // namespace beamloc::geometry
