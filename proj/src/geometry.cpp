#include "beamloc/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace beamloc::geometry {

MatrixXd GridArray::positions() const {
    MatrixXd p(static_cast<Eigen::Index>(elements.size()), 3);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const auto& e = elements[static_cast<std::size_t>(i)];
        p.row(i) << e.x * pitch_m, e.y * pitch_m, 0.0;
    }
    return p;
}

void GridArray::validate() const {
    if (pitch_m <= 0.0) throw InvalidArgument("array pitch must be > 0");
    if (elements.empty()) throw InvalidArgument("array has no elements");
    std::set<GridPoint> seen;
    for (const auto& e : elements) {
        if (e.x < 0 || e.y < 0 || e.x >= master_extent || e.y >= master_extent)
            throw InvalidArgument("element outside the master grid");
        if (!seen.insert(e).second) throw InvalidArgument("duplicate array element");
    }
}

bool CoArray::contains(GridPoint m) const {
    return std::binary_search(differences.begin(), differences.end(), m);
}

GeometryKind parse_geometry_kind(const std::string& name) {
    std::string s;
    for (char c : name) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::erase_if(s, [](char c) { return c == '-' || c == '_' || c == ' '; });
    if (s == "ura") return GeometryKind::Ura;
    if (s == "ura5x5") return GeometryKind::Ura5x5;
    if (s == "nested") return GeometryKind::Nested;
    if (s == "billboard") return GeometryKind::Billboard;
    if (s == "openbox") return GeometryKind::OpenBox;
    if (s == "coprime") return GeometryKind::Coprime;
    if (s == "random") return GeometryKind::Random;
    throw InvalidArgument("unknown geometry kind: " + name);
}

std::string geometry_kind_name(GeometryKind kind) {
    switch (kind) {
        case GeometryKind::Ura: return "URA";
        case GeometryKind::Ura5x5: return "URA-5x5";
        case GeometryKind::Nested: return "Nested";
        case GeometryKind::Billboard: return "Billboard";
        case GeometryKind::OpenBox: return "Open-Box";
        case GeometryKind::Coprime: return "Coprime";
        case GeometryKind::Random: return "Random";
    }
    throw InvalidArgument("bad geometry kind");
}

namespace {

std::vector<GridPoint> ura_points(int nx, int ny) {
    std::vector<GridPoint> pts;
    pts.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) pts.push_back({x, y});
    return pts;
}

// Three sides of a w x h rectangle: full bottom row plus both columns.
// The difference set of this shape is the complete box
// [-(w-1), w-1] x [-(h-1), h-1].
std::vector<GridPoint> open_box_points(int w, int h) {
    std::vector<GridPoint> pts;
    for (int x = 0; x < w; ++x) pts.push_back({x, 0});
    for (int y = 1; y < h; ++y) {
        pts.push_back({0, y});
        pts.push_back({w - 1, y});
    }
    return pts;
}

}  // namespace

GridArray make_geometry(GeometryKind kind, const GeometryParams& params) {
    GridArray a;
    a.name = geometry_kind_name(kind);
    a.pitch_m = params.pitch_m;
    a.master_extent = params.master_extent;

    switch (kind) {
        case GeometryKind::Ura:
            if (params.nx < 1 || params.ny < 1 || params.nx > params.master_extent ||
                params.ny > params.master_extent)
                throw InvalidArgument("URA dimensions exceed the master grid");
            a.elements = ura_points(params.nx, params.ny);
            break;
        case GeometryKind::Ura5x5:
            a.elements = ura_points(5, 5);
            break;
        case GeometryKind::Nested: {
            const auto& ax = params.nested_axis;
            if (ax.empty()) throw InvalidArgument("nested axis positions empty");
            for (int v : ax)
                if (v < 0 || v >= params.master_extent)
                    throw InvalidArgument("nested axis position exceeds the master grid");
            for (int y : ax)
                for (int x : ax) a.elements.push_back({x, y});
            break;
        }
        case GeometryKind::Billboard:
            if (params.bill_w > params.master_extent || params.bill_h > params.master_extent ||
                params.bill_w < 2 || params.bill_h < 2)
                throw InvalidArgument("billboard dimensions invalid for the master grid");
            a.elements = open_box_points(params.bill_w, params.bill_h);
            break;
        case GeometryKind::OpenBox:
            if (params.box_w > params.master_extent || params.box_h > params.master_extent ||
                params.box_w < 2 || params.box_h < 2)
                throw InvalidArgument("open-box dimensions invalid for the master grid");
            a.elements = open_box_points(params.box_w, params.box_h);
            break;
        case GeometryKind::Coprime: {
            if (std::gcd(params.coprime_a, params.coprime_b) != 1)
                throw InvalidArgument("coprime pitches must actually be coprime");
            const int span = params.coprime_span;
            const int pmax = std::max(params.coprime_a, params.coprime_b) * (span - 1);
            if (pmax >= params.master_extent)
                throw InvalidArgument("coprime lattice exceeds the master grid");
            std::set<GridPoint> pts;
            for (int i = 0; i < span; ++i)
                for (int k = 0; k < span; ++k) {
                    pts.insert({params.coprime_a * i, params.coprime_a * k});
                    pts.insert({params.coprime_b * i, params.coprime_b * k});
                }
            // Drop the outermost corner of the coarser lattice (keeps the
            // default at 16 sensors).
            const int b = std::max(params.coprime_a, params.coprime_b) * (span - 1);
            pts.erase({b, b});
            a.elements.assign(pts.begin(), pts.end());
            break;
        }
        case GeometryKind::Random: {
            const int cells = params.master_extent * params.master_extent;
            if (params.random_count < 1 || params.random_count > cells)
                throw InvalidArgument("random element count exceeds the master grid");
            Rng rng(params.seed);
            std::set<GridPoint> pts;
            while (static_cast<int>(pts.size()) < params.random_count) {
                pts.insert({rng.uniform_int(0, params.master_extent - 1),
                            rng.uniform_int(0, params.master_extent - 1)});
            }
            a.elements.assign(pts.begin(), pts.end());
            break;
        }
    }

    std::sort(a.elements.begin(), a.elements.end());
    a.validate();
    return a;
}

CoArray difference_coarray(const GridArray& array) {
    array.validate();
    std::set<GridPoint> diff;
    for (const auto& p : array.elements)
        for (const auto& q : array.elements) diff.insert(p - q);

    CoArray co;
    co.differences.assign(diff.begin(), diff.end());
    co.min_bound = {array.master_extent, array.master_extent};
    co.max_bound = {-array.master_extent, -array.master_extent};
    for (const auto& m : co.differences) {
        co.min_bound.x = std::min(co.min_bound.x, m.x);
        co.min_bound.y = std::min(co.min_bound.y, m.y);
        co.max_bound.x = std::max(co.max_bound.x, m.x);
        co.max_bound.y = std::max(co.max_bound.y, m.y);
    }

    // Largest origin-centered rectangle [-hx,hx] x [-hy,hy] fully contained
    // in the difference set; smoothing needs the contiguous virtual URA.
    // Ties in area prefer the more square rectangle, then the wider one.
    const int max_hx = std::min(-co.min_bound.x, co.max_bound.x);
    const int max_hy = std::min(-co.min_bound.y, co.max_bound.y);
    auto rect_full = [&](int hx, int hy) {
        for (int x = -hx; x <= hx; ++x)
            for (int y = -hy; y <= hy; ++y)
                if (!diff.count({x, y})) return false;
        return true;
    };
    long best_area = -1;
    int best_hx = 0, best_hy = 0;
    for (int hx = 0; hx <= max_hx; ++hx) {
        int hy = max_hy;
        while (hy >= 0 && !rect_full(hx, hy)) --hy;
        if (hy < 0) break;  // even hy = 0 fails; larger hx cannot recover
        const long area = static_cast<long>(2 * hx + 1) * (2 * hy + 1);
        const bool better =
            area > best_area ||
            (area == best_area && std::min(hx, hy) > std::min(best_hx, best_hy)) ||
            (area == best_area && std::min(hx, hy) == std::min(best_hx, best_hy) &&
             hx > best_hx);
        if (better) {
            best_area = area;
            best_hx = hx;
            best_hy = hy;
        }
    }
    co.half_x = best_hx;
    co.half_y = best_hy;
    for (int y = -best_hy; y <= best_hy; ++y)
        for (int x = -best_hx; x <= best_hx; ++x) co.hole_free.push_back({x, y});
    std::sort(co.hole_free.begin(), co.hole_free.end());
    return co;
}

SmoothingPlan smoothing_plan(const CoArray& coarray, int window_x, int window_y) {
    SmoothingPlan plan;
    plan.virtual_x = coarray.virtual_extent_x();
    plan.virtual_y = coarray.virtual_extent_y();
    if (window_x < 1 || window_y < 1 || window_x > plan.virtual_x || window_y > plan.virtual_y)
        throw InvalidArgument("smoothing window does not fit the virtual array");
    plan.window_x = window_x;
    plan.window_y = window_y;
    for (int p = 0; p <= plan.virtual_x - window_x; ++p)
        for (int q = 0; q <= plan.virtual_y - window_y; ++q) plan.offsets.push_back({p, q});
    return plan;
}

std::pair<int, int> default_window(const CoArray& coarray) {
    return {(coarray.virtual_extent_x() + 1) / 2, (coarray.virtual_extent_y() + 1) / 2};
}

}  // namespace beamloc::geometry
