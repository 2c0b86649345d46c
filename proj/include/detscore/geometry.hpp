#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "detscore/errors.hpp"

namespace detscore {

/// Axis-aligned box in pixel coordinates, top-left origin.
struct bounding_box {
    double x = 0.0; ///< left edge
    double y = 0.0; ///< top edge
    double w = 0.0;
    double h = 0.0;

    double area() const { return w * h; }
    double right() const { return x + w; }
    double bottom() const { return y + h; }

    bool valid() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) &&
               w > 0.0 && h > 0.0 && x >= 0.0 && y >= 0.0;
    }
};

/// Builds a box from corner coordinates (x1,y1,x2,y2); corners may arrive in
/// either order.
inline bounding_box box_from_corners(double x1, double y1, double x2, double y2) {
    bounding_box b;
    b.x = std::min(x1, x2);
    b.y = std::min(y1, y2);
    b.w = std::abs(x2 - x1);
    b.h = std::abs(y2 - y1);
    return b;
}

/// Intersects a box with the image rectangle [0,width] x [0,height].
/// Returns nullopt when nothing with positive area remains. Boxes already
/// inside pass through verbatim, and clamped extents are nudged so that
/// x + w <= width holds exactly in floating point; together these make
/// clamping idempotent.
inline std::optional<bounding_box> clamp_to_image(const bounding_box& b, double width, double height) {
    if (b.x >= 0.0 && b.y >= 0.0 && b.right() <= width && b.bottom() <= height) return b;
    const double x0 = std::max(b.x, 0.0);
    const double y0 = std::max(b.y, 0.0);
    const double x1 = std::min(b.right(), width);
    const double y1 = std::min(b.bottom(), height);
    double w = x1 - x0;
    double h = y1 - y0;
    if (w <= 0.0 || h <= 0.0) return std::nullopt;
    while (x0 + w > x1) w = std::nextafter(w, 0.0);
    while (y0 + h > y1) h = std::nextafter(h, 0.0);
    if (w <= 0.0 || h <= 0.0) return std::nullopt;
    return bounding_box{x0, y0, w, h};
}

struct point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const point&, const point&) = default;
};

/// Closed polygon given as a vertex list; the edge from back() to front() is
/// implied.
using polygon = std::vector<point>;

/// Shoelace area (absolute value).
inline double polygon_area(const polygon& p) {
    if (p.size() < 3) return 0.0;
    double twice = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const point& a = p[i];
        const point& b = p[(i + 1) % p.size()];
        twice += a.x * b.y - b.x * a.y;
    }
    return std::abs(twice) / 2.0;
}

inline double polygon_perimeter(const polygon& p) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const point& a = p[i];
        const point& b = p[(i + 1) % p.size()];
        total += std::hypot(b.x - a.x, b.y - a.y);
    }
    return total;
}

inline bool polygon_valid(const polygon& p) {
    if (p.size() < 3) return false;
    for (const point& v : p) {
        if (!std::isfinite(v.x) || !std::isfinite(v.y)) return false;
    }
    return polygon_area(p) > 0.0;
}

} // namespace detscore
