// Independent oracles for the randomized suites. Everything here is written
// from the definitions directly — no calls into the library code paths it
// checks — so agreement is evidence, not tautology.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "detscore/dataset.hpp"
#include "detscore/geometry.hpp"

namespace oracle {

/// IoU by rasterizing both boxes on a fine integer grid and counting cells.
/// Boxes must have integer coordinates at the chosen resolution.
inline double rasterized_iou(const detscore::bounding_box& a, const detscore::bounding_box& b,
                             int cells_per_unit = 1) {
    const double lo_x = std::min(a.x, b.x);
    const double lo_y = std::min(a.y, b.y);
    const double hi_x = std::max(a.right(), b.right());
    const double hi_y = std::max(a.bottom(), b.bottom());
    long inter = 0, uni = 0;
    const double step = 1.0 / cells_per_unit;
    for (double cx = lo_x + step / 2; cx < hi_x; cx += step) {
        for (double cy = lo_y + step / 2; cy < hi_y; cy += step) {
            const bool in_a = cx > a.x && cx < a.right() && cy > a.y && cy < a.bottom();
            const bool in_b = cx > b.x && cx < b.right() && cy > b.y && cy < b.bottom();
            if (in_a && in_b) ++inter;
            if (in_a || in_b) ++uni;
        }
    }
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// Exhaustive search for the one-to-one assignment maximizing the number of
/// matched pairs with overlap >= threshold (max bipartite matching by
/// recursion; fine for <= 6 boxes per side).
inline int max_matching_tp(const std::vector<std::vector<double>>& overlap, double threshold) {
    const std::size_t n_det = overlap.size();
    std::vector<bool> gt_used(n_det == 0 ? 0 : overlap[0].size(), false);
    if (!overlap.empty()) gt_used.assign(overlap[0].size(), false);

    std::function<int(std::size_t)> go = [&](std::size_t d) -> int {
        if (d == n_det) return 0;
        int best = go(d + 1); // leave detection d unmatched
        for (std::size_t g = 0; g < gt_used.size(); ++g) {
            if (gt_used[g] || overlap[d][g] < threshold) continue;
            gt_used[g] = true;
            best = std::max(best, 1 + go(d + 1));
            gt_used[g] = false;
        }
        return best;
    };
    return go(0);
}

/// Area overlap of two boxes, written independently (corner arithmetic).
inline double plain_iou(const detscore::bounding_box& a, const detscore::bounding_box& b) {
    const double w = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    const double h = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    if (w <= 0 || h <= 0) return 0.0;
    const double inter = w * h;
    return inter / (a.w * a.h + b.w * b.h - inter);
}

// --- direct-formula feature oracle -----------------------------------------

struct feature_oracle_result {
    std::vector<double> values; // canonical order, 18 entries
};

inline double oracle_polygon_area(const detscore::polygon& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& u = p[i];
        const auto& v = p[(i + 1) % p.size()];
        s += u.x * v.y - v.x * u.y;
    }
    return std::fabs(s) * 0.5;
}

inline double oracle_polygon_perimeter(const detscore::polygon& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& u = p[i];
        const auto& v = p[(i + 1) % p.size()];
        s += std::sqrt((v.x - u.x) * (v.x - u.x) + (v.y - u.y) * (v.y - u.y));
    }
    return s;
}

inline double oracle_circularity(const detscore::detection& d) {
    if (d.outline) {
        const double area = oracle_polygon_area(*d.outline);
        return oracle_polygon_perimeter(*d.outline) / (2.0 * std::sqrt(std::numbers::pi * area));
    }
    // inscribed ellipse, Ramanujan perimeter
    const double sa = d.box.w / 2.0, sb = d.box.h / 2.0;
    const double per =
        std::numbers::pi * (3.0 * (sa + sb) - std::sqrt((3.0 * sa + sb) * (sa + 3.0 * sb)));
    return per / (2.0 * std::sqrt(std::numbers::pi * std::numbers::pi * sa * sb));
}

/// Evaluates all 18 features straight from their definitions over the
/// record's detections in input order.
inline feature_oracle_result direct_features(const detscore::image_record& rec,
                                             double conf_threshold = 0.1) {
    std::vector<const detscore::detection*> kept;
    for (const auto& d : rec.detections)
        if (d.score >= conf_threshold) kept.push_back(&d);

    feature_oracle_result out;
    out.values.assign(18, 0.0);
    const std::size_t n = kept.size();
    if (n == 0) return out;

    // bins [0.1,0.2) ... [0.9,1.0], last right-closed
    for (const auto* d : kept) {
        int bin = static_cast<int>(std::floor((d->score - 0.1) * 10.0));
        bin = std::clamp(bin, 0, 8);
        out.values[static_cast<std::size_t>(bin)] += 1.0;
    }
    for (int b = 0; b < 9; ++b) out.values[static_cast<std::size_t>(b)] /= static_cast<double>(n);

    const double image_area = rec.width * rec.height;
    auto mean_of = [n](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / static_cast<double>(n);
    };
    auto std_of = [n, &mean_of](const std::vector<double>& v) {
        const double m = mean_of(v);
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / static_cast<double>(n));
    };

    std::vector<double> confs, fracs, circs, areas;
    for (const auto* d : kept) {
        confs.push_back(d->score);
        fracs.push_back(std::sqrt(d->box.w * d->box.h) / std::sqrt(image_area));
        circs.push_back(oracle_circularity(*d));
        areas.push_back(d->outline ? oracle_polygon_area(*d->outline) : d->box.w * d->box.h);
    }
    double total_area = 0, weighted = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total_area += areas[i];
        weighted += confs[i] * areas[i];
    }
    out.values[9] = total_area / image_area;
    out.values[10] = mean_of(confs);
    out.values[11] = std_of(confs);
    out.values[12] = mean_of(fracs);
    out.values[13] = std_of(fracs);
    out.values[14] = mean_of(circs);
    out.values[15] = std_of(circs);
    out.values[16] = static_cast<double>(n);
    out.values[17] = weighted / total_area;
    return out;
}

// --- random instance generators ---------------------------------------------

/// Random matching instance with <= max_boxes boxes per side on a 100x100
/// image; boxes use integer coordinates so the rasterized IoU oracle applies.
inline detscore::image_record random_matching_instance(std::mt19937_64& rng, int max_boxes = 6) {
    std::uniform_int_distribution<int> count(0, max_boxes);
    std::uniform_int_distribution<int> coord(0, 79);
    std::uniform_int_distribution<int> extent(1, 20);
    std::uniform_real_distribution<double> conf(0.0, 1.0);

    detscore::image_record rec;
    rec.id = "case";
    rec.width = 100;
    rec.height = 100;
    rec.group = "oracle";
    rec.ground_truth.emplace();
    const int n_gt = count(rng);
    for (int i = 0; i < n_gt; ++i) {
        detscore::bounding_box b{static_cast<double>(coord(rng)), static_cast<double>(coord(rng)),
                                 static_cast<double>(extent(rng)),
                                 static_cast<double>(extent(rng))};
        rec.ground_truth->push_back({b, std::nullopt});
    }
    const int n_det = count(rng);
    for (int i = 0; i < n_det; ++i) {
        detscore::detection d;
        d.box = {static_cast<double>(coord(rng)), static_cast<double>(coord(rng)),
                 static_cast<double>(extent(rng)), static_cast<double>(extent(rng))};
        d.score = conf(rng);
        rec.detections.push_back(d);
    }
    return rec;
}

/// Random feature-extraction instance: boxes and optional convex-ish
/// polygons, confidences spread over [0,1].
inline detscore::image_record random_feature_instance(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> count(0, 12);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    detscore::image_record rec;
    rec.id = "case";
    rec.width = 640;
    rec.height = 512;
    rec.group = "oracle";

    const int n_det = count(rng);
    for (int i = 0; i < n_det; ++i) {
        detscore::detection d;
        const double w = 4.0 + unit(rng) * 120.0;
        const double h = 4.0 + unit(rng) * 120.0;
        d.box = {unit(rng) * (rec.width - w), unit(rng) * (rec.height - h), w, h};
        d.score = unit(rng);
        if (unit(rng) < 0.5) {
            // irregular star-shaped polygon around the box center
            const double cx = d.box.x + w / 2, cy = d.box.y + h / 2;
            const int verts = 5 + static_cast<int>(unit(rng) * 6);
            detscore::polygon p;
            for (int v = 0; v < verts; ++v) {
                const double angle = 2.0 * std::numbers::pi * v / verts;
                const double r = (0.3 + 0.7 * unit(rng)) * std::min(w, h) / 2.0;
                p.push_back({cx + r * std::cos(angle), cy + r * std::sin(angle)});
            }
            d.outline = std::move(p);
        }
        rec.detections.push_back(std::move(d));
    }
    return rec;
}

} // namespace oracle
