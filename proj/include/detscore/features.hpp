#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "detscore/dataset.hpp"
#include "detscore/detection_metrics.hpp"
#include "detscore/errors.hpp"
#include "detscore/matrix.hpp"

namespace detscore {

inline constexpr std::size_t k_n_features = 18;

/// Canonical feature column order. File headers and matrices use exactly this
/// ordering.
inline const std::array<std::string, k_n_features>& feature_names() {
    static const std::array<std::string, k_n_features> names = {
        "counts_0.1", "counts_0.2", "counts_0.3", "counts_0.4", "counts_0.5",
        "counts_0.6", "counts_0.7", "counts_0.8", "counts_0.9",
        "area_ratio", "avg_conf", "std_conf",
        "avg_frac_size", "std_frac_size",
        "avg_circularity", "std_circularity",
        "n_defects", "image_conf"};
    return names;
}

inline int feature_index(const std::string& name) {
    const auto& names = feature_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

/// The 18 per-image features computed from detections alone.
struct feature_vector {
    std::array<double, 9> counts{}; ///< fraction of retained detections per confidence bin
    double area_ratio = 0.0;
    double avg_conf = 0.0;
    double std_conf = 0.0;
    double avg_frac_size = 0.0;
    double std_frac_size = 0.0;
    double avg_circularity = 0.0;
    double std_circularity = 0.0;
    double n_defects = 0.0;
    double image_conf = 0.0;

    std::array<double, k_n_features> to_array() const {
        std::array<double, k_n_features> a{};
        for (std::size_t i = 0; i < 9; ++i) a[i] = counts[i];
        a[9] = area_ratio;
        a[10] = avg_conf;
        a[11] = std_conf;
        a[12] = avg_frac_size;
        a[13] = std_frac_size;
        a[14] = avg_circularity;
        a[15] = std_circularity;
        a[16] = n_defects;
        a[17] = image_conf;
        return a;
    }

    static feature_vector from_array(std::span<const double> a) {
        if (a.size() != k_n_features)
            throw validation_error("feature_vector: expected 18 values");
        feature_vector v;
        for (std::size_t i = 0; i < 9; ++i) v.counts[i] = a[i];
        v.area_ratio = a[9];
        v.avg_conf = a[10];
        v.std_conf = a[11];
        v.avg_frac_size = a[12];
        v.std_frac_size = a[13];
        v.avg_circularity = a[14];
        v.std_circularity = a[15];
        v.n_defects = a[16];
        v.image_conf = a[17];
        return v;
    }

    friend bool operator==(const feature_vector&, const feature_vector&) = default;
};

/// Variant switches for feature definitions the source material leaves
/// ambiguous. Defaults are the primary readings.
struct feature_config {
    bool frac_size_linear = true;    ///< sqrt(box area / image area); false = plain area fraction
    bool counts_as_fractions = true; ///< false = raw bin counts
};

/// Histogram of confidence scores over bins [0.1,0.2), ..., [0.8,0.9),
/// [0.9,1.0], each divided by the number of retained detections. Scores are
/// expected at or above the retention threshold 0.1; anything below lands in
/// the first bin.
inline std::array<double, 9> confidence_histogram(std::span<const double> scores,
                                                  bool as_fractions = true) {
    std::array<double, 9> bins{};
    if (scores.empty()) return bins;
    for (double s : scores) {
        int idx = 8;
        for (int i = 0; i < 8; ++i) {
            if (s < 0.1 + 0.1 * static_cast<double>(i + 1)) {
                idx = i;
                break;
            }
        }
        bins[static_cast<std::size_t>(idx)] += 1.0;
    }
    if (as_fractions) {
        for (double& b : bins) b /= static_cast<double>(scores.size());
    }
    return bins;
}

/// Heywood circularity of a polygon: perimeter over the circumference of the
/// equal-area circle, P / (2*sqrt(pi*A)). 1 for a circle, larger otherwise.
inline double heywood_circularity(const polygon& p) {
    const double area = polygon_area(p);
    if (p.size() < 3 || area <= 0.0)
        throw validation_error("heywood_circularity: degenerate polygon");
    return polygon_perimeter(p) / (2.0 * std::sqrt(std::numbers::pi * area));
}

/// Box fallback: the box's inscribed ellipse (semi-axes w/2, h/2), with the
/// perimeter by Ramanujan's approximation. Equals 1 for squares.
inline double heywood_circularity(const bounding_box& b) {
    if (!(b.w > 0.0 && b.h > 0.0))
        throw validation_error("heywood_circularity: box must have positive extent");
    const double a = b.w / 2.0;
    const double c = b.h / 2.0;
    const double perimeter =
        std::numbers::pi * (3.0 * (a + c) - std::sqrt((3.0 * a + c) * (a + 3.0 * c)));
    const double area = std::numbers::pi * a * c;
    return perimeter / (2.0 * std::sqrt(std::numbers::pi * area));
}

namespace detail {

inline double shape_area(const detection& d) {
    return d.outline ? polygon_area(*d.outline) : d.box.area();
}

inline double shape_circularity(const detection& d) {
    return d.outline ? heywood_circularity(*d.outline) : heywood_circularity(d.box);
}

/// Canonical detection ordering. Feature statistics accumulate in this order
/// so that shuffling the input list cannot change the result, not even in the
/// last floating-point bit.
inline bool canonical_before(const detection& a, const detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.x != b.box.x) return a.box.x < b.box.x;
    if (a.box.y != b.box.y) return a.box.y < b.box.y;
    if (a.box.w != b.box.w) return a.box.w < b.box.w;
    if (a.box.h != b.box.h) return a.box.h < b.box.h;
    const std::size_t an = a.outline ? a.outline->size() : 0;
    const std::size_t bn = b.outline ? b.outline->size() : 0;
    if (an != bn) return an < bn;
    for (std::size_t i = 0; i < an; ++i) {
        const point& pa = (*a.outline)[i];
        const point& pb = (*b.outline)[i];
        if (pa.x != pb.x) return pa.x < pb.x;
        if (pa.y != pb.y) return pa.y < pb.y;
    }
    return false;
}

struct running_stats {
    double sum = 0.0;
    double sumsq = 0.0;
    std::size_t n = 0;

    void add(double v) {
        sum += v;
        sumsq += v * v;
        ++n;
    }
    double mean() const { return n > 0 ? sum / static_cast<double>(n) : 0.0; }
    // population convention (divisor n); defined as 0 for n <= 1
    double stddev() const {
        if (n == 0) return 0.0;
        const double m = mean();
        const double var = sumsq / static_cast<double>(n) - m * m;
        return var > 0.0 ? std::sqrt(var) : 0.0;
    }
};

/// Label-free inner computation: sees only detections and image dimensions.
inline feature_vector compute_features(std::vector<detection> retained, double width,
                                       double height, const feature_config& fc) {
    feature_vector v;
    if (retained.empty()) return v;

    std::sort(retained.begin(), retained.end(), canonical_before);

    std::vector<double> scores;
    scores.reserve(retained.size());
    for (const detection& d : retained) scores.push_back(d.score);
    v.counts = confidence_histogram(scores, fc.counts_as_fractions);

    const double image_area = width * height;
    running_stats conf, frac, circ;
    double total_area = 0.0;
    double weighted_conf = 0.0;
    for (const detection& d : retained) {
        const double area = shape_area(d);
        total_area += area;
        weighted_conf += d.score * area;
        conf.add(d.score);
        const double area_frac = d.box.area() / image_area;
        frac.add(fc.frac_size_linear ? std::sqrt(d.box.area()) / std::sqrt(image_area)
                                     : area_frac);
        circ.add(shape_circularity(d));
    }
    v.area_ratio = total_area / image_area;
    v.avg_conf = conf.mean();
    v.std_conf = conf.stddev();
    v.avg_frac_size = frac.mean();
    v.std_frac_size = frac.stddev();
    v.avg_circularity = circ.mean();
    v.std_circularity = circ.stddev();
    v.n_defects = static_cast<double>(retained.size());
    v.image_conf = total_area > 0.0 ? weighted_conf / total_area : 0.0;
    return v;
}

} // namespace detail

/// Computes the 18 features for one image. Never reads ground truth: labels
/// do not participate in the inner call. Detections below the confidence
/// threshold are discarded first; an image with nothing retained yields the
/// all-zero vector.
inline feature_vector extract_features(const image_record& rec, const match_config& cfg = {},
                                       const feature_config& fc = {}) {
    cfg.validate();
    std::vector<detection> retained;
    for (const detection& d : rec.detections) {
        if (d.score >= cfg.confidence_threshold) retained.push_back(d);
    }
    return detail::compute_features(std::move(retained), rec.width, rec.height, fc);
}

/// Per-column z-score scaler, population sigma. Fit once on training rows,
/// then transform anything with the same column count. Columns with zero
/// spread map to all zeros.
class standardizer {
public:
    standardizer() = default;
    standardizer(std::vector<double> mean, std::vector<double> sigma)
        : fitted_(true), mean_(std::move(mean)), sigma_(std::move(sigma)) {
        if (mean_.size() != sigma_.size())
            throw validation_error("standardizer: mean/sigma size mismatch");
    }

    void fit(const matrix& x) {
        if (fitted_) throw validation_error("standardizer: already fitted");
        if (x.n_rows == 0) throw validation_error("standardizer: cannot fit on zero rows");
        mean_.assign(x.n_cols, 0.0);
        sigma_.assign(x.n_cols, 0.0);
        for (std::size_t j = 0; j < x.n_cols; ++j) {
            double sum = 0.0;
            for (std::size_t i = 0; i < x.n_rows; ++i) sum += x(i, j);
            const double m = sum / static_cast<double>(x.n_rows);
            double ss = 0.0;
            for (std::size_t i = 0; i < x.n_rows; ++i) {
                const double d = x(i, j) - m;
                ss += d * d;
            }
            mean_[j] = m;
            const double var = ss / static_cast<double>(x.n_rows);
            sigma_[j] = var > 0.0 ? std::sqrt(var) : 0.0;
        }
        fitted_ = true;
    }

    matrix transform(const matrix& x) const {
        if (!fitted_) throw validation_error("standardizer: transform before fit");
        if (x.n_cols != mean_.size())
            throw validation_error("standardizer: column count mismatch");
        matrix out(x.n_rows, x.n_cols);
        for (std::size_t i = 0; i < x.n_rows; ++i) {
            for (std::size_t j = 0; j < x.n_cols; ++j) {
                out(i, j) = sigma_[j] > 0.0 ? (x(i, j) - mean_[j]) / sigma_[j] : 0.0;
            }
        }
        return out;
    }

    std::vector<double> transform_row(std::span<const double> row) const {
        if (!fitted_) throw validation_error("standardizer: transform before fit");
        if (row.size() != mean_.size())
            throw validation_error("standardizer: column count mismatch");
        std::vector<double> out(row.size());
        for (std::size_t j = 0; j < row.size(); ++j) {
            out[j] = sigma_[j] > 0.0 ? (row[j] - mean_[j]) / sigma_[j] : 0.0;
        }
        return out;
    }

    bool fitted() const { return fitted_; }
    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& sigma() const { return sigma_; }

private:
    bool fitted_ = false;
    std::vector<double> mean_;
    std::vector<double> sigma_;
};

} // namespace detscore
