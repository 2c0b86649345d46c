#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "detscore/dataset.hpp"
#include "detscore/errors.hpp"

namespace detscore {

/// How detection/ground-truth overlap is measured when deciding a match.
/// `intersection_over_prediction` exists for sensitivity checks against the
/// alternative reading of the 10%-overlap rule.
enum class overlap_kind { iou, intersection_over_prediction };

struct match_config {
    double iou_threshold = 0.1;        ///< in (0,1]
    double confidence_threshold = 0.1; ///< in [0,1); detections below are discarded
    overlap_kind overlap = overlap_kind::iou;

    void validate() const {
        if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
            throw validation_error("match_config: iou_threshold must lie in (0,1]");
        if (!(confidence_threshold >= 0.0 && confidence_threshold < 1.0))
            throw validation_error("match_config: confidence_threshold must lie in [0,1)");
    }
};

/// Per-image matching outcome plus the derived precision/recall/F1.
struct detection_score {
    int tp = 0;
    int fp = 0;
    int fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Intersection area over union area; symmetric, 0 for disjoint boxes, 1 for
/// identical boxes.
inline double iou(const bounding_box& a, const bounding_box& b) {
    const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
    const double inter = ix * iy;
    if (inter <= 0.0) return 0.0;
    const double uni = a.area() + b.area() - inter;
    return inter / uni;
}

/// Intersection area over the prediction's own area.
inline double intersection_over_prediction(const bounding_box& pred, const bounding_box& gt) {
    const double ix = std::max(0.0, std::min(pred.right(), gt.right()) - std::max(pred.x, gt.x));
    const double iy = std::max(0.0, std::min(pred.bottom(), gt.bottom()) - std::max(pred.y, gt.y));
    const double inter = ix * iy;
    if (inter <= 0.0) return 0.0;
    return inter / pred.area();
}

namespace detail {

inline double overlap(const bounding_box& pred, const bounding_box& gt, overlap_kind kind) {
    return kind == overlap_kind::iou ? iou(pred, gt) : intersection_over_prediction(pred, gt);
}

/// Fills in precision/recall/F1 from the counts. Degenerate images keep a
/// defined score: an empty image with no detections counts as vacuously
/// perfect, while one-sided emptiness zeroes the affected rate.
inline detection_score finalize_score(int tp, int fp, int fn) {
    detection_score s;
    s.tp = tp;
    s.fp = fp;
    s.fn = fn;
    if (tp + fp + fn == 0) {
        s.precision = s.recall = s.f1 = 1.0;
        return s;
    }
    s.precision = (tp + fp > 0) ? static_cast<double>(tp) / (tp + fp) : 0.0;
    s.recall = (tp + fn > 0) ? static_cast<double>(tp) / (tp + fn) : 0.0;
    s.f1 = static_cast<double>(2 * tp) / (2 * tp + fp + fn);
    return s;
}

} // namespace detail

/// Matches detections to ground truth and scores one image.
///
/// Detections below the confidence threshold are discarded. The rest are
/// processed in descending confidence (ties keep input order); each one takes
/// the still-unmatched ground-truth object of maximal overlap (ties to the
/// lowest ground-truth index) and becomes a TP if that overlap reaches the
/// threshold, otherwise an FP. Leftover ground truth counts as FN.
inline detection_score match_image(const image_record& rec, const match_config& cfg = {}) {
    cfg.validate();
    if (!rec.ground_truth.has_value())
        throw validation_error("match_image: image '" + rec.id +
                               "' has no ground_truth; labeled data required");

    const auto& gts = *rec.ground_truth;

    std::vector<std::size_t> retained;
    for (std::size_t i = 0; i < rec.detections.size(); ++i) {
        if (rec.detections[i].score >= cfg.confidence_threshold) retained.push_back(i);
    }
    std::stable_sort(retained.begin(), retained.end(), [&](std::size_t a, std::size_t b) {
        return rec.detections[a].score > rec.detections[b].score;
    });

    std::vector<bool> gt_taken(gts.size(), false);
    int tp = 0;
    for (std::size_t di : retained) {
        double best = -1.0;
        std::size_t best_gt = gts.size();
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_taken[gi]) continue;
            const double ov = detail::overlap(rec.detections[di].box, gts[gi].box, cfg.overlap);
            if (ov > best) {
                best = ov;
                best_gt = gi;
            }
        }
        if (best_gt < gts.size() && best >= cfg.iou_threshold) {
            gt_taken[best_gt] = true;
            ++tp;
        }
    }
    const int fp = static_cast<int>(retained.size()) - tp;
    const int fn = static_cast<int>(gts.size()) - tp;
    return detail::finalize_score(tp, fp, fn);
}

/// Scores every image of a labeled dataset, preserving dataset order.
/// match_image errors already name the offending image and propagate as-is.
inline std::vector<std::pair<std::string, detection_score>>
score_dataset(const dataset& ds, const match_config& cfg = {}) {
    cfg.validate();
    std::vector<std::pair<std::string, detection_score>> out;
    out.reserve(ds.images.size());
    for (const image_record& rec : ds.images) {
        out.emplace_back(rec.id, match_image(rec, cfg));
    }
    return out;
}

} // namespace detscore
