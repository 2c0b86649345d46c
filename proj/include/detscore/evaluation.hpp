#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "detscore/errors.hpp"
#include "detscore/forest.hpp"
#include "detscore/ingest.hpp"
#include "detscore/random.hpp"

namespace detscore {

enum class split_kind { random_kfold, leave_group_out };

struct split_spec {
    split_kind kind = split_kind::random_kfold;
    int k = 5;
    int repeats = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (kind == split_kind::random_kfold) {
            if (k < 2) throw validation_error("split_spec: k must be >= 2");
            if (repeats < 1) throw validation_error("split_spec: repeats must be >= 1");
        }
    }
};

struct fold {
    std::string name; ///< group label, or "r<repeat>f<index>" for random folds
    int repeat = 0;
    int index = 0;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Builds the train/test index partitions. Random folds shuffle with the
/// spec's seed and cut into k near-equal parts, once per repeat; grouped
/// folds hold out one distinct group label at a time (ordered by first
/// appearance).
inline std::vector<fold> make_folds(std::span<const std::string> groups, const split_spec& spec) {
    spec.validate();
    const std::size_t n = groups.size();
    std::vector<fold> folds;

    if (spec.kind == split_kind::random_kfold) {
        if (n < static_cast<std::size_t>(spec.k))
            throw validation_error("make_folds: need at least k=" + std::to_string(spec.k) +
                                   " rows, got " + std::to_string(n));
        for (int rep = 0; rep < spec.repeats; ++rep) {
            std::vector<std::size_t> perm(n);
            std::iota(perm.begin(), perm.end(), 0u);
            std::mt19937_64 rng = make_rng(spec.seed, static_cast<std::uint64_t>(rep));
            std::shuffle(perm.begin(), perm.end(), rng);
            std::size_t offset = 0;
            for (int fi = 0; fi < spec.k; ++fi) {
                const std::size_t size =
                    n / static_cast<std::size_t>(spec.k) +
                    (static_cast<std::size_t>(fi) < n % static_cast<std::size_t>(spec.k) ? 1 : 0);
                fold f;
                f.name = "r" + std::to_string(rep) + "f" + std::to_string(fi);
                f.repeat = rep;
                f.index = fi;
                f.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(offset),
                              perm.begin() + static_cast<std::ptrdiff_t>(offset + size));
                std::sort(f.test.begin(), f.test.end());
                f.train.reserve(n - size);
                std::vector<bool> in_test(n, false);
                for (std::size_t t : f.test) in_test[t] = true;
                for (std::size_t i = 0; i < n; ++i)
                    if (!in_test[i]) f.train.push_back(i);
                folds.push_back(std::move(f));
                offset += size;
            }
        }
        return folds;
    }

    // leave-group-out
    std::vector<std::string> order;
    for (const std::string& g : groups)
        if (std::find(order.begin(), order.end(), g) == order.end()) order.push_back(g);
    if (order.size() < 2)
        throw validation_error("make_folds: leave_group_out needs >= 2 distinct groups, got " +
                               std::to_string(order.size()));
    for (std::size_t gi = 0; gi < order.size(); ++gi) {
        fold f;
        f.name = order[gi];
        f.index = static_cast<int>(gi);
        for (std::size_t i = 0; i < n; ++i) {
            (groups[i] == order[gi] ? f.test : f.train).push_back(i);
        }
        folds.push_back(std::move(f));
    }
    return folds;
}

/// Regression quality report. The normalized metrics (and R² itself) are
/// undefined when the true targets are constant or zero-mean; those slots
/// stay empty rather than poisoning the rest.
struct metric_report {
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> r2;
    std::optional<double> nrmse; ///< rmse / population sigma of y_true
    std::optional<double> nmae;  ///< mae / mean of y_true
    double n = 0.0;
};

inline metric_report regression_metrics(std::span<const double> y_true,
                                        std::span<const double> y_pred) {
    if (y_true.size() != y_pred.size())
        throw validation_error("regression_metrics: length mismatch");
    if (y_true.empty()) throw validation_error("regression_metrics: empty input");
    const double n = static_cast<double>(y_true.size());

    double se = 0.0, ae = 0.0, mean_true = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double d = y_pred[i] - y_true[i];
        se += d * d;
        ae += std::abs(d);
        mean_true += y_true[i];
    }
    mean_true /= n;
    double ss_tot = 0.0;
    for (double v : y_true) {
        const double d = v - mean_true;
        ss_tot += d * d;
    }

    metric_report r;
    r.n = n;
    r.rmse = std::sqrt(se / n);
    r.mae = ae / n;
    if (ss_tot > 0.0) {
        r.r2 = 1.0 - se / ss_tot;
        r.nrmse = r.rmse / std::sqrt(ss_tot / n);
    }
    if (mean_true != 0.0) r.nmae = r.mae / mean_true;
    return r;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

enum class regression_target { f1, precision, recall };

inline std::string target_name(regression_target t) {
    switch (t) {
        case regression_target::f1: return "f1";
        case regression_target::precision: return "precision";
        default: return "recall";
    }
}

inline regression_target parse_target(const std::string& s) {
    if (s == "f1") return regression_target::f1;
    if (s == "precision") return regression_target::precision;
    if (s == "recall") return regression_target::recall;
    throw validation_error("unknown target '" + s + "' (expected f1|precision|recall)");
}

inline double target_value(const target_triple& t, regression_target which) {
    switch (which) {
        case regression_target::f1: return t.f1;
        case regression_target::precision: return t.precision;
        default: return t.recall;
    }
}

struct cv_prediction {
    std::string id;
    std::string group;
    int repeat = 0;
    int fold = 0;
    double y_true = 0.0;
    double y_pred = 0.0;
};

struct cv_report {
    metric_report overall;                                        ///< pooled out-of-fold
    std::vector<std::pair<std::string, metric_report>> per_group; ///< pooled per group label
    metric_report group_average; ///< unweighted mean over the per-group rows
    std::vector<cv_prediction> parity;
};

namespace detail {

inline metric_report average_reports(
    const std::vector<std::pair<std::string, metric_report>>& rows) {
    metric_report avg;
    if (rows.empty()) return avg;
    double r2_sum = 0.0, nrmse_sum = 0.0, nmae_sum = 0.0;
    std::size_t r2_n = 0, nrmse_n = 0, nmae_n = 0;
    for (const auto& [name, m] : rows) {
        avg.rmse += m.rmse;
        avg.mae += m.mae;
        avg.n += m.n;
        if (m.r2) {
            r2_sum += *m.r2;
            ++r2_n;
        }
        if (m.nrmse) {
            nrmse_sum += *m.nrmse;
            ++nrmse_n;
        }
        if (m.nmae) {
            nmae_sum += *m.nmae;
            ++nmae_n;
        }
    }
    const double k = static_cast<double>(rows.size());
    avg.rmse /= k;
    avg.mae /= k;
    avg.n /= k;
    if (r2_n > 0) avg.r2 = r2_sum / static_cast<double>(r2_n);
    if (nrmse_n > 0) avg.nrmse = nrmse_sum / static_cast<double>(nrmse_n);
    if (nmae_n > 0) avg.nmae = nmae_sum / static_cast<double>(nmae_n);
    return avg;
}

inline matrix rows_to_matrix(std::span<const feature_row> rows) {
    matrix x(rows.size(), k_n_features);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto a = rows[i].features.to_array();
        for (std::size_t j = 0; j < k_n_features; ++j) x(i, j) = a[j];
    }
    return x;
}

} // namespace detail

/// Runs the full cross-validation: per fold, the standardizer and the forest
/// are fit strictly on the train indices, then applied to the test indices.
/// Out-of-fold predictions are pooled for the overall report and pooled per
/// group label for the per-group rows. All randomness flows from spec.seed.
inline cv_report cross_validate(std::span<const feature_row> rows, const split_spec& spec,
                                const forest_hyperparams& hp, regression_target target,
                                const std::vector<std::string>& selected_features,
                                int threads = 1) {
    for (const feature_row& r : rows) {
        if (!r.targets)
            throw validation_error("cross_validate: row '" + r.id + "' carries no targets");
    }
    if (selected_features.empty())
        throw validation_error("cross_validate: no features selected");

    std::vector<std::string> groups;
    groups.reserve(rows.size());
    for (const feature_row& r : rows) groups.push_back(r.group);
    const std::vector<fold> folds = make_folds(groups, spec);

    std::vector<std::size_t> sel_idx;
    for (const std::string& name : selected_features) {
        const int fi = feature_index(name);
        if (fi < 0) throw validation_error("cross_validate: unknown feature '" + name + "'");
        sel_idx.push_back(static_cast<std::size_t>(fi));
    }

    const matrix full = detail::rows_to_matrix(rows);
    std::vector<double> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) y[i] = target_value(*rows[i].targets, target);

    cv_report report;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const fold& fo = folds[f];
        matrix xtr(fo.train.size(), sel_idx.size());
        std::vector<double> ytr(fo.train.size());
        for (std::size_t i = 0; i < fo.train.size(); ++i) {
            for (std::size_t j = 0; j < sel_idx.size(); ++j)
                xtr(i, j) = full(fo.train[i], sel_idx[j]);
            ytr[i] = y[fo.train[i]];
        }
        standardizer scaler;
        scaler.fit(xtr);
        const matrix ztr = scaler.transform(xtr);
        const std::vector<regression_tree> trees =
            fit_forest(ztr, ytr, hp, stream_seed(spec.seed, 0x666f6c64ULL, f), threads);

        for (std::size_t t : fo.test) {
            std::vector<double> xrow(sel_idx.size());
            for (std::size_t j = 0; j < sel_idx.size(); ++j) xrow[j] = full(t, sel_idx[j]);
            const std::vector<double> z = scaler.transform_row(xrow);
            double sum = 0.0;
            for (const regression_tree& tr : trees) sum += tr.predict(z);
            cv_prediction p;
            p.id = rows[t].id;
            p.group = rows[t].group;
            p.repeat = fo.repeat;
            p.fold = fo.index;
            p.y_true = y[t];
            p.y_pred = sum / static_cast<double>(trees.size());
            report.parity.push_back(std::move(p));
        }
    }

    std::vector<double> yt, yp;
    yt.reserve(report.parity.size());
    yp.reserve(report.parity.size());
    for (const cv_prediction& p : report.parity) {
        yt.push_back(p.y_true);
        yp.push_back(p.y_pred);
    }
    report.overall = regression_metrics(yt, yp);

    std::vector<std::string> group_order;
    for (const feature_row& r : rows)
        if (std::find(group_order.begin(), group_order.end(), r.group) == group_order.end())
            group_order.push_back(r.group);
    for (const std::string& g : group_order) {
        std::vector<double> gt, gp;
        for (const cv_prediction& p : report.parity) {
            if (p.group == g) {
                gt.push_back(p.y_true);
                gp.push_back(p.y_pred);
            }
        }
        if (!gt.empty()) {
            metric_report m = regression_metrics(gt, gp);
            // Table-style per-split rows count images, not pooled repeats
            m.n = static_cast<double>(std::count(groups.begin(), groups.end(), g));
            report.per_group.emplace_back(g, m);
        }
    }
    report.group_average = detail::average_reports(report.per_group);
    return report;
}

// ---------------------------------------------------------------------------
// Binned confusion matrix
// ---------------------------------------------------------------------------

struct confusion_matrix {
    std::vector<double> edges;              ///< bin edges, ascending
    std::vector<std::vector<long>> counts;  ///< [true bin][predicted bin]
    long total = 0;
};

inline std::vector<double> default_confusion_edges() { return {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}; }

/// Bins clamped (true, predicted) pairs; the last bin is right-closed.
inline confusion_matrix confusion(std::span<const double> y_true, std::span<const double> y_pred,
                                  std::vector<double> edges = default_confusion_edges()) {
    if (y_true.size() != y_pred.size()) throw validation_error("confusion: length mismatch");
    if (edges.size() < 2) throw validation_error("confusion: need at least 2 bin edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1]))
            throw validation_error("confusion: bin edges must be strictly increasing");

    const std::size_t bins = edges.size() - 1;
    confusion_matrix cm;
    cm.edges = std::move(edges);
    cm.counts.assign(bins, std::vector<long>(bins, 0));
    auto bin_of = [&cm, bins](double v) {
        v = std::clamp(v, cm.edges.front(), cm.edges.back());
        const auto it = std::upper_bound(cm.edges.begin(), cm.edges.end(), v);
        std::size_t idx = static_cast<std::size_t>(std::distance(cm.edges.begin(), it));
        idx = idx > 0 ? idx - 1 : 0;
        return std::min(idx, bins - 1);
    };
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        ++cm.counts[bin_of(y_true[i])][bin_of(y_pred[i])];
        ++cm.total;
    }
    return cm;
}

// ---------------------------------------------------------------------------
// Domain classification (thresholded F1)
// ---------------------------------------------------------------------------

struct pr_point {
    double threshold = 0.0;
    double recall = 0.0;
    double precision = 0.0;
    bool operating = false;
};

struct threshold_sweep_point {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    double baseline_f1 = 0.0;       ///< always-positive classifier
    double baseline_accuracy = 0.0; ///< majority class
};

struct domain_classification_report {
    double f1_threshold = 0.5;
    bool degenerate = false; ///< ground truth is all one class; PR curve undefined
    std::vector<pr_point> pr_curve;
    double op_precision = 0.0;
    double op_recall = 0.0;
    std::vector<threshold_sweep_point> sweep;
};

inline std::vector<double> default_sweep_thresholds() {
    return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

/// Frames reliability estimation as binary classification: an image is
/// positive when its true score reaches `f1_threshold`, and the classifier
/// flags it positive when the predicted score reaches the decision threshold.
/// The PR curve is traced over all distinct predicted values (plus the
/// extremes and the operating threshold itself); the sweep varies the label
/// threshold jointly with the decision threshold.
inline domain_classification_report
domain_classification(std::span<const double> y_true, std::span<const double> y_pred,
                      double f1_threshold = 0.5,
                      std::vector<double> sweep_thresholds = default_sweep_thresholds()) {
    if (y_true.size() != y_pred.size())
        throw validation_error("domain_classification: length mismatch");
    if (y_true.empty()) throw validation_error("domain_classification: empty input");

    domain_classification_report rep;
    rep.f1_threshold = f1_threshold;

    auto count_at = [&](double label_thr, double decision_thr, long& tp, long& fp, long& fn,
                        long& tn) {
        tp = fp = fn = tn = 0;
        for (std::size_t i = 0; i < y_true.size(); ++i) {
            const bool pos = y_true[i] >= label_thr;
            const bool flagged = y_pred[i] >= decision_thr;
            if (pos && flagged) ++tp;
            else if (!pos && flagged) ++fp;
            else if (pos && !flagged) ++fn;
            else ++tn;
        }
    };

    long n_pos = 0;
    for (double v : y_true)
        if (v >= f1_threshold) ++n_pos;
    const long n = static_cast<long>(y_true.size());
    rep.degenerate = (n_pos == 0 || n_pos == n);

    if (!rep.degenerate) {
        std::vector<double> thresholds(y_pred.begin(), y_pred.end());
        thresholds.push_back(0.0);
        thresholds.push_back(1.0);
        thresholds.push_back(f1_threshold);
        std::sort(thresholds.begin(), thresholds.end());
        thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

        for (double t : thresholds) {
            long tp, fp, fn, tn;
            count_at(f1_threshold, t, tp, fp, fn, tn);
            pr_point p;
            p.threshold = t;
            // zero predicted positives: precision 1 keeps the curve continuous
            p.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                                        : 1.0;
            p.recall = static_cast<double>(tp) / static_cast<double>(n_pos);
            p.operating = (t == f1_threshold);
            if (p.operating) {
                rep.op_precision = p.precision;
                rep.op_recall = p.recall;
            }
            rep.pr_curve.push_back(p);
        }
    }

    for (double thr : sweep_thresholds) {
        long tp, fp, fn, tn;
        count_at(thr, thr, tp, fp, fn, tn);
        threshold_sweep_point s;
        s.threshold = thr;
        s.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        s.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        s.f1 = (2 * tp + fp + fn) > 0
                   ? static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn)
                   : 1.0;
        s.accuracy = static_cast<double>(tp + tn) / static_cast<double>(n);
        const long pos = tp + fn;
        const long neg = n - pos;
        s.baseline_f1 =
            (2 * pos + neg) > 0 ? static_cast<double>(2 * pos) / static_cast<double>(2 * pos + neg)
                                : 1.0;
        s.baseline_accuracy = static_cast<double>(std::max(pos, neg)) / static_cast<double>(n);
        rep.sweep.push_back(s);
    }
    return rep;
}

} // namespace detscore
