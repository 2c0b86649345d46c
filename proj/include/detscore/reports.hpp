#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "detscore/detection_metrics.hpp"
#include "detscore/errors.hpp"
#include "detscore/evaluation.hpp"
#include "detscore/importance.hpp"
#include "detscore/ingest.hpp"

namespace detscore {

namespace detail {

inline std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write report file '" + path.string() + "'");
    return out;
}

inline std::string opt_cell(const std::optional<double>& v) {
    return v ? format_double(*v) : "nan";
}

} // namespace detail

inline void write_scores_csv(const std::vector<std::pair<std::string, detection_score>>& scores,
                             const std::filesystem::path& path) {
    std::ofstream out = detail::open_csv(path);
    out << "id,tp,fp,fn,precision,recall,f1\n";
    for (const auto& [id, s] : scores) {
        out << detail::csv_escape(id) << ',' << s.tp << ',' << s.fp << ',' << s.fn << ','
            << detail::format_double(s.precision) << ',' << detail::format_double(s.recall)
            << ',' << detail::format_double(s.f1) << '\n';
    }
}

inline void write_metrics_csv(const cv_report& rep, const std::filesystem::path& path) {
    std::ofstream out = detail::open_csv(path);
    out << "subset,rmse,mae,r2,nrmse,nmae,n\n";
    auto row = [&](const std::string& name, const metric_report& m) {
        out << detail::csv_escape(name) << ',' << detail::format_double(m.rmse) << ','
            << detail::format_double(m.mae) << ',' << detail::opt_cell(m.r2) << ','
            << detail::opt_cell(m.nrmse) << ',' << detail::opt_cell(m.nmae) << ','
            << detail::format_double(m.n) << '\n';
    };
    row("all", rep.overall);
    for (const auto& [group, m] : rep.per_group) row(group, m);
    row("average_over_groups", rep.group_average);
}

inline void write_parity_csv(const cv_report& rep, const std::filesystem::path& path) {
    std::ofstream out = detail::open_csv(path);
    out << "id,group,repeat,fold,y_true,y_pred\n";
    for (const cv_prediction& p : rep.parity) {
        out << detail::csv_escape(p.id) << ',' << detail::csv_escape(p.group) << ',' << p.repeat
            << ',' << p.fold << ',' << detail::format_double(p.y_true) << ','
            << detail::format_double(p.y_pred) << '\n';
    }
}

inline void write_confusion_csv(const confusion_matrix& cm, const std::filesystem::path& path) {
    std::ofstream out = detail::open_csv(path);
    auto bin_label = [&](std::size_t b) {
        return detail::format_double(cm.edges[b]) + "-" + detail::format_double(cm.edges[b + 1]);
    };
    out << "true_bin";
    for (std::size_t b = 0; b + 1 < cm.edges.size(); ++b) out << ",pred_" << bin_label(b);
    out << '\n';
    for (std::size_t tb = 0; tb < cm.counts.size(); ++tb) {
        out << "true_" << bin_label(tb);
        for (long c : cm.counts[tb]) out << ',' << c;
        out << '\n';
    }
}

inline void write_pr_curve_csv(const domain_classification_report& rep,
                               const std::filesystem::path& path) {
    std::ofstream out = detail::open_csv(path);
    out << "threshold,recall,precision,operating_point\n";
    for (const pr_point& p : rep.pr_curve) {
        out << detail::format_double(p.threshold) << ',' << detail::format_double(p.recall) << ','
            << detail::format_double(p.precision) << ',' << (p.operating ? 1 : 0) << '\n';
    }
}

inline void write_threshold_sweep_csv(const domain_classification_report& rep,
                                      const std::filesystem::path& path) {
    std::ofstream out = detail::open_csv(path);
    out << "threshold,precision,recall,f1,accuracy,baseline_f1,baseline_accuracy\n";
    for (const threshold_sweep_point& s : rep.sweep) {
        out << detail::format_double(s.threshold) << ',' << detail::format_double(s.precision)
            << ',' << detail::format_double(s.recall) << ',' << detail::format_double(s.f1) << ','
            << detail::format_double(s.accuracy) << ',' << detail::format_double(s.baseline_f1)
            << ',' << detail::format_double(s.baseline_accuracy) << '\n';
    }
}

inline void write_importance_csv(const importance_report& rep,
                                 const std::filesystem::path& path) {
    std::ofstream out = detail::open_csv(path);
    out << "rank,feature,score,method\n";
    const std::string method = rep.method == importance_method::mdi ? "mdi" : "permutation";
    for (std::size_t r = 0; r < rep.ranking.size(); ++r) {
        const int fi = feature_index(rep.ranking[r]);
        out << (r + 1) << ',' << rep.ranking[r] << ','
            << detail::format_double(rep.scores[static_cast<std::size_t>(fi)]) << ',' << method
            << '\n';
    }
}

inline void write_selection_sweep_csv(const selection_sweep& sweep,
                                      const std::filesystem::path& path) {
    std::ofstream out = detail::open_csv(path);
    out << "k,rmse,mae,r2,chosen,features\n";
    for (const sweep_entry& e : sweep.entries) {
        std::string joined;
        for (std::size_t i = 0; i < e.features.size(); ++i) {
            if (i > 0) joined += '|';
            joined += e.features[i];
        }
        out << e.k << ',' << detail::format_double(e.rmse) << ',' << detail::format_double(e.mae)
            << ',' << detail::opt_cell(e.r2) << ',' << (e.k == sweep.chosen_k ? 1 : 0) << ','
            << detail::csv_escape(joined) << '\n';
    }
}

inline void write_predictions_csv(const std::vector<std::pair<std::string, double>>& preds,
                                  const std::string& target,
                                  const std::filesystem::path& path) {
    std::ofstream out = detail::open_csv(path);
    out << "id,predicted_" << target << '\n';
    for (const auto& [id, v] : preds)
        out << detail::csv_escape(id) << ',' << detail::format_double(v) << '\n';
}

/// Writes the full cross-validation report directory: metrics.csv,
/// parity.csv, confusion.csv, pr_curve.csv and sweep.csv.
inline void write_cv_report_dir(const cv_report& rep, double f1_threshold,
                                const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_metrics_csv(rep, dir / "metrics.csv");
    write_parity_csv(rep, dir / "parity.csv");

    std::vector<double> yt, yp;
    yt.reserve(rep.parity.size());
    yp.reserve(rep.parity.size());
    for (const cv_prediction& p : rep.parity) {
        yt.push_back(p.y_true);
        yp.push_back(p.y_pred);
    }
    write_confusion_csv(confusion(yt, yp), dir / "confusion.csv");
    const domain_classification_report dc = domain_classification(yt, yp, f1_threshold);
    write_pr_curve_csv(dc, dir / "pr_curve.csv");
    write_threshold_sweep_csv(dc, dir / "sweep.csv");
}

} // namespace detscore
