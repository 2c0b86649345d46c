#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "detscore/errors.hpp"
#include "detscore/evaluation.hpp"
#include "detscore/forest.hpp"

namespace detscore {

enum class importance_method { mdi, permutation };

/// Per-feature importance scores over the canonical 18 features, plus the
/// ranking they induce (descending score, ties to canonical order).
struct importance_report {
    importance_method method = importance_method::mdi;
    std::vector<double> scores;        ///< one per canonical feature
    std::vector<std::string> ranking;  ///< all 18 names, most important first
};

namespace detail {

inline std::vector<std::string> rank_features(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::string> names;
    names.reserve(order.size());
    for (std::size_t i : order) names.push_back(feature_names()[i]);
    return names;
}

} // namespace detail

/// Mean decrease in impurity: per feature, the sum over every split of the
/// split's variance reduction weighted by the fraction of training rows
/// passing through it, accumulated across all trees and normalized to sum
/// to 1. A forest of pure leaves has no splits; scores stay all-zero and the
/// ranking falls back to canonical order.
inline importance_report mdi_importance(const forest_model& model) {
    if (!model.has_split_stats)
        throw validation_error("mdi_importance: model was trained without split statistics");

    std::vector<double> scores(k_n_features, 0.0);
    const std::vector<std::size_t> canonical = model.canonical_indices();
    for (const regression_tree& tree : model.trees) {
        const double n_root = static_cast<double>(tree.nodes[0].n_samples);
        for (const tree_node& node : tree.nodes) {
            if (node.is_leaf()) continue;
            const double weight = static_cast<double>(node.n_samples) / n_root;
            scores[canonical[static_cast<std::size_t>(node.feature)]] +=
                weight * node.var_reduction;
        }
    }
    const double total = std::accumulate(scores.begin(), scores.end(), 0.0);
    if (total > 0.0) {
        for (double& s : scores) s /= total;
    }

    importance_report rep;
    rep.method = importance_method::mdi;
    rep.scores = std::move(scores);
    rep.ranking = detail::rank_features(rep.scores);
    return rep;
}

/// Permutation importance on held-out rows: the mean increase in RMSE over
/// `repeats` seeded shuffles of one column at a time. Features the ensemble
/// never routes on score exactly 0.
inline importance_report permutation_importance(const forest_model& model,
                                                std::span<const feature_vector> x_test,
                                                std::span<const double> y_test, int repeats,
                                                std::uint64_t seed) {
    if (x_test.empty()) throw validation_error("permutation_importance: empty test set");
    if (x_test.size() != y_test.size())
        throw validation_error("permutation_importance: length mismatch");
    if (repeats < 1) throw validation_error("permutation_importance: repeats must be >= 1");

    const std::size_t n = x_test.size();
    const std::vector<std::size_t> canonical = model.canonical_indices();

    // raw selected-feature rows, model column order
    std::vector<std::vector<double>> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto full = x_test[i].to_array();
        rows[i].reserve(canonical.size());
        for (std::size_t ci : canonical) rows[i].push_back(full[ci]);
    }

    auto rmse_of = [&](const std::vector<std::vector<double>>& data) {
        double se = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = model.predict_selected_raw(data[i]) - y_test[i];
            se += d * d;
        }
        return std::sqrt(se / static_cast<double>(n));
    };
    const double baseline = rmse_of(rows);

    std::vector<double> scores(k_n_features, 0.0);
    for (std::size_t j = 0; j < canonical.size(); ++j) {
        double acc = 0.0;
        for (int rep = 0; rep < repeats; ++rep) {
            std::vector<std::size_t> perm(n);
            std::iota(perm.begin(), perm.end(), 0u);
            std::mt19937_64 rng =
                make_rng(stream_seed(seed, canonical[j]), static_cast<std::uint64_t>(rep));
            std::shuffle(perm.begin(), perm.end(), rng);
            std::vector<std::vector<double>> permuted = rows;
            for (std::size_t i = 0; i < n; ++i) permuted[i][j] = rows[perm[i]][j];
            acc += rmse_of(permuted) - baseline;
        }
        scores[canonical[j]] = acc / static_cast<double>(repeats);
    }

    importance_report rep;
    rep.method = importance_method::permutation;
    rep.scores = std::move(scores);
    rep.ranking = detail::rank_features(rep.scores);
    return rep;
}

/// One row of the top-k selection sweep.
struct sweep_entry {
    int k = 0;
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> r2;
    std::vector<std::string> features;
};

struct selection_sweep {
    std::vector<sweep_entry> entries;
    int chosen_k = 0;
    std::vector<std::string> chosen_features;
};

/// Re-runs the full cross-validation with the top-k ranked features for each
/// k in [k_min, k_max] and selects the k of minimal RMSE (ties to smaller k).
inline selection_sweep sweep_top_k(std::span<const feature_row> rows,
                                   const std::vector<std::string>& ranking, int k_min, int k_max,
                                   split_spec cv_spec, const forest_hyperparams& hp,
                                   regression_target target, std::uint64_t seed,
                                   int threads = 1) {
    if (ranking.size() != k_n_features)
        throw validation_error("sweep_top_k: ranking must cover all 18 features");
    if (k_min < 1 || k_max > static_cast<int>(k_n_features) || k_min > k_max)
        throw validation_error("sweep_top_k: k range must lie within [1, 18]");
    cv_spec.seed = seed;

    selection_sweep sweep;
    double best_rmse = std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= k_max; ++k) {
        std::vector<std::string> selected(ranking.begin(), ranking.begin() + k);
        const cv_report rep = cross_validate(rows, cv_spec, hp, target, selected, threads);
        sweep_entry e;
        e.k = k;
        e.rmse = rep.overall.rmse;
        e.mae = rep.overall.mae;
        e.r2 = rep.overall.r2;
        e.features = selected;
        if (e.rmse < best_rmse) {
            best_rmse = e.rmse;
            sweep.chosen_k = k;
            sweep.chosen_features = selected;
        }
        sweep.entries.push_back(std::move(e));
    }
    return sweep;
}

} // namespace detscore
