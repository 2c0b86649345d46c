#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "detscore/errors.hpp"
#include "detscore/features.hpp"
#include "detscore/matrix.hpp"
#include "detscore/random.hpp"

namespace detscore {

enum class feature_subsampling { all, one_third };

struct forest_hyperparams {
    int n_trees = 100;
    std::optional<int> max_depth;
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    feature_subsampling features_per_split = feature_subsampling::all;
    bool bootstrap = true;

    void validate() const {
        if (n_trees < 1) throw validation_error("forest_hyperparams: n_trees must be >= 1");
        if (max_depth && *max_depth < 0)
            throw validation_error("forest_hyperparams: max_depth must be >= 0");
        if (min_samples_split < 2)
            throw validation_error("forest_hyperparams: min_samples_split must be >= 2");
        if (min_samples_leaf < 1)
            throw validation_error("forest_hyperparams: min_samples_leaf must be >= 1");
    }
};

/// Flat tree node. feature < 0 marks a leaf carrying the mean target of the
/// training rows that reached it; internal nodes route x[feature] <= threshold
/// to `left`, the rest to `right`. Every node keeps its training row count,
/// internal nodes also the weighted variance reduction achieved by the split.
struct tree_node {
    int feature = -1;
    double threshold = 0.0;
    double value = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t n_samples = 0;
    double var_reduction = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct regression_tree {
    std::vector<tree_node> nodes; ///< nodes[0] is the root

    double predict(std::span<const double> x) const {
        std::uint32_t i = 0;
        while (!nodes[i].is_leaf()) {
            const tree_node& n = nodes[i];
            i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[i].value;
    }
};

namespace detail {

struct tree_builder {
    const matrix& x;
    std::span<const double> y;
    const forest_hyperparams& hp;
    std::mt19937_64& rng;
    std::vector<tree_node> nodes;

    struct best_split {
        int feature = -1;
        double threshold = 0.0;
        double children_sse = 0.0;
    };

    // Minimal-SSE split over the candidate features; thresholds are midpoints
    // between consecutive distinct sorted values. Ties resolve to the lowest
    // feature index, then the lowest threshold (ascending scan, strict <).
    best_split find_split(const std::vector<std::uint32_t>& rows,
                          const std::vector<int>& candidate_features) const {
        best_split best;
        double best_sse = std::numeric_limits<double>::infinity();
        const std::size_t n = rows.size();
        std::vector<std::pair<double, double>> vals(n); // (feature value, target)

        for (int f : candidate_features) {
            for (std::size_t i = 0; i < n; ++i) {
                vals[i] = {x(rows[i], static_cast<std::size_t>(f)), y[rows[i]]};
            }
            std::sort(vals.begin(), vals.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });

            double sum_left = 0.0, sumsq_left = 0.0;
            double sum_all = 0.0, sumsq_all = 0.0;
            for (const auto& [v, t] : vals) {
                sum_all += t;
                sumsq_all += t * t;
            }
            for (std::size_t i = 0; i + 1 < n; ++i) {
                sum_left += vals[i].second;
                sumsq_left += vals[i].second * vals[i].second;
                if (vals[i].first == vals[i + 1].first) continue;
                const std::size_t nl = i + 1;
                const std::size_t nr = n - nl;
                if (nl < static_cast<std::size_t>(hp.min_samples_leaf) ||
                    nr < static_cast<std::size_t>(hp.min_samples_leaf))
                    continue;
                const double threshold = (vals[i].first + vals[i + 1].first) / 2.0;
                // midpoint of adjacent doubles can round up onto the right
                // value, which would route the whole block left
                if (!(threshold < vals[i + 1].first)) continue;
                const double sum_right = sum_all - sum_left;
                const double sumsq_right = sumsq_all - sumsq_left;
                const double sse_l =
                    std::max(0.0, sumsq_left - sum_left * sum_left / static_cast<double>(nl));
                const double sse_r =
                    std::max(0.0, sumsq_right - sum_right * sum_right / static_cast<double>(nr));
                const double total = sse_l + sse_r;
                if (total < best_sse) {
                    best_sse = total;
                    best = {f, threshold, total};
                }
            }
        }
        return best;
    }

    std::vector<int> pick_features() {
        const std::size_t p = x.n_cols;
        std::vector<int> all(p);
        std::iota(all.begin(), all.end(), 0);
        if (hp.features_per_split == feature_subsampling::all || p <= 1) return all;
        const std::size_t take = std::max<std::size_t>(1, p / 3);
        // partial Fisher-Yates, then ascending order for deterministic scans
        for (std::size_t i = 0; i < take; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, p - 1);
            std::swap(all[i], all[pick(rng)]);
        }
        all.resize(take);
        std::sort(all.begin(), all.end());
        return all;
    }

    std::uint32_t build(const std::vector<std::uint32_t>& rows, int depth) {
        const std::uint32_t id = static_cast<std::uint32_t>(nodes.size());
        nodes.emplace_back();

        const std::size_t n = rows.size();
        double sum = 0.0, sumsq = 0.0;
        double ymin = y[rows[0]], ymax = y[rows[0]];
        for (std::uint32_t r : rows) {
            sum += y[r];
            sumsq += y[r] * y[r];
            ymin = std::min(ymin, y[r]);
            ymax = std::max(ymax, y[r]);
        }
        const double mean = sum / static_cast<double>(n);

        tree_node node;
        node.n_samples = static_cast<std::uint32_t>(n);

        const bool pure = ymin == ymax;
        const bool depth_capped = hp.max_depth && depth >= *hp.max_depth;
        if (pure || depth_capped || n < static_cast<std::size_t>(hp.min_samples_split)) {
            node.value = mean;
            nodes[id] = node;
            return id;
        }

        const best_split split = find_split(rows, pick_features());
        if (split.feature < 0) { // all candidate features constant on this node
            node.value = mean;
            nodes[id] = node;
            return id;
        }

        const double sse_node = std::max(0.0, sumsq - sum * sum / static_cast<double>(n));
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.var_reduction = (sse_node - split.children_sse) / static_cast<double>(n);

        std::vector<std::uint32_t> left_rows, right_rows;
        left_rows.reserve(n);
        right_rows.reserve(n);
        for (std::uint32_t r : rows) {
            if (x(r, static_cast<std::size_t>(split.feature)) <= split.threshold)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }
        node.left = build(left_rows, depth + 1);
        node.right = build(right_rows, depth + 1);
        nodes[id] = node;
        return id;
    }
};

inline void check_training_input(const matrix& x, std::span<const double> y,
                                 std::size_t min_rows) {
    if (x.n_rows != y.size())
        throw validation_error("forest: row count of X and y differ");
    if (x.n_rows < min_rows)
        throw validation_error("forest: need at least " + std::to_string(min_rows) +
                               " training rows, got " + std::to_string(x.n_rows));
    if (x.n_cols == 0) throw validation_error("forest: X has no columns");
    for (double v : x.values)
        if (!std::isfinite(v)) throw validation_error("forest: X contains non-finite values");
    for (double v : y)
        if (!std::isfinite(v)) throw validation_error("forest: y contains non-finite values");
}

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < count; i += threads) fn(i);
        });
    }
    for (std::thread& t : pool) t.join();
}

} // namespace detail

/// Fits a single CART regression tree on all rows of (x, y), using `rng` only
/// when per-split feature subsampling is enabled.
inline regression_tree fit_tree(const matrix& x, std::span<const double> y, std::mt19937_64& rng,
                                const forest_hyperparams& hp = {}) {
    hp.validate();
    detail::check_training_input(x, y, 1);
    detail::tree_builder builder{x, y, hp, rng, {}};
    std::vector<std::uint32_t> rows(x.n_rows);
    std::iota(rows.begin(), rows.end(), 0u);
    builder.build(rows, 0);
    return regression_tree{std::move(builder.nodes)};
}

/// Fits the ensemble. Tree t draws its bootstrap sample and any feature
/// subsampling from an RNG stream keyed by (seed, t), so the result is
/// byte-identical for a given seed regardless of thread count or build order.
inline std::vector<regression_tree> fit_forest(const matrix& x, std::span<const double> y,
                                               const forest_hyperparams& hp, std::uint64_t seed,
                                               int threads = 1) {
    hp.validate();
    detail::check_training_input(x, y, 2);
    std::vector<regression_tree> trees(static_cast<std::size_t>(hp.n_trees));
    const std::size_t n = x.n_rows;
    detail::parallel_for(hp.n_trees, threads, [&](int t) {
        std::mt19937_64 rng = make_rng(seed, static_cast<std::uint64_t>(t));
        std::vector<std::uint32_t> rows(n);
        if (hp.bootstrap) {
            std::uniform_int_distribution<std::uint32_t> pick(0,
                                                              static_cast<std::uint32_t>(n - 1));
            for (std::uint32_t& r : rows) r = pick(rng);
        } else {
            std::iota(rows.begin(), rows.end(), 0u);
        }
        detail::tree_builder builder{x, y, hp, rng, {}};
        builder.build(rows, 0);
        trees[static_cast<std::size_t>(t)] = regression_tree{std::move(builder.nodes)};
    });
    return trees;
}

/// A trained regressor bundled with everything prediction needs: the fitted
/// standardizer, the selected feature names and the ensemble itself.
struct forest_model {
    forest_hyperparams params;
    std::uint64_t seed = 0;
    std::string target_name = "f1";
    std::vector<std::string> selected_features; ///< canonical names, model column order
    standardizer scaler;                        ///< fitted on the selected raw columns
    std::vector<regression_tree> trees;
    bool has_split_stats = true;

    /// Column indices of the selected features within the canonical 18.
    std::vector<std::size_t> canonical_indices() const {
        std::vector<std::size_t> idx;
        idx.reserve(selected_features.size());
        for (const std::string& name : selected_features) {
            const int fi = feature_index(name);
            if (fi < 0)
                throw validation_error("forest_model: missing feature name '" + name + "'");
            idx.push_back(static_cast<std::size_t>(fi));
        }
        return idx;
    }

    double predict_selected_raw(std::span<const double> selected) const {
        const std::vector<double> z = scaler.transform_row(selected);
        double sum = 0.0;
        for (const regression_tree& t : trees) sum += t.predict(z);
        return sum / static_cast<double>(trees.size());
    }

    double predict(const feature_vector& fv) const {
        const auto full = fv.to_array();
        std::vector<double> selected;
        selected.reserve(selected_features.size());
        for (std::size_t ci : canonical_indices()) selected.push_back(full[ci]);
        return predict_selected_raw(selected);
    }
};

/// Selects columns, fits the standardizer on the training rows and trains the
/// ensemble on the standardized matrix.
inline forest_model train_forest_model(const matrix& canonical_x, std::span<const double> y,
                                       const std::vector<std::string>& selected_features,
                                       const forest_hyperparams& hp, std::uint64_t seed,
                                       const std::string& target_name = "f1", int threads = 1) {
    if (canonical_x.n_cols != k_n_features)
        throw validation_error("train_forest_model: expected the canonical 18-column matrix");
    if (selected_features.empty())
        throw validation_error("train_forest_model: no features selected");

    forest_model model;
    model.params = hp;
    model.seed = seed;
    model.target_name = target_name;
    model.selected_features = selected_features;

    const std::vector<std::size_t> idx = model.canonical_indices();
    matrix sub(canonical_x.n_rows, idx.size());
    for (std::size_t i = 0; i < canonical_x.n_rows; ++i)
        for (std::size_t j = 0; j < idx.size(); ++j) sub(i, j) = canonical_x(i, idx[j]);

    model.scaler.fit(sub);
    const matrix z = model.scaler.transform(sub);
    model.trees = fit_forest(z, y, hp, seed, threads);
    return model;
}

// ---------------------------------------------------------------------------
// Model serialization (versioned JSON document)
// ---------------------------------------------------------------------------

inline constexpr int k_model_format_version = 1;

inline nlohmann::json model_to_json(const forest_model& m) {
    nlohmann::json j;
    j["format"] = "detscore-forest";
    j["version"] = k_model_format_version;
    j["target"] = m.target_name;
    j["seed"] = m.seed;
    j["split_stats"] = m.has_split_stats;
    j["hyperparams"] = {
        {"n_trees", m.params.n_trees},
        {"max_depth", m.params.max_depth ? nlohmann::json(*m.params.max_depth)
                                         : nlohmann::json(nullptr)},
        {"min_samples_split", m.params.min_samples_split},
        {"min_samples_leaf", m.params.min_samples_leaf},
        {"features_per_split",
         m.params.features_per_split == feature_subsampling::all ? "all" : "one_third"},
        {"bootstrap", m.params.bootstrap},
    };
    j["selected_features"] = m.selected_features;
    j["standardizer"] = {{"mean", m.scaler.mean()}, {"sigma", m.scaler.sigma()}};
    j["trees"] = nlohmann::json::array();
    for (const regression_tree& t : m.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const tree_node& n : t.nodes) {
            if (n.is_leaf())
                nodes.push_back(nlohmann::json::array({-1, n.value, n.n_samples}));
            else
                nodes.push_back(nlohmann::json::array(
                    {n.feature, n.threshold, n.left, n.right, n.n_samples, n.var_reduction}));
        }
        j["trees"].push_back(std::move(nodes));
    }
    return j;
}

inline void save_model(const forest_model& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write model file '" + path.string() + "'");
    out << model_to_json(m).dump() << '\n';
    if (!out) throw io_error("failed writing model file '" + path.string() + "'");
}

inline forest_model model_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "detscore-forest")
        throw schema_error("model file: not a detscore-forest document");
    if (j.value("version", -1) != k_model_format_version)
        throw schema_error("model file: unsupported format version " +
                           std::to_string(j.value("version", -1)));
    try {
        forest_model m;
        m.target_name = j.at("target").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.has_split_stats = j.value("split_stats", false);
        const auto& hp = j.at("hyperparams");
        m.params.n_trees = hp.at("n_trees").get<int>();
        if (!hp.at("max_depth").is_null()) m.params.max_depth = hp.at("max_depth").get<int>();
        m.params.min_samples_split = hp.at("min_samples_split").get<int>();
        m.params.min_samples_leaf = hp.at("min_samples_leaf").get<int>();
        m.params.features_per_split = hp.at("features_per_split").get<std::string>() == "all"
                                          ? feature_subsampling::all
                                          : feature_subsampling::one_third;
        m.params.bootstrap = hp.at("bootstrap").get<bool>();
        m.selected_features = j.at("selected_features").get<std::vector<std::string>>();
        m.scaler = standardizer(j.at("standardizer").at("mean").get<std::vector<double>>(),
                                j.at("standardizer").at("sigma").get<std::vector<double>>());
        for (const auto& tj : j.at("trees")) {
            regression_tree t;
            for (const auto& nj : tj) {
                if (!nj.is_array() || nj.size() < 3)
                    throw schema_error("model file: corrupt node encoding");
                tree_node n;
                n.feature = nj[0].get<int>();
                if (n.feature < 0) {
                    n.value = nj[1].get<double>();
                    n.n_samples = nj[2].get<std::uint32_t>();
                } else {
                    if (nj.size() != 6) throw schema_error("model file: corrupt node encoding");
                    n.threshold = nj[1].get<double>();
                    n.left = nj[2].get<std::uint32_t>();
                    n.right = nj[3].get<std::uint32_t>();
                    n.n_samples = nj[4].get<std::uint32_t>();
                    n.var_reduction = nj[5].get<double>();
                }
                t.nodes.push_back(n);
            }
            if (t.nodes.empty()) throw schema_error("model file: empty tree");
            for (const tree_node& n : t.nodes) {
                if (!n.is_leaf() && (n.left >= t.nodes.size() || n.right >= t.nodes.size()))
                    throw schema_error("model file: corrupt tree topology");
            }
            m.trees.push_back(std::move(t));
        }
        if (m.trees.empty()) throw schema_error("model file: no trees");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(std::string("model file: corrupt document: ") + e.what());
    }
}

inline forest_model load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open model file '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error("model file '" + path.string() + "' is corrupt: " + e.what());
    }
    return model_from_json(j);
}

} // namespace detscore
