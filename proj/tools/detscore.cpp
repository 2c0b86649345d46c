// detscore: estimate object-detection F1 on unlabeled images from the
// detector's own outputs. Subcommands cover the full pipeline: scoring
// labeled data, feature extraction, forest training, prediction, the
// cross-validation harness, importance analysis and a synthetic benchmark
// generator.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "detscore/detection_metrics.hpp"
#include "detscore/evaluation.hpp"
#include "detscore/features.hpp"
#include "detscore/forest.hpp"
#include "detscore/importance.hpp"
#include "detscore/ingest.hpp"
#include "detscore/reports.hpp"
#include "detscore/synth.hpp"

namespace fs = std::filesystem;
using namespace detscore;

namespace {

struct global_options {
    std::uint64_t seed = 42;
    int threads = 0; // 0 = hardware concurrency
    bool quiet = false;
};

void note(const global_options& g, const std::string& msg) {
    if (!g.quiet) std::cerr << msg << '\n';
}

split_spec parse_split(const std::string& text, std::uint64_t seed) {
    split_spec spec;
    spec.seed = seed;
    if (text == "grouped") {
        spec.kind = split_kind::leave_group_out;
        return spec;
    }
    if (text.rfind("random", 0) != 0)
        throw validation_error("unknown split '" + text +
                               "' (expected 'grouped' or 'random[:k=K,repeats=R]')");
    spec.kind = split_kind::random_kfold;
    if (text.size() > 6) {
        if (text[6] != ':')
            throw validation_error("malformed split '" + text + "'");
        std::stringstream ss(text.substr(7));
        std::string part;
        while (std::getline(ss, part, ',')) {
            const auto eq = part.find('=');
            if (eq == std::string::npos)
                throw validation_error("malformed split option '" + part + "'");
            const std::string key = part.substr(0, eq);
            int value = 0;
            try {
                value = std::stoi(part.substr(eq + 1));
            } catch (const std::exception&) {
                throw validation_error("malformed split option '" + part + "'");
            }
            if (key == "k") spec.k = value;
            else if (key == "repeats") spec.repeats = value;
            else throw validation_error("unknown split option '" + key + "'");
        }
    }
    return spec;
}

struct forest_flags {
    int trees = 100;
    int max_depth = 0; // 0 = unlimited
    int min_samples_split = 2;
    int min_samples_leaf = 1;
    bool subsample_features = false;
    bool no_bootstrap = false;

    forest_hyperparams to_hyperparams() const {
        forest_hyperparams hp;
        hp.n_trees = trees;
        if (max_depth > 0) hp.max_depth = max_depth;
        hp.min_samples_split = min_samples_split;
        hp.min_samples_leaf = min_samples_leaf;
        hp.features_per_split =
            subsample_features ? feature_subsampling::one_third : feature_subsampling::all;
        hp.bootstrap = !no_bootstrap;
        return hp;
    }
};

void add_forest_flags(CLI::App* cmd, forest_flags& f) {
    cmd->add_option("--trees", f.trees, "Number of trees in the forest")->capture_default_str();
    cmd->add_option("--max-depth", f.max_depth, "Maximum tree depth (0 = unlimited)")
        ->capture_default_str();
    cmd->add_option("--min-samples-split", f.min_samples_split,
                    "Minimum rows required to split a node")
        ->capture_default_str();
    cmd->add_option("--min-samples-leaf", f.min_samples_leaf, "Minimum rows per leaf")
        ->capture_default_str();
    cmd->add_flag("--subsample-features", f.subsample_features,
                  "Consider only a third of the features at each split");
    cmd->add_flag("--no-bootstrap", f.no_bootstrap,
                  "Fit every tree on the full training set instead of bootstrap samples");
}

std::vector<std::string> parse_selection(const std::string& csv) {
    if (csv.empty())
        return {feature_names().begin(), feature_names().end()};
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string name;
    while (std::getline(ss, name, ',')) {
        if (feature_index(name) < 0)
            throw validation_error("unknown feature '" + name + "' in --select");
        out.push_back(name);
    }
    if (out.empty()) throw validation_error("--select lists no features");
    return out;
}

std::vector<feature_row> featurize_dataset(const dataset& ds, const match_config& mc,
                                           const feature_config& fc, bool with_targets) {
    std::vector<feature_row> rows;
    rows.reserve(ds.images.size());
    for (const image_record& rec : ds.images) {
        feature_row row;
        row.id = rec.id;
        row.group = rec.group;
        row.features = extract_features(rec, mc, fc);
        if (with_targets) {
            const detection_score s = match_image(rec, mc);
            row.targets = target_triple{s.f1, s.precision, s.recall};
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<double> targets_of(const std::vector<feature_row>& rows, regression_target t) {
    std::vector<double> y;
    y.reserve(rows.size());
    for (const feature_row& r : rows) {
        if (!r.targets)
            throw validation_error("feature matrix has no target columns; run featurize with "
                                   "--with-targets on labeled data");
        y.push_back(target_value(*r.targets, t));
    }
    return y;
}

matrix canonical_matrix(const std::vector<feature_row>& rows) {
    matrix x(rows.size(), k_n_features);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto a = rows[i].features.to_array();
        for (std::size_t j = 0; j < k_n_features; ++j) x(i, j) = a[j];
    }
    return x;
}

dataset load_manifest(const global_options& g, const std::string& path) {
    std::vector<std::string> diagnostics;
    dataset ds = parse_dataset(path, &diagnostics);
    for (const std::string& d : diagnostics) note(g, "warning: " + d);
    return ds;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Detector performance estimation without labels"};
    app.require_subcommand(1);

    global_options g;
    app.add_option("--seed", g.seed, "Master RNG seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads (0 = all hardware threads)")
        ->capture_default_str();
    app.add_flag("--quiet", g.quiet, "Suppress informational messages");
    app.set_config("--config", "", "Read options from a key=value config file");

    // --- score ---------------------------------------------------------
    auto* score = app.add_subcommand("score", "Score labeled images against ground truth");
    std::string score_data, score_out;
    match_config score_mc;
    std::string score_overlap = "iou";
    score->add_option("--data", score_data, "Manifest file")->required();
    score->add_option("--iou", score_mc.iou_threshold, "IoU threshold for a match")
        ->capture_default_str();
    score->add_option("--conf", score_mc.confidence_threshold, "Confidence retention threshold")
        ->capture_default_str();
    score->add_option("--overlap", score_overlap, "Overlap measure: iou | iop")
        ->check(CLI::IsMember({"iou", "iop"}))
        ->capture_default_str();
    score->add_option("--out", score_out, "Output CSV")->required();
    score->callback([&] {
        score_mc.overlap =
            score_overlap == "iou" ? overlap_kind::iou : overlap_kind::intersection_over_prediction;
        const dataset ds = load_manifest(g, score_data);
        const auto scores = score_dataset(ds, score_mc);
        write_scores_csv(scores, score_out);
        note(g, "wrote " + score_out + " (" + std::to_string(scores.size()) + " images)");
    });

    // --- featurize -----------------------------------------------------
    auto* feat = app.add_subcommand("featurize", "Extract per-image features from detections");
    std::string feat_data, feat_out;
    match_config feat_mc;
    feature_config feat_fc;
    bool feat_targets = false, feat_area_frac = false, feat_raw_counts = false;
    feat->add_option("--data", feat_data, "Manifest file")->required();
    feat->add_option("--out", feat_out, "Output CSV")->required();
    feat->add_flag("--with-targets", feat_targets,
                   "Also compute f1/precision/recall targets (requires labels)");
    feat->add_option("--iou", feat_mc.iou_threshold, "IoU threshold used for targets")
        ->capture_default_str();
    feat->add_option("--conf", feat_mc.confidence_threshold, "Confidence retention threshold")
        ->capture_default_str();
    feat->add_flag("--area-frac-size", feat_area_frac,
                   "Use plain area fraction for the size features instead of the linear fraction");
    feat->add_flag("--raw-counts", feat_raw_counts,
                   "Emit raw confidence-bin counts instead of fractions");
    feat->callback([&] {
        feat_fc.frac_size_linear = !feat_area_frac;
        feat_fc.counts_as_fractions = !feat_raw_counts;
        const dataset ds = load_manifest(g, feat_data);
        const auto rows = featurize_dataset(ds, feat_mc, feat_fc, feat_targets);
        write_feature_matrix(rows, feat_out);
        note(g, "wrote " + feat_out + " (" + std::to_string(rows.size()) + " rows)");
    });

    // --- train ---------------------------------------------------------
    auto* train = app.add_subcommand("train", "Train a forest model on a feature matrix");
    std::string train_features, train_out, train_target = "f1", train_select;
    forest_flags train_ff;
    train->add_option("--features", train_features, "Feature matrix CSV (with targets)")
        ->required();
    train->add_option("--target", train_target, "Regression target: f1 | precision | recall")
        ->check(CLI::IsMember({"f1", "precision", "recall"}))
        ->capture_default_str();
    train->add_option("--select", train_select,
                      "Comma-separated feature names to train on (default: all 18)");
    add_forest_flags(train, train_ff);
    train->add_option("--out", train_out, "Output model file")->required();
    train->callback([&] {
        const auto rows = read_feature_matrix(train_features);
        const regression_target target = parse_target(train_target);
        const std::vector<double> y = targets_of(rows, target);
        const forest_model model =
            train_forest_model(canonical_matrix(rows), y, parse_selection(train_select),
                               train_ff.to_hyperparams(), g.seed, train_target, g.threads);
        save_model(model, train_out);
        note(g, "wrote " + train_out + " (" + std::to_string(model.trees.size()) + " trees, " +
                    std::to_string(rows.size()) + " rows)");
    });

    // --- predict -------------------------------------------------------
    auto* predict = app.add_subcommand("predict", "Apply a trained model to a feature matrix");
    std::string pred_model, pred_features, pred_out;
    predict->add_option("--model", pred_model, "Model file")->required();
    predict->add_option("--features", pred_features, "Feature matrix CSV")->required();
    predict->add_option("--out", pred_out, "Output CSV")->required();
    predict->callback([&] {
        const forest_model model = load_model(pred_model);
        const auto rows = read_feature_matrix(pred_features);
        std::vector<std::pair<std::string, double>> preds;
        preds.reserve(rows.size());
        for (const feature_row& r : rows) preds.emplace_back(r.id, model.predict(r.features));
        write_predictions_csv(preds, model.target_name, pred_out);
        note(g, "wrote " + pred_out + " (" + std::to_string(preds.size()) + " predictions)");
    });

    // --- cv ------------------------------------------------------------
    auto* cv = app.add_subcommand("cv", "Cross-validate and write the report directory");
    std::string cv_features, cv_out, cv_split = "random:k=5,repeats=1", cv_target = "f1",
                cv_select;
    double cv_f1_threshold = 0.5;
    forest_flags cv_ff;
    cv->add_option("--features", cv_features, "Feature matrix CSV (with targets)")->required();
    cv->add_option("--split", cv_split, "Split spec: random[:k=K,repeats=R] | grouped")
        ->capture_default_str();
    cv->add_option("--target", cv_target, "Regression target: f1 | precision | recall")
        ->check(CLI::IsMember({"f1", "precision", "recall"}))
        ->capture_default_str();
    cv->add_option("--select", cv_select, "Comma-separated feature names (default: all 18)");
    cv->add_option("--f1-threshold", cv_f1_threshold,
                   "Score threshold for the domain classification report")
        ->capture_default_str();
    add_forest_flags(cv, cv_ff);
    cv->add_option("--out", cv_out, "Report directory")->required();
    cv->callback([&] {
        const auto rows = read_feature_matrix(cv_features);
        const split_spec spec = parse_split(cv_split, g.seed);
        const cv_report rep = cross_validate(rows, spec, cv_ff.to_hyperparams(),
                                             parse_target(cv_target), parse_selection(cv_select),
                                             g.threads);
        write_cv_report_dir(rep, cv_f1_threshold, cv_out);
        note(g, "wrote " + cv_out + "/{metrics,parity,confusion,pr_curve,sweep}.csv (" +
                    std::to_string(rep.parity.size()) + " out-of-fold predictions)");
    });

    // --- importance ----------------------------------------------------
    auto* imp = app.add_subcommand("importance", "Rank features by importance");
    std::string imp_model, imp_features, imp_out, imp_method = "mdi";
    int imp_repeats = 10;
    imp->add_option("--model", imp_model, "Model file")->required();
    imp->add_option("--features", imp_features,
                    "Held-out feature matrix CSV (required for --method perm)");
    imp->add_option("--method", imp_method, "Ranking method: mdi | perm")
        ->check(CLI::IsMember({"mdi", "perm"}))
        ->capture_default_str();
    imp->add_option("--repeats", imp_repeats, "Permutation repeats")->capture_default_str();
    imp->add_option("--out", imp_out, "Output CSV")->required();
    imp->callback([&] {
        const forest_model model = load_model(imp_model);
        importance_report rep;
        if (imp_method == "mdi") {
            rep = mdi_importance(model);
        } else {
            if (imp_features.empty())
                throw validation_error("--method perm requires --features with held-out rows");
            const auto rows = read_feature_matrix(imp_features);
            const std::vector<double> y = targets_of(rows, parse_target(model.target_name));
            std::vector<feature_vector> x;
            x.reserve(rows.size());
            for (const feature_row& r : rows) x.push_back(r.features);
            rep = permutation_importance(model, x, y, imp_repeats, g.seed);
        }
        write_importance_csv(rep, imp_out);
        note(g, "wrote " + imp_out);
    });

    // --- sweep ---------------------------------------------------------
    auto* sweep = app.add_subcommand(
        "sweep", "Rank features, then cross-validate top-k subsets and pick the best k");
    std::string sw_features, sw_out, sw_split = "random:k=5,repeats=1", sw_target = "f1",
                sw_method = "mdi";
    int sw_kmin = 5, sw_kmax = 18, sw_repeats = 10;
    forest_flags sw_ff;
    sweep->add_option("--features", sw_features, "Feature matrix CSV (with targets)")->required();
    sweep->add_option("--split", sw_split, "Split spec used for each k")->capture_default_str();
    sweep->add_option("--target", sw_target, "Regression target")
        ->check(CLI::IsMember({"f1", "precision", "recall"}))
        ->capture_default_str();
    sweep->add_option("--method", sw_method, "Ranking method: mdi | perm")
        ->check(CLI::IsMember({"mdi", "perm"}))
        ->capture_default_str();
    sweep->add_option("--kmin", sw_kmin, "Smallest feature count")->capture_default_str();
    sweep->add_option("--kmax", sw_kmax, "Largest feature count")->capture_default_str();
    sweep->add_option("--repeats", sw_repeats, "Permutation repeats for --method perm")
        ->capture_default_str();
    add_forest_flags(sweep, sw_ff);
    sweep->add_option("--out", sw_out, "Output CSV")->required();
    sweep->callback([&] {
        const auto rows = read_feature_matrix(sw_features);
        const regression_target target = parse_target(sw_target);
        const std::vector<double> y = targets_of(rows, target);
        const forest_hyperparams hp = sw_ff.to_hyperparams();
        const std::vector<std::string> all_features{feature_names().begin(),
                                                    feature_names().end()};

        importance_report ranking;
        if (sw_method == "mdi") {
            const forest_model model =
                train_forest_model(canonical_matrix(rows), y, all_features, hp,
                                   stream_seed(g.seed, 0x72616e6bULL), sw_target, g.threads);
            ranking = mdi_importance(model);
        } else {
            // hold out a deterministic quarter of the rows for the permutation scores
            std::vector<std::string> groups(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) groups[i] = rows[i].group;
            split_spec holdout;
            holdout.k = 4;
            holdout.seed = stream_seed(g.seed, 0x686f6c64ULL);
            const fold fo = make_folds(groups, holdout).front();
            std::vector<feature_row> train_rows, test_rows;
            for (std::size_t i : fo.train) train_rows.push_back(rows[i]);
            for (std::size_t i : fo.test) test_rows.push_back(rows[i]);
            const forest_model model =
                train_forest_model(canonical_matrix(train_rows), targets_of(train_rows, target),
                                   all_features, hp, stream_seed(g.seed, 0x72616e6bULL),
                                   sw_target, g.threads);
            std::vector<feature_vector> x;
            std::vector<double> yt;
            for (const feature_row& r : test_rows) {
                x.push_back(r.features);
                yt.push_back(target_value(*r.targets, target));
            }
            ranking = permutation_importance(model, x, yt, sw_repeats, g.seed);
        }

        const selection_sweep result =
            sweep_top_k(rows, ranking.ranking, sw_kmin, sw_kmax, parse_split(sw_split, g.seed),
                        hp, target, g.seed, g.threads);
        write_selection_sweep_csv(result, sw_out);
        note(g, "wrote " + sw_out + " (chosen k = " + std::to_string(result.chosen_k) + ")");
    });

    // --- synth ---------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
    synth_config sc;
    std::string synth_out;
    bool synth_benchmark = false;
    int synth_per_level = 200, synth_min_per_bin = 10;
    synth->add_option("--out", synth_out, "Output manifest file")->required();
    synth->add_option("--n-images", sc.n_images, "Images to generate")->capture_default_str();
    synth->add_option("--width", sc.width, "Image width, px")->capture_default_str();
    synth->add_option("--height", sc.height, "Image height, px")->capture_default_str();
    synth->add_option("--lambda-objects", sc.lambda_objects, "Mean objects per image")
        ->capture_default_str();
    synth->add_option("--min-frac", sc.min_frac, "Smallest object size fraction")
        ->capture_default_str();
    synth->add_option("--max-frac", sc.max_frac, "Largest object size fraction")
        ->capture_default_str();
    synth->add_option("--p-fn", sc.p_fn, "Miss rate")->capture_default_str();
    synth->add_option("--lambda-fp", sc.lambda_fp, "Mean spurious detections per image")
        ->capture_default_str();
    synth->add_option("--jitter", sc.jitter_sigma, "Box jitter sigma, px")->capture_default_str();
    synth->add_option("--conf-tp-alpha", sc.conf_tp_alpha, "Beta alpha, true detections")
        ->capture_default_str();
    synth->add_option("--conf-tp-beta", sc.conf_tp_beta, "Beta beta, true detections")
        ->capture_default_str();
    synth->add_option("--conf-fp-alpha", sc.conf_fp_alpha, "Beta alpha, spurious detections")
        ->capture_default_str();
    synth->add_option("--conf-fp-beta", sc.conf_fp_beta, "Beta beta, spurious detections")
        ->capture_default_str();
    synth->add_option("--group", sc.group, "Group label")->capture_default_str();
    synth->add_option("--id-prefix", sc.id_prefix, "Image id prefix")->capture_default_str();
    synth->add_flag("--benchmark", synth_benchmark,
                    "Generate the three-level fidelity benchmark instead of a single subset");
    synth->add_option("--images-per-level", synth_per_level, "Benchmark images per fidelity level")
        ->capture_default_str();
    synth->add_option("--min-per-bin", synth_min_per_bin,
                      "Benchmark minimum images per 0.2-wide F1 bin")
        ->capture_default_str();
    synth->callback([&] {
        sc.seed = g.seed;
        dataset ds;
        if (synth_benchmark) {
            const auto levels = default_fidelity_levels();
            ds = generate_regression_benchmark(sc, levels, synth_per_level, synth_min_per_bin);
        } else {
            ds = generate(sc);
        }
        write_dataset(ds, synth_out);
        note(g, "wrote " + synth_out + " (" + std::to_string(ds.images.size()) + " images)");
    });

    // --- pipeline ------------------------------------------------------
    auto* pipe = app.add_subcommand(
        "pipeline", "Featurize a labeled manifest, train a model and cross-validate it");
    std::string pipe_data, pipe_out, pipe_split = "random:k=5,repeats=1", pipe_target = "f1";
    double pipe_f1_threshold = 0.5;
    match_config pipe_mc;
    forest_flags pipe_ff;
    pipe->add_option("--data", pipe_data, "Manifest file with labels")->required();
    pipe->add_option("--out", pipe_out, "Output directory")->required();
    pipe->add_option("--split", pipe_split, "Split spec for the CV stage")->capture_default_str();
    pipe->add_option("--target", pipe_target, "Regression target")
        ->check(CLI::IsMember({"f1", "precision", "recall"}))
        ->capture_default_str();
    pipe->add_option("--iou", pipe_mc.iou_threshold, "IoU threshold")->capture_default_str();
    pipe->add_option("--conf", pipe_mc.confidence_threshold, "Confidence retention threshold")
        ->capture_default_str();
    pipe->add_option("--f1-threshold", pipe_f1_threshold,
                     "Score threshold for the domain classification report")
        ->capture_default_str();
    add_forest_flags(pipe, pipe_ff);
    pipe->callback([&] {
        fs::create_directories(pipe_out);
        const dataset ds = load_manifest(g, pipe_data);
        const auto rows = featurize_dataset(ds, pipe_mc, {}, true);
        const fs::path features_path = fs::path(pipe_out) / "features.csv";
        write_feature_matrix(rows, features_path);

        const regression_target target = parse_target(pipe_target);
        const std::vector<std::string> all_features{feature_names().begin(),
                                                    feature_names().end()};
        const forest_model model =
            train_forest_model(canonical_matrix(rows), targets_of(rows, target), all_features,
                               pipe_ff.to_hyperparams(), g.seed, pipe_target, g.threads);
        save_model(model, fs::path(pipe_out) / "model.json");

        const cv_report rep =
            cross_validate(rows, parse_split(pipe_split, g.seed), pipe_ff.to_hyperparams(),
                           target, all_features, g.threads);
        write_cv_report_dir(rep, pipe_f1_threshold, fs::path(pipe_out) / "report");
        note(g, "wrote " + pipe_out + "/features.csv, model.json and report/");
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
            e.get_name() == "Success") {
            return app.exit(e); // prints usage, exit 0
        }
        app.exit(e);
        return 1;
    } catch (const detscore::error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
