#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "detscore/dataset.hpp"
#include "detscore/detection_metrics.hpp"
#include "detscore/errors.hpp"
#include "detscore/random.hpp"

namespace detscore {

/// Knobs for the seeded detector simulator. Ground truth is sampled per
/// image; each object is then either missed (probability p_fn) or reported
/// with a jittered box and a high-confidence score, and Poisson(lambda_fp)
/// spurious low-confidence detections are mixed in. True and spurious
/// confidences come from separated Beta distributions so the confidence-bin
/// features carry real signal.
struct synth_config {
    int n_images = 100;
    double width = 1024.0;
    double height = 1024.0;
    double lambda_objects = 8.0; ///< Poisson mean ground-truth objects per image
    double min_frac = 0.02;      ///< log-uniform linear object size, fraction of image side
    double max_frac = 0.15;
    double p_fn = 0.1;         ///< miss rate
    double lambda_fp = 0.5;    ///< Poisson mean spurious detections per image
    double jitter_sigma = 2.0; ///< box jitter, pixels
    double conf_tp_alpha = 8.0, conf_tp_beta = 2.0; ///< Beta for true detections
    double conf_fp_alpha = 2.0, conf_fp_beta = 5.0; ///< Beta for spurious detections
    std::string group = "synthetic";
    std::string id_prefix = "synth";
    std::uint64_t seed = 1;

    void validate() const {
        if (n_images < 1) throw validation_error("synth_config: n_images must be >= 1");
        if (width <= 0.0 || height <= 0.0)
            throw validation_error("synth_config: image dimensions must be positive");
        if (!(min_frac > 0.0 && max_frac >= min_frac && max_frac < 1.0))
            throw validation_error("synth_config: need 0 < min_frac <= max_frac < 1");
        if (p_fn < 0.0 || p_fn > 1.0)
            throw validation_error("synth_config: p_fn must lie in [0,1]");
        if (lambda_objects < 0.0 || lambda_fp < 0.0 || jitter_sigma < 0.0)
            throw validation_error("synth_config: rates must be >= 0");
        if (conf_tp_alpha <= 0.0 || conf_tp_beta <= 0.0 || conf_fp_alpha <= 0.0 ||
            conf_fp_beta <= 0.0)
            throw validation_error("synth_config: Beta parameters must be positive");
    }
};

namespace detail {

template <typename Rng>
bounding_box sample_box(Rng& rng, const synth_config& cfg) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double side = std::min(cfg.width, cfg.height);
    const double frac =
        cfg.min_frac * std::pow(cfg.max_frac / cfg.min_frac, unit(rng)); // log-uniform
    std::uniform_real_distribution<double> aspect(0.8, 1.25);
    double w = frac * side;
    double h = std::min(w * aspect(rng), cfg.height - 1.0);
    w = std::min(w, cfg.width - 1.0);
    std::uniform_real_distribution<double> px(0.0, cfg.width - w);
    std::uniform_real_distribution<double> py(0.0, cfg.height - h);
    return bounding_box{px(rng), py(rng), w, h};
}

template <typename Rng>
bounding_box jitter_box(Rng& rng, const bounding_box& b, double sigma, const synth_config& cfg) {
    if (sigma <= 0.0) return b;
    std::normal_distribution<double> noise(0.0, sigma);
    bounding_box out = b;
    out.x += noise(rng);
    out.y += noise(rng);
    out.w = std::max(1.0, out.w + noise(rng));
    out.h = std::max(1.0, out.h + noise(rng));
    // keep the jittered box inside the image so ingest never rejects it
    out.x = std::clamp(out.x, 0.0, cfg.width - 1.0);
    out.y = std::clamp(out.y, 0.0, cfg.height - 1.0);
    out.w = std::min(out.w, cfg.width - out.x);
    out.h = std::min(out.h, cfg.height - out.y);
    return out;
}

} // namespace detail

/// Generates one dataset. Each image draws from its own RNG stream keyed by
/// (seed, image index), so generation is order-independent and the same seed
/// always reproduces identical bytes.
inline dataset generate(const synth_config& cfg) {
    cfg.validate();
    dataset ds;
    ds.provenance = "synthetic detector simulation";
    ds.images.reserve(static_cast<std::size_t>(cfg.n_images));

    for (int i = 0; i < cfg.n_images; ++i) {
        std::mt19937_64 rng = make_rng(cfg.seed, static_cast<std::uint64_t>(i));
        image_record rec;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "_%06d", i);
        rec.id = cfg.id_prefix + idbuf;
        rec.width = cfg.width;
        rec.height = cfg.height;
        rec.group = cfg.group;
        rec.ground_truth.emplace();

        std::poisson_distribution<int> n_objects(cfg.lambda_objects);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const int n_gt = cfg.lambda_objects > 0.0 ? n_objects(rng) : 0;
        for (int g = 0; g < n_gt; ++g) {
            const bounding_box box = detail::sample_box(rng, cfg);
            rec.ground_truth->push_back({box, std::nullopt});
            if (unit(rng) >= cfg.p_fn) {
                detection d;
                d.box = detail::jitter_box(rng, box, cfg.jitter_sigma, cfg);
                d.score = std::clamp(sample_beta(rng, cfg.conf_tp_alpha, cfg.conf_tp_beta), 0.0,
                                     1.0);
                rec.detections.push_back(std::move(d));
            }
        }

        std::poisson_distribution<int> n_spurious(cfg.lambda_fp);
        const int n_fp = cfg.lambda_fp > 0.0 ? n_spurious(rng) : 0;
        for (int s = 0; s < n_fp; ++s) {
            detection d;
            d.box = detail::sample_box(rng, cfg);
            d.score =
                std::clamp(sample_beta(rng, cfg.conf_fp_alpha, cfg.conf_fp_beta), 0.0, 1.0);
            rec.detections.push_back(std::move(d));
        }

        ds.images.push_back(std::move(rec));
    }
    return ds;
}

/// One fidelity step of the regression benchmark.
struct fidelity_level {
    std::string name;
    double p_fn = 0.0;
    double lambda_fp = 0.0;
    double jitter_sigma = 0.0;
    double conf_tp_alpha = 8.0;
    double conf_tp_beta = 2.0;

    friend bool operator==(const fidelity_level& a, const fidelity_level& b) {
        return a.p_fn == b.p_fn && a.lambda_fp == b.lambda_fp &&
               a.jitter_sigma == b.jitter_sigma && a.conf_tp_alpha == b.conf_tp_alpha &&
               a.conf_tp_beta == b.conf_tp_beta;
    }
};

/// Detector-quality gradient that spreads true F1 across the full range:
/// a clean detector, a mediocre one and a poor one.
inline std::vector<fidelity_level> default_fidelity_levels() {
    return {
        {"fidelity_high", 0.02, 0.2, 1.0, 9.0, 1.5},
        {"fidelity_mid", 0.45, 2.0, 4.0, 5.0, 3.0},
        {"fidelity_low", 0.85, 4.0, 8.0, 2.5, 4.0},
    };
}

/// Concatenates one generated subset per fidelity level (group label = level
/// name) and verifies the resulting true-F1 distribution covers every
/// 0.2-wide bin with at least `min_per_bin` images. Levels must differ: a
/// flat gradient cannot span the score range.
inline dataset generate_regression_benchmark(const synth_config& base,
                                             std::span<const fidelity_level> levels,
                                             int images_per_level, int min_per_bin = 10) {
    if (levels.size() < 3)
        throw validation_error("generate_regression_benchmark: need >= 3 fidelity levels");
    bool any_differ = false;
    for (std::size_t i = 1; i < levels.size(); ++i)
        if (!(levels[i] == levels[0])) any_differ = true;
    if (!any_differ)
        throw validation_error("generate_regression_benchmark: degenerate span, all fidelity "
                               "levels have identical knobs");
    if (images_per_level < 1)
        throw validation_error("generate_regression_benchmark: images_per_level must be >= 1");

    dataset out;
    out.provenance = "synthetic regression benchmark";
    for (std::size_t li = 0; li < levels.size(); ++li) {
        synth_config cfg = base;
        cfg.n_images = images_per_level;
        cfg.p_fn = levels[li].p_fn;
        cfg.lambda_fp = levels[li].lambda_fp;
        cfg.jitter_sigma = levels[li].jitter_sigma;
        cfg.conf_tp_alpha = levels[li].conf_tp_alpha;
        cfg.conf_tp_beta = levels[li].conf_tp_beta;
        cfg.group = levels[li].name;
        cfg.id_prefix = base.id_prefix + "_" + levels[li].name;
        cfg.seed = stream_seed(base.seed, li);
        dataset part = generate(cfg);
        for (image_record& rec : part.images) out.images.push_back(std::move(rec));
    }

    std::array<int, 5> bin_fill{};
    for (const image_record& rec : out.images) {
        const double f1 = match_image(rec).f1;
        const std::size_t bin = std::min<std::size_t>(4, static_cast<std::size_t>(f1 * 5.0));
        ++bin_fill[bin];
    }
    for (std::size_t b = 0; b < bin_fill.size(); ++b) {
        if (bin_fill[b] < min_per_bin)
            throw validation_error(
                "generate_regression_benchmark: infeasible bin fill, F1 bin " +
                std::to_string(b) + " holds " + std::to_string(bin_fill[b]) + " images (< " +
                std::to_string(min_per_bin) + "); widen the fidelity gradient or image budget");
    }
    return out;
}

} // namespace detscore
