#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "detscore/features.hpp"
#include "oracles.hpp"

using namespace detscore;

TEST_CASE("confidence histogram bins and fractions") {
    const std::vector<double> scores{0.15, 0.95, 0.92};
    const auto bins = confidence_histogram(scores);
    CHECK(bins[0] == Catch::Approx(1.0 / 3.0));
    CHECK(bins[8] == Catch::Approx(2.0 / 3.0));
    for (int b = 1; b < 8; ++b) CHECK(bins[static_cast<std::size_t>(b)] == 0.0);

    CHECK(confidence_histogram({}) == std::array<double, 9>{});

    SECTION("boundary values") {
        const std::vector<double> edges{0.1, 0.9, 1.0};
        const auto eb = confidence_histogram(edges);
        CHECK(eb[0] == Catch::Approx(1.0 / 3.0)); // 0.1 in [0.1,0.2)
        CHECK(eb[8] == Catch::Approx(2.0 / 3.0)); // 0.9 and 1.0 both in [0.9,1.0]
    }
}

TEST_CASE("uniform scores spread evenly over the bins", "[property]") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    std::vector<double> scores(1000);
    for (double& s : scores) s = u(rng);
    const auto bins = confidence_histogram(scores);
    const double p = 1.0 / 9.0;
    const double sigma = std::sqrt(p * (1.0 - p) / 1000.0);
    for (double b : bins) CHECK(std::abs(b - p) < 3.0 * sigma);
}

TEST_CASE("heywood circularity of reference shapes") {
    SECTION("circle approximated by a regular 360-gon") {
        polygon p;
        for (int i = 0; i < 360; ++i) {
            const double a = 2.0 * std::numbers::pi * i / 360.0;
            p.push_back({10.0 * std::cos(a), 10.0 * std::sin(a)});
        }
        CHECK(heywood_circularity(p) == Catch::Approx(1.0).margin(1e-4));
    }
    SECTION("unit square") {
        const polygon p{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        CHECK(heywood_circularity(p) ==
              Catch::Approx(2.0 / std::sqrt(std::numbers::pi)).epsilon(1e-12));
        CHECK(heywood_circularity(p) == Catch::Approx(1.1283791670955126).epsilon(1e-12));
    }
    SECTION("square box falls back to the inscribed circle") {
        CHECK(heywood_circularity(bounding_box{5, 5, 12, 12}) ==
              Catch::Approx(1.0).margin(1e-6));
    }
    SECTION("degenerate polygon is rejected") {
        CHECK_THROWS_AS(heywood_circularity(polygon{{0, 0}, {1, 1}}), validation_error);
        CHECK_THROWS_AS(heywood_circularity(polygon{{0, 0}, {1, 1}, {2, 2}}), validation_error);
    }
}

namespace {

image_record whole_image_record() {
    image_record rec;
    rec.id = "one";
    rec.width = 100;
    rec.height = 100;
    rec.group = "g";
    rec.detections.push_back({{0, 0, 100, 100}, 0.9, std::nullopt});
    return rec;
}

} // namespace

TEST_CASE("extract_features on forced-arithmetic cases") {
    SECTION("no retained detections gives the all-zero vector") {
        image_record rec;
        rec.id = "empty";
        rec.width = 10;
        rec.height = 10;
        rec.group = "g";
        rec.detections.push_back({{0, 0, 2, 2}, 0.05, std::nullopt}); // below threshold
        const feature_vector v = extract_features(rec);
        CHECK(v == feature_vector{});
        CHECK(v.n_defects == 0.0);
    }
    SECTION("single detection covering the whole image") {
        const feature_vector v = extract_features(whole_image_record());
        CHECK(v.area_ratio == 1.0);
        CHECK(v.avg_conf == 0.9);
        CHECK(v.std_conf == 0.0);
        CHECK(v.avg_frac_size == 1.0);
        CHECK(v.std_frac_size == 0.0);
        CHECK(v.image_conf == 0.9);
        CHECK(v.counts[8] == 1.0);
        CHECK(v.n_defects == 1.0);
        CHECK(v.avg_circularity == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("randomized records match the direct-formula oracle", "[oracle]") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        const image_record rec = oracle::random_feature_instance(rng);
        const auto got = extract_features(rec).to_array();
        const auto want = oracle::direct_features(rec).values;
        for (std::size_t i = 0; i < k_n_features; ++i) {
            INFO("trial " << trial << ", feature " << feature_names()[i]);
            CHECK(got[i] == Catch::Approx(want[i]).margin(1e-9));
        }
    }
}

TEST_CASE("feature extraction is exactly permutation invariant", "[property]") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 50; ++trial) {
        image_record rec = oracle::random_feature_instance(rng);
        const feature_vector base = extract_features(rec);
        std::shuffle(rec.detections.begin(), rec.detections.end(), rng);
        CHECK(extract_features(rec) == base); // bit-exact
    }
}

TEST_CASE("scaling image and boxes by two leaves scale-free features unchanged", "[property]") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 50; ++trial) {
        image_record rec = oracle::random_feature_instance(rng);
        const feature_vector base = extract_features(rec);

        image_record scaled = rec;
        scaled.width *= 2.0;
        scaled.height *= 2.0;
        for (detection& d : scaled.detections) {
            d.box.x *= 2.0;
            d.box.y *= 2.0;
            d.box.w *= 2.0;
            d.box.h *= 2.0;
            if (d.outline) {
                for (point& p : *d.outline) {
                    p.x *= 2.0;
                    p.y *= 2.0;
                }
            }
        }
        const feature_vector v = extract_features(scaled);
        CHECK(v.area_ratio == base.area_ratio);
        CHECK(v.avg_frac_size == base.avg_frac_size);
        CHECK(v.std_frac_size == base.std_frac_size);
        CHECK(v.counts == base.counts);
        CHECK(v.avg_conf == base.avg_conf);
        CHECK(v.std_conf == base.std_conf);
        CHECK(v.image_conf == base.image_conf);
        CHECK(v.n_defects == base.n_defects);
        CHECK(v.avg_circularity == base.avg_circularity);
        CHECK(v.std_circularity == base.std_circularity);
    }
}

TEST_CASE("bin fractions sum to one whenever detections remain", "[property]") {
    std::mt19937_64 rng(59);
    for (int trial = 0; trial < 100; ++trial) {
        const image_record rec = oracle::random_feature_instance(rng);
        const feature_vector v = extract_features(rec);
        double sum = 0.0;
        for (double b : v.counts) sum += b;
        if (v.n_defects > 0) CHECK(sum == Catch::Approx(1.0).margin(1e-12));
        else CHECK(sum == 0.0);
    }
}

TEST_CASE("ground truth never influences features") {
    image_record rec = whole_image_record();
    const feature_vector unlabeled = extract_features(rec);
    rec.ground_truth.emplace();
    rec.ground_truth->push_back({{1, 1, 50, 50}, std::nullopt});
    CHECK(extract_features(rec) == unlabeled);
}

TEST_CASE("feature variant flags") {
    const image_record rec = whole_image_record();
    SECTION("area fraction variant") {
        feature_config fc;
        fc.frac_size_linear = false;
        const feature_vector v = extract_features(rec, {}, fc);
        CHECK(v.avg_frac_size == 1.0); // whole image either way
    }
    SECTION("raw counts variant") {
        feature_config fc;
        fc.counts_as_fractions = false;
        image_record two = rec;
        two.detections.push_back({{0, 0, 50, 50}, 0.95, std::nullopt});
        const feature_vector v = extract_features(two, {}, fc);
        CHECK(v.counts[8] == 2.0);
    }
}

// ---------------------------------------------------------------------------
// Standardizer
// ---------------------------------------------------------------------------

TEST_CASE("standardizer on the {1,2,3} column") {
    matrix x(3, 1);
    x(0, 0) = 1;
    x(1, 0) = 2;
    x(2, 0) = 3;
    standardizer s;
    s.fit(x);
    CHECK(s.mean()[0] == 2.0);
    CHECK(s.sigma()[0] == Catch::Approx(0.816496580927726).epsilon(1e-15));
    const matrix z = s.transform(x);
    CHECK(z(0, 0) == Catch::Approx(-1.224744871391589).epsilon(1e-12));
    CHECK(z(1, 0) == 0.0);
    CHECK(z(2, 0) == Catch::Approx(1.224744871391589).epsilon(1e-12));
}

TEST_CASE("constant columns transform to zero") {
    matrix x(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        x(i, 0) = 7.5;
        x(i, 1) = static_cast<double>(i);
    }
    standardizer s;
    s.fit(x);
    const matrix z = s.transform(x);
    for (std::size_t i = 0; i < 4; ++i) CHECK(z(i, 0) == 0.0);
}

TEST_CASE("fit-transform leaves mean 0 and sigma in {0,1}") {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    matrix x(40, 6);
    for (double& v : x.values) v = u(rng);
    for (std::size_t i = 0; i < x.n_rows; ++i) x(i, 5) = 3.0; // one constant column

    standardizer s;
    s.fit(x);
    const matrix z = s.transform(x);
    for (std::size_t j = 0; j < z.n_cols; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < z.n_rows; ++i) mean += z(i, j);
        mean /= static_cast<double>(z.n_rows);
        CHECK(std::abs(mean) < 1e-10);
        double var = 0.0;
        for (std::size_t i = 0; i < z.n_rows; ++i) var += (z(i, j) - mean) * (z(i, j) - mean);
        var /= static_cast<double>(z.n_rows);
        if (j == 5) CHECK(var == 0.0);
        else CHECK(std::sqrt(var) == Catch::Approx(1.0).margin(1e-10));
    }
}

TEST_CASE("standardizer misuse is rejected") {
    standardizer s;
    matrix x(2, 1);
    CHECK_THROWS_AS(s.transform(x), validation_error); // transform before fit
    s.fit(x);
    CHECK_THROWS_AS(s.fit(x), validation_error); // refit
    matrix wrong(2, 3);
    CHECK_THROWS_AS(s.transform(wrong), validation_error);
}

TEST_CASE("fitting on train+test leaks: crafted distributions differ") {
    matrix train(3, 1), test(2, 1), both(5, 1);
    train(0, 0) = 0.0;
    train(1, 0) = 1.0;
    train(2, 0) = 2.0;
    test(0, 0) = 100.0;
    test(1, 0) = 200.0;
    for (std::size_t i = 0; i < 3; ++i) both(i, 0) = train(i, 0);
    both(3, 0) = test(0, 0);
    both(4, 0) = test(1, 0);

    standardizer honest, leaky;
    honest.fit(train);
    leaky.fit(both);
    const matrix honest_z = honest.transform(test);
    const matrix leaky_z = leaky.transform(test);
    CHECK(std::abs(honest_z(0, 0) - leaky_z(0, 0)) > 10.0);
}
