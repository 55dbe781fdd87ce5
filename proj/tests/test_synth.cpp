#include <doctest.h>

#include <array>
#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "retouch/png_io.hpp"
#include "retouch/synth.hpp"

using namespace retouch;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("dataset generation is deterministic and balanced") {
    testutil::TempDir d1("synth_a"), d2("synth_b");
    SyntheticDatasetSpec spec;
    spec.image_size = 24;
    spec.train_count = 40;
    spec.test_count = 15;
    spec.seed = 99;
    auto m1 = generate_dataset(spec, d1.path.string());
    auto m2 = generate_dataset(spec, d2.path.string());

    REQUIRE(m1.size() == 55);
    REQUIRE(m2.size() == 55);
    std::array<int, kNumShapeClasses> train_counts{}, test_counts{};
    for (size_t i = 0; i < m1.size(); ++i) {
        CHECK(m1[i].file == m2[i].file);
        CHECK(m1[i].label == m2[i].label);
        CHECK(m1[i].fg_hue_deg == m2[i].fg_hue_deg);
        CHECK(slurp(d1.file(m1[i].file)) == slurp(d2.file(m2[i].file)));
        CHECK(m1[i].label >= 0);
        CHECK(m1[i].label < kNumShapeClasses);
        (m1[i].split == "train" ? train_counts : test_counts)[m1[i].label] += 1;
    }
    for (int c = 0; c < kNumShapeClasses; ++c) {
        CHECK(std::abs(train_counts[c] - 40 / 5) <= 1);
        CHECK(std::abs(test_counts[c] - 15 / 5) <= 1);
    }

    // manifest round trip
    auto loaded = load_manifest(d1.file("manifest.json"));
    REQUIRE(loaded.size() == m1.size());
    CHECK(loaded[7].file == m1[7].file);
    CHECK(loaded[7].label == m1[7].label);
    CHECK(loaded[7].split == m1[7].split);
}

TEST_CASE("rho zero decouples hue from label") {
    testutil::TempDir dir("synth_rho0");
    SyntheticDatasetSpec spec;
    spec.image_size = 16;
    spec.train_count = 1000;
    spec.test_count = 0;
    spec.color_shortcut_rho = 0.0;
    spec.seed = 7;
    auto manifest = generate_dataset(spec, dir.path.string());

    // chi-squared independence between 8 hue bins and 5 labels
    std::array<std::array<double, 8>, kNumShapeClasses> table{};
    std::array<double, kNumShapeClasses> row{};
    std::array<double, 8> col{};
    for (const auto& e : manifest) {
        double hue = std::fmod(e.fg_hue_deg, 360.0);
        if (hue < 0) hue += 360.0;
        const int bin = std::min(7, static_cast<int>(hue / 45.0));
        table[e.label][bin] += 1;
        row[e.label] += 1;
        col[bin] += 1;
    }
    const double n = static_cast<double>(manifest.size());
    double chi2 = 0.0;
    for (int r = 0; r < kNumShapeClasses; ++r) {
        for (int c = 0; c < 8; ++c) {
            const double expected = row[r] * col[c] / n;
            if (expected > 0) {
                chi2 += (table[r][c] - expected) * (table[r][c] - expected) / expected;
            }
        }
    }
    // 0.99 quantile of chi-squared with (5-1)(8-1) = 28 dof
    CHECK(chi2 < 48.27823577031548);
}

TEST_CASE("rho one ties hue to the class signature") {
    testutil::TempDir dir("synth_rho1");
    SyntheticDatasetSpec spec;
    spec.image_size = 16;
    spec.train_count = 100;
    spec.test_count = 0;
    spec.color_shortcut_rho = 1.0;
    spec.seed = 8;
    for (const auto& e : generate_dataset(spec, dir.path.string())) {
        double delta = std::fmod(std::abs(e.fg_hue_deg - e.label * 72.0), 360.0);
        delta = std::min(delta, 360.0 - delta);
        CHECK(delta <= 14.0);
    }
}

TEST_CASE("victim training learns and stays deterministic") {
    testutil::TempDir dir("synth_train");
    SyntheticDatasetSpec spec;
    spec.image_size = 32;
    spec.train_count = 150;
    spec.test_count = 50;
    spec.seed = 3;
    generate_dataset(spec, dir.path.string());

    VictimTrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 11;
    VictimTrainResult r1 = train_victim(dir.path.string(), cfg);
    CHECK(r1.epoch_losses.back() < r1.epoch_losses.front());
    CHECK(r1.train_accuracy > 0.5);  // tiny run, just needs to move

    VictimTrainResult r2 = train_victim(dir.path.string(), cfg);
    REQUIRE(r1.weights.entries.size() == r2.weights.entries.size());
    for (const auto& [name, entry] : r1.weights.entries) {
        const WeightEntry& other = r2.weights.get(name);
        for (size_t i = 0; i < entry.values.size(); ++i) {
            REQUIRE(other.values[i] == entry.values[i]);
        }
    }

    EvalResult ev = evaluate_victim(r1.weights, dir.path.string(), "test");
    CHECK(ev.count == 50);
    int total = 0, diag = 0;
    for (int t = 0; t < kNumShapeClasses; ++t) {
        for (int p = 0; p < kNumShapeClasses; ++p) {
            total += ev.confusion[t][p];
            if (t == p) diag += ev.confusion[t][p];
        }
    }
    CHECK(total == 50);
    CHECK(ev.accuracy == doctest::Approx(static_cast<double>(diag) / 50.0));
}

TEST_CASE("constant-logit victim scores at chance on a balanced split") {
    testutil::TempDir dir("synth_chance");
    SyntheticDatasetSpec spec;
    spec.image_size = 16;
    spec.train_count = 5;
    spec.test_count = 100;
    spec.seed = 21;
    generate_dataset(spec, dir.path.string());

    // zero weights: logits are constant, argmax ties resolve to class 0
    Network<float> net = make_victim_network<float>(kNumShapeClasses, 16, 16);
    EvalResult ev = evaluate_victim(net.export_weights(), dir.path.string(), "test");
    CHECK(ev.accuracy == doctest::Approx(0.2).epsilon(0.01));
    for (int t = 0; t < kNumShapeClasses; ++t) {
        for (int p = 1; p < kNumShapeClasses; ++p) CHECK(ev.confusion[t][p] == 0);
    }
}

TEST_CASE("generation rejects invalid specs") {
    SyntheticDatasetSpec spec;
    spec.train_count = 2;  // below the class count
    CHECK_THROWS_AS(generate_dataset(spec, "/tmp/unused_dir_x"), std::invalid_argument);
    SyntheticDatasetSpec bad_rho;
    bad_rho.color_shortcut_rho = 1.5;
    CHECK_THROWS_AS(generate_dataset(bad_rho, "/tmp/unused_dir_x"), std::invalid_argument);
    CHECK_THROWS_AS(shape_class_name(9), std::invalid_argument);
    CHECK(std::string(shape_class_name(0)) == "circle");
    CHECK(std::string(shape_class_name(4)) == "ring");
}
