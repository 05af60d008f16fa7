#include "toolbudget/calibrate.hpp"

#include "toolbudget/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace toolbudget;

namespace {

// labels drawn from sigmoid(logit / true_temperature): the miscalibration
// oracle for the fit
std::vector<CalibrationSample> synthetic_samples(double true_temperature, std::size_t n,
                                                 std::uint64_t seed) {
    RngStream rng(seed, "calibration");
    std::vector<CalibrationSample> samples;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double logit_value = -6.0 + 12.0 * rng.next_unit();
        const double p = sigmoid(logit_value / true_temperature);
        samples.push_back({logit_value, rng.bernoulli(p) ? 1 : 0});
    }
    return samples;
}

}  // namespace

TEST_CASE("ece arithmetic on degenerate inputs") {
    CHECK(ece({{1.0, 1}, {1.0, 1}, {1.0, 1}}, 10) == doctest::Approx(0.0));
    // all predictions 0.9, half the labels positive: single bin, |0.9 - 0.5|
    std::vector<std::pair<double, int>> preds;
    for (int i = 0; i < 10; ++i) preds.emplace_back(0.9, i % 2);
    CHECK(ece(preds, 10) == doctest::Approx(0.4));
    CHECK_THROWS_AS(ece({}, 10), DomainError);
    CHECK_THROWS_AS(ece({{1.5, 1}}, 10), DomainError);
}

TEST_CASE("ece of a calibrated sample vanishes with n") {
    const auto samples = synthetic_samples(1.0, 10000, 11);
    std::vector<std::pair<double, int>> preds;
    for (const auto& s : samples) preds.emplace_back(sigmoid(s.raw_score), s.label);
    CHECK(ece(preds, 10) <= 0.02);
}

TEST_CASE("fit_temperature recovers the identity on calibrated data") {
    const auto result = fit_temperature(synthetic_samples(1.0, 10000, 21));
    CHECK(result.temperature == doctest::Approx(1.0).epsilon(0.05));
    CHECK(result.ece_after <= result.ece_before + 1e-12);
}

TEST_CASE("fit_temperature recovers a planted miscalibration temperature") {
    const auto result = fit_temperature(synthetic_samples(2.5, 10000, 31));
    CHECK(result.temperature > 2.4);
    CHECK(result.temperature < 2.6);
    CHECK(result.ece_after < result.ece_before);
    CHECK(result.ece_after <= 0.02);
}

TEST_CASE("ece never degrades after fitting, for planted temperatures") {
    for (double t_star : {0.5, 1.0, 2.5}) {
        const auto result = fit_temperature(synthetic_samples(t_star, 10000, 41));
        CHECK(result.ece_after <= result.ece_before + 1e-12);
    }
}

TEST_CASE("temperature scaling preserves the ranking of samples") {
    const auto samples = synthetic_samples(2.5, 200, 51);
    const auto result = fit_temperature(samples);
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const double a = samples[i - 1].raw_score, b = samples[i].raw_score;
        const double ca = sigmoid(a / result.temperature), cb = sigmoid(b / result.temperature);
        if (a < b) CHECK(ca < cb);
        if (a > b) CHECK(ca > cb);
    }
}

TEST_CASE("degenerate inputs raise calibration errors") {
    CHECK_THROWS_AS(fit_temperature({{0.3, 1}}), DomainError);
    CHECK_THROWS_AS(fit_temperature({{0.3, 1}, {0.5, 1}, {2.0, 1}}), DomainError);
    CHECK_THROWS_AS(fit_temperature({{-0.3, 0}, {0.5, 0}}), DomainError);
    CHECK_THROWS_AS(fit_temperature({{0.3, 2}, {0.5, 0}}), DomainError);
}

TEST_CASE("probability scores are converted to logits internally") {
    std::vector<CalibrationSample> probs;
    RngStream rng(61, "calibration");
    for (int i = 0; i < 5000; ++i) {
        const double logit_value = -4.0 + 8.0 * rng.next_unit();
        probs.push_back({sigmoid(logit_value), rng.bernoulli(sigmoid(logit_value)) ? 1 : 0});
    }
    const auto result = fit_temperature(probs, ScoreKind::Probability);
    CHECK(result.temperature == doctest::Approx(1.0).epsilon(0.1));
    CHECK_THROWS_AS(fit_temperature({{1.2, 1}, {0.5, 0}}, ScoreKind::Probability), DomainError);
}

TEST_CASE("reliability bins partition [0,1] and carry counts") {
    const auto result = fit_temperature(synthetic_samples(1.0, 2000, 71));
    REQUIRE(result.reliability_bins.size() == 10);
    std::size_t total = 0;
    for (std::size_t b = 0; b < 10; ++b) {
        CHECK(result.reliability_bins[b].bin_center == doctest::Approx(0.05 + 0.1 * b));
        total += result.reliability_bins[b].count;
    }
    CHECK(total == 2000);
}

TEST_CASE("samples csv parses scores and labels") {
    const auto samples = read_samples_csv("# header\n0.5,1\n-1.25,0\n");
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].raw_score == doctest::Approx(0.5));
    CHECK(samples[0].label == 1);
    CHECK(samples[1].raw_score == doctest::Approx(-1.25));
    CHECK_THROWS_AS(read_samples_csv("not a line\n"), std::exception);
}

TEST_CASE("calibration report json round-trips") {
    const auto result = fit_temperature(synthetic_samples(2.5, 1000, 81));
    const auto back = calibration_from_json(calibration_to_json(result));
    CHECK(back.temperature == doctest::Approx(result.temperature));
    CHECK(back.reliability_bins.size() == result.reliability_bins.size());
}
