#pragma once
// Post-hoc probability calibration for intention predictors.
//
// Binary temperature scaling: fit T minimizing the negative log-likelihood
// of sigmoid(logit / T) on held-out (score, label) pairs, and report expected
// calibration error before/after with equal-width reliability bins.

#include "toolbudget/errors.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace toolbudget {

struct CalibrationSample {
    double raw_score = 0.0;  // logit, or probability when declared as such
    int label = 0;           // {0, 1}
};

// Whether raw_score carries logits or probabilities; probabilities are
// converted to logits internally.
enum class ScoreKind { Logit, Probability };

struct ReliabilityBin {
    double bin_center = 0.0;
    double mean_pred = 0.0;
    double mean_label = 0.0;
    std::size_t count = 0;
};

struct CalibrationResult {
    double temperature = 1.0;
    double ece_before = 0.0;
    double ece_after = 0.0;
    std::vector<ReliabilityBin> reliability_bins;  // post-calibration diagnostics
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p);

// Standard binned ECE: sum_b (n_b / N) * |mean_pred_b - mean_label_b| over
// equal-width bins of [0, 1]. Empty input raises DomainError.
double ece(const std::vector<std::pair<double, int>>& predictions, int bins = 10);

std::vector<ReliabilityBin> reliability_bins(const std::vector<std::pair<double, int>>& predictions,
                                             int bins = 10);

// Golden-section search for T in [0.05, 20] to |dT| < 1e-4. Requires both
// labels to be present; single-class samples raise DomainError.
CalibrationResult fit_temperature(const std::vector<CalibrationSample>& samples,
                                  ScoreKind kind = ScoreKind::Logit, int bins = 10);

// "score,label" per line, '#' comments allowed.
std::vector<CalibrationSample> read_samples_csv(const std::string& text);

nlohmann::json calibration_to_json(const CalibrationResult& result);
CalibrationResult calibration_from_json(const nlohmann::json& j);

}  // namespace toolbudget
