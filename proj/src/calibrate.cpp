#include "toolbudget/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace toolbudget {

using nlohmann::json;

double logit(double p) {
    constexpr double eps = 1e-12;
    p = std::clamp(p, eps, 1.0 - eps);
    return std::log(p / (1.0 - p));
}

double ece(const std::vector<std::pair<double, int>>& predictions, int bins) {
    if (predictions.empty()) throw DomainError("ece over empty input");
    if (bins < 1) throw DomainError("ece needs at least one bin");
    std::vector<double> sum_pred(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> sum_label(static_cast<std::size_t>(bins), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
    for (const auto& [p, y] : predictions) {
        if (p < 0.0 || p > 1.0) throw DomainError("probability outside [0, 1]");
        auto b = static_cast<std::size_t>(std::min<int>(bins - 1, static_cast<int>(p * bins)));
        sum_pred[b] += p;
        sum_label[b] += y;
        ++count[b];
    }
    double total = 0.0;
    for (std::size_t b = 0; b < static_cast<std::size_t>(bins); ++b) {
        if (count[b] == 0) continue;
        const double gap = sum_pred[b] / count[b] - sum_label[b] / count[b];
        total += static_cast<double>(count[b]) / predictions.size() * std::abs(gap);
    }
    return total;
}

std::vector<ReliabilityBin> reliability_bins(const std::vector<std::pair<double, int>>& predictions,
                                             int bins) {
    if (bins < 1) throw DomainError("need at least one bin");
    std::vector<ReliabilityBin> out(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) out[static_cast<std::size_t>(b)].bin_center = (b + 0.5) / bins;
    for (const auto& [p, y] : predictions) {
        auto b = static_cast<std::size_t>(std::min<int>(bins - 1, static_cast<int>(p * bins)));
        out[b].mean_pred += p;
        out[b].mean_label += y;
        ++out[b].count;
    }
    for (auto& bin : out) {
        if (bin.count > 0) {
            bin.mean_pred /= static_cast<double>(bin.count);
            bin.mean_label /= static_cast<double>(bin.count);
        }
    }
    return out;
}

namespace {

double nll(const std::vector<CalibrationSample>& logits, double temperature) {
    constexpr double eps = 1e-12;
    double total = 0.0;
    for (const auto& s : logits) {
        const double p = std::clamp(sigmoid(s.raw_score / temperature), eps, 1.0 - eps);
        total -= s.label ? std::log(p) : std::log(1.0 - p);
    }
    return total;
}

}  // namespace

CalibrationResult fit_temperature(const std::vector<CalibrationSample>& samples, ScoreKind kind,
                                  int bins) {
    if (samples.size() < 2) throw DomainError("temperature fit needs at least 2 samples");
    bool has_pos = false, has_neg = false;
    for (const auto& s : samples) {
        if (s.label != 0 && s.label != 1) throw DomainError("labels must be binary");
        (s.label ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg)
        throw DomainError("calibration-degenerate: all labels identical");

    std::vector<CalibrationSample> logits = samples;
    if (kind == ScoreKind::Probability) {
        for (auto& s : logits) {
            if (s.raw_score <= 0.0 || s.raw_score >= 1.0)
                throw DomainError("probability scores must lie in (0, 1)");
            s.raw_score = logit(s.raw_score);
        }
    }

    // golden-section search on the (unimodal in practice) NLL
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.05, hi = 20.0;
    double x1 = hi - gr * (hi - lo);
    double x2 = lo + gr * (hi - lo);
    double f1 = nll(logits, x1);
    double f2 = nll(logits, x2);
    while (hi - lo > 1e-4) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = nll(logits, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = nll(logits, x2);
        }
    }

    CalibrationResult result;
    result.temperature = (lo + hi) / 2.0;

    std::vector<std::pair<double, int>> before, after;
    before.reserve(logits.size());
    after.reserve(logits.size());
    for (const auto& s : logits) {
        before.emplace_back(sigmoid(s.raw_score), s.label);
        after.emplace_back(sigmoid(s.raw_score / result.temperature), s.label);
    }
    result.ece_before = ece(before, bins);
    result.ece_after = ece(after, bins);
    result.reliability_bins = reliability_bins(after, bins);
    return result;
}

std::vector<CalibrationSample> read_samples_csv(const std::string& text) {
    std::vector<CalibrationSample> samples;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw StructuralError("expected 'score,label' line, got: " + line);
        CalibrationSample s;
        s.raw_score = std::stod(line.substr(0, comma));
        s.label = std::stoi(line.substr(comma + 1));
        samples.push_back(s);
    }
    return samples;
}

json calibration_to_json(const CalibrationResult& r) {
    json bins = json::array();
    for (const auto& b : r.reliability_bins)
        bins.push_back({{"bin_center", b.bin_center},
                        {"mean_pred", b.mean_pred},
                        {"mean_label", b.mean_label},
                        {"count", b.count}});
    return {{"temperature", r.temperature},
            {"ece_before", r.ece_before},
            {"ece_after", r.ece_after},
            {"reliability_bins", bins}};
}

CalibrationResult calibration_from_json(const json& j) {
    CalibrationResult r;
    r.temperature = j.at("temperature").get<double>();
    if (r.temperature <= 0) throw StructuralError("temperature must be positive");
    r.ece_before = j.at("ece_before").get<double>();
    r.ece_after = j.at("ece_after").get<double>();
    for (const auto& bj : j.at("reliability_bins")) {
        ReliabilityBin b;
        b.bin_center = bj.at("bin_center").get<double>();
        b.mean_pred = bj.at("mean_pred").get<double>();
        b.mean_label = bj.at("mean_label").get<double>();
        b.count = bj.at("count").get<std::size_t>();
        r.reliability_bins.push_back(b);
    }
    return r;
}

}  // namespace toolbudget
