// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace aes3d {

/// A correlation value plus whether an input had zero variance (value is then 0).
struct Correlation {
    double value = 0.0;
    bool degenerate = false;
};

/// Average (fractional) ranks, 1-based; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

Correlation pearson(std::span<const double> x, std::span<const double> y);
Correlation spearman(std::span<const double> x, std::span<const double> y);
/// Tau-b with tie correction, O(n log n).
Correlation kendall(std::span<const double> x, std::span<const double> y);

/// g(x) = b1 (1/2 - 1/(1 + exp(b2 (x - b3)))) + b4.
double logistic4(double x, const std::array<double, 4>& beta);

struct LogisticFit {
    double plcc = 0.0;
    std::array<double, 4> params{};
    bool degenerate = false;
    /// The least-squares optimum sat at the family's affine limit (b2 -> 0); the affine map was used.
    bool affine_limit = false;
};

/// Least-squares 4-parameter logistic fit of targets on predictions, then Pearson of g(predictions)
/// against targets. Requires at least 5 samples.
LogisticFit logistic_fit_plcc(std::span<const double> predictions, std::span<const double> targets);

double mae(std::span<const double> predictions, std::span<const double> targets);
double rmse(std::span<const double> predictions, std::span<const double> targets);

struct LinearCalibration {
    double a = 1.0;
    double b = 0.0;
    bool degenerate = false;

    double apply(double prediction) const { return a * prediction + b; }
};

/// Ordinary least squares y ~ a x + b on the training split only.
LinearCalibration linear_calibration(std::span<const double> train_predictions, std::span<const double> train_targets);

enum class TrivialKind { Mean, Median };

/// The constant a trivial predictor would emit, computed from training targets.
double trivial_predictor(std::span<const double> train_targets, TrivialKind kind);

struct MetricsReport {
    double plcc = 0.0;     // after logistic fitting
    double plcc_raw = 0.0; // plain Pearson
    double srcc = 0.0;
    double krcc = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    std::size_t n = 0;
    std::array<double, 4> logistic_params{};
    bool degenerate = false;

    nlohmann::json to_json() const;
    /// Throws AggregationError when a metric field is missing or not a number.
    static MetricsReport from_json(const nlohmann::json& j);
};

/// All five metrics on predictions clamped to [0, 1] (reporting scale).
MetricsReport compute_metrics(std::span<const double> predictions, std::span<const double> targets);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Per-metric arithmetic mean and population standard deviation across runs.
std::map<std::string, MeanStd> aggregate_seed_runs(std::span<const MetricsReport> reports);
std::string format_mean_std(const MeanStd& v, int digits = 3);

} // namespace aes3d
