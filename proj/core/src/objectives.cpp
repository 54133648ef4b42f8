// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/objectives.hpp"

#include "aes3d/error.hpp"

#include <algorithm>
#include <cmath>

namespace aes3d {

void LossConfig::validate() const {
    if (!(huber_delta > 0.0)) throw ConfigError("loss config: huber_delta must be positive");
    if (!(rank_weight >= 0.0)) throw ConfigError("loss config: rank_weight must be non-negative");
    if (!(margin >= 0.0)) throw ConfigError("loss config: margin must be non-negative");
    if (!(pair_gap >= 0.0)) throw ConfigError("loss config: pair_gap must be non-negative");
}

double huber(double prediction, double target, double delta) {
    const double r = prediction - target;
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_grad(double prediction, double target, double delta) {
    const double r = prediction - target;
    return std::clamp(r, -delta, delta);
}

std::vector<std::pair<std::size_t, std::size_t>> rank_pairs(std::span<const double> targets, double gap) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        for (std::size_t j = i + 1; j < targets.size(); ++j) {
            if (std::abs(targets[i] - targets[j]) > gap) pairs.emplace_back(i, j);
        }
    }
    return pairs;
}

double rank_loss(std::span<const double> predictions, std::span<const double> targets, double margin, double gap,
                 std::span<double> grad) {
    if (predictions.size() != targets.size()) {
        throw ContractError("rank_loss: predictions and targets differ in length");
    }
    if (!grad.empty()) {
        if (grad.size() != predictions.size()) throw ContractError("rank_loss: gradient buffer size");
        std::fill(grad.begin(), grad.end(), 0.0);
    }
    const auto pairs = rank_pairs(targets, gap);
    if (pairs.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(pairs.size());
    double total = 0.0;
    for (const auto& [i, j] : pairs) {
        const double sign = targets[i] > targets[j] ? 1.0 : -1.0;
        const double slack = margin - sign * (predictions[i] - predictions[j]);
        if (slack > 0.0) {
            total += slack;
            if (!grad.empty()) {
                grad[i] -= sign * inv;
                grad[j] += sign * inv;
            }
        }
    }
    return total * inv;
}

double total_loss(std::span<const double> predictions, std::span<const double> targets, const LossConfig& config,
                  std::span<double> grad) {
    if (predictions.size() != targets.size() || predictions.empty()) {
        throw ContractError("total_loss: predictions and targets must be non-empty and equally long");
    }
    const double inv_n = 1.0 / static_cast<double>(predictions.size());
    double reg = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) reg += huber(predictions[i], targets[i], config.huber_delta);
    reg *= inv_n;
    const double rank = rank_loss(predictions, targets, config.margin, config.pair_gap, grad);
    if (!grad.empty()) {
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            grad[i] = grad[i] * config.rank_weight + huber_grad(predictions[i], targets[i], config.huber_delta) * inv_n;
        }
    }
    return reg + config.rank_weight * rank;
}

} // namespace aes3d
