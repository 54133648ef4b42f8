// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace aes3d {

struct LossConfig {
    double huber_delta = 1.0;
    double rank_weight = 0.1;
    double margin = 0.05;
    double pair_gap = 0.03;

    void validate() const;
};

/// 0.5 r^2 for |r| <= delta, delta (|r| - delta/2) beyond.
double huber(double prediction, double target, double delta);
/// d huber / d prediction.
double huber_grad(double prediction, double target, double delta);

/// Pairs (i, j), i < j, whose target gap is strictly larger than `gap`.
std::vector<std::pair<std::size_t, std::size_t>> rank_pairs(std::span<const double> targets, double gap);

/// Mean pairwise hinge max(0, m - sign(y_i - y_j)(p_i - p_j)) over rank_pairs; 0 when no pair qualifies.
/// When `grad` is non-empty it receives d loss / d prediction (zero-side subgradient at the kink).
double rank_loss(std::span<const double> predictions, std::span<const double> targets, double margin, double gap,
                 std::span<double> grad = {});

/// Mean Huber over the batch plus rank_weight * rank_loss. Optional gradient as for rank_loss.
double total_loss(std::span<const double> predictions, std::span<const double> targets, const LossConfig& config,
                  std::span<double> grad = {});

} // namespace aes3d
