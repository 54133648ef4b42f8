// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/error.hpp"
#include "aes3d/objectives.hpp"

#include <gtest/gtest.h>

#include <random>
#include <vector>

using namespace aes3d;

TEST(Huber, Examples) {
    EXPECT_EQ(huber(0.3, 0.3, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(huber(0.5, 0.0, 1.0), 0.125);
    EXPECT_DOUBLE_EQ(huber(2.0, 0.0, 1.0), 1.5);
    EXPECT_DOUBLE_EQ(huber(-2.0, 0.0, 1.0), 1.5);
}

TEST(Huber, SmoothAtDelta) {
    for (double delta : {0.5, 1.0, 2.0}) {
        const double h = 1e-7;
        const double left = (huber(delta, 0.0, delta) - huber(delta - h, 0.0, delta)) / h;
        const double right = (huber(delta + h, 0.0, delta) - huber(delta, 0.0, delta)) / h;
        EXPECT_NEAR(left, right, 1e-6);
        EXPECT_NEAR(huber(delta - 1e-12, 0.0, delta), huber(delta + 1e-12, 0.0, delta), 1e-11);
        EXPECT_DOUBLE_EQ(huber_grad(delta, 0.0, delta), delta);
        EXPECT_DOUBLE_EQ(huber_grad(-3.0 * delta, 0.0, delta), -delta);
    }
}

TEST(RankPairs, Examples) {
    const std::vector<double> a{0.5, 0.2};
    EXPECT_EQ(rank_pairs(a, 0.03), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}}));
    const std::vector<double> b{0.50, 0.51};
    EXPECT_TRUE(rank_pairs(b, 0.03).empty());
    const std::vector<double> c{0.4};
    EXPECT_TRUE(rank_pairs(c, 0.03).empty());
    // Strict comparison: a gap of exactly epsilon does not qualify.
    const std::vector<double> d{0.0, 0.5};
    EXPECT_TRUE(rank_pairs(d, 0.5).empty());
}

TEST(RankLoss, Examples) {
    const std::vector<double> p1{0.3, 0.4}, y1{0.5, 0.2};
    EXPECT_NEAR(rank_loss(p1, y1, 0.05, 0.03), 0.15, 1e-15);
    const std::vector<double> p2{0.9, 0.1}, y2{1.0, 0.0};
    EXPECT_EQ(rank_loss(p2, y2, 0.05, 0.03), 0.0);
    const std::vector<double> p3{0.9, 0.1}, y3{0.5, 0.51};
    EXPECT_EQ(rank_loss(p3, y3, 0.05, 0.03), 0.0);
}

TEST(TotalLoss, Examples) {
    const std::vector<double> p{0.3, 0.4}, y{0.5, 0.2};
    LossConfig c;
    EXPECT_NEAR(total_loss(p, y, c), 0.035, 1e-15);
    c.rank_weight = 0.0;
    EXPECT_NEAR(total_loss(p, y, c), 0.02, 1e-15);
    c.rank_weight = 0.1;
    EXPECT_EQ(total_loss(y, y, c), 0.0);
}

TEST(TotalLoss, LinearInRankWeight) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> p(6), y(6);
        for (auto& x : p) x = u(rng);
        for (auto& x : y) x = u(rng);
        LossConfig lo, hi;
        lo.rank_weight = 0.1;
        hi.rank_weight = 0.5;
        EXPECT_NEAR(total_loss(p, y, hi) - total_loss(p, y, lo), 0.4 * rank_loss(p, y, 0.05, 0.03), 1e-12);
    }
}

TEST(RankLoss, ShiftInvariant) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> p(5), y(5);
        for (auto& x : p) x = u(rng);
        for (auto& x : y) x = u(rng);
        std::vector<double> shifted = p;
        const double c = 10.0 * (u(rng) - 0.5);
        for (auto& x : shifted) x += c;
        EXPECT_NEAR(rank_loss(p, y, 0.05, 0.03), rank_loss(shifted, y, 0.05, 0.03), 1e-12);
    }
}

TEST(RankLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LossConfig c;
    for (int t = 0; t < 50; ++t) {
        std::vector<double> p(5), y(5), g(5);
        for (auto& x : p) x = u(rng);
        for (auto& x : y) x = u(rng);
        total_loss(p, y, c, g);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double h = 1e-7;
            auto q = p;
            q[i] += h;
            const double up = total_loss(q, y, c);
            q[i] -= 2 * h;
            const double down = total_loss(q, y, c);
            EXPECT_NEAR(g[i], (up - down) / (2 * h), 1e-5);
        }
    }
}

TEST(RankLoss, KinkSubgradientFromZeroSide) {
    // y0 > y1 and p0 - p1 = m exactly: the hinge sits on its kink.
    const double m = 0.0625;
    const std::vector<double> p{0.5625, 0.5}, y{0.9, 0.1};
    ASSERT_EQ(p[0] - p[1], m);
    std::vector<double> g(2);
    rank_loss(p, y, m, 0.03, g);
    // Moving p0 up (the zero side) leaves the loss at 0; the reported gradient matches that side.
    const double h = 1e-6;
    const std::vector<double> up{0.5625 + h, 0.5};
    const double one_sided = (rank_loss(up, y, m, 0.03) - rank_loss(p, y, m, 0.03)) / h;
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[1], 0.0);
    EXPECT_NEAR(one_sided, 0.0, 1e-9);
}

TEST(LossConfig, Validate) {
    LossConfig c;
    c.huber_delta = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = LossConfig{};
    c.rank_weight = -0.1;
    EXPECT_THROW(c.validate(), ConfigError);
}
