#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "targeting/allocation.hpp"
#include "targeting/error.hpp"

using namespace targeting;

namespace {

std::vector<double> random_gaps(std::mt19937_64& gen, std::size_t n) {
    std::uniform_real_distribution<double> u(-20.0, 60.0);
    std::vector<double> g(n);
    for (double& v : g) v = u(gen);
    return g;
}

}  // namespace

TEST(TransferVector, RejectsNegativeAndOverBudget) {
    EXPECT_THROW(TransferVector({1.0, -0.1}, 5.0), Error);
    EXPECT_THROW(TransferVector({3.0, 3.0}, 5.0), Error);
    EXPECT_NO_THROW(TransferVector({2.5, 2.5 + 5e-10}, 5.0));
    const TransferVector t({3.0, 0.0, 1.0}, 5.0);
    EXPECT_DOUBLE_EQ(t.spend(), 4.0);
    EXPECT_DOUBLE_EQ(t.squared_norm(), 10.0);
    EXPECT_EQ(t.active_count(), 2u);
}

TEST(Projection, WorkedExample) {
    const std::vector<double> y{20, 35, 45, 60, 100};
    std::vector<double> gaps;
    for (double v : y) gaps.push_back(100.0 - v);
    const TransferVector t = project_to_budget_simplex(gaps, 100.0);
    const std::vector<double> expected{45, 30, 20, 5, 0};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(t[i], expected[i], 1e-12);
    EXPECT_NEAR(solve_budget_multiplier(gaps, 100.0), 35.0, 1e-12);
}

TEST(Projection, SlackBudgetKeepsPositiveGaps) {
    const std::vector<double> gaps{3.0, -1.0, 2.0};
    const TransferVector t = project_to_budget_simplex(gaps, 10.0);
    EXPECT_DOUBLE_EQ(t[0], 3.0);
    EXPECT_DOUBLE_EQ(t[1], 0.0);
    EXPECT_DOUBLE_EQ(t[2], 2.0);
    EXPECT_DOUBLE_EQ(solve_budget_multiplier(gaps, 10.0), 0.0);
}

TEST(Projection, AllNonpositiveGapsGiveZero) {
    const TransferVector t = project_to_budget_simplex(std::vector<double>{-1.0, 0.0, -3.0}, 1.0);
    EXPECT_EQ(t.active_count(), 0u);
}

TEST(Projection, InvalidInputs) {
    EXPECT_THROW(project_to_budget_simplex(std::vector<double>{}, 1.0), Error);
    EXPECT_THROW(project_to_budget_simplex(std::vector<double>{1.0}, 0.0), Error);
    EXPECT_THROW(project_to_budget_simplex(std::vector<double>{NAN}, 1.0), Error);
}

TEST(Projection, MatchesBruteForceOracle) {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + trial % 8;
        const auto gaps = random_gaps(gen, n);
        const double budget = std::uniform_real_distribution<double>(0.5, 150.0)(gen);
        const auto ref = oracle::brute_force_projection(gaps, budget);
        const TransferVector t = project_to_budget_simplex(gaps, budget);
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(t[i], ref[i], 1e-8);
    }
}

TEST(Projection, ThreeCharacterizationsAgree) {
    std::mt19937_64 gen(12);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + trial % 7;
        const auto gaps = random_gaps(gen, n);
        const double z = 50.0;
        std::vector<double> incomes(n);
        for (std::size_t i = 0; i < n; ++i) incomes[i] = z - gaps[i];
        const double budget = std::uniform_real_distribution<double>(0.5, 100.0)(gen);

        const TransferVector proj = project_to_budget_simplex(gaps, budget);
        const double gamma = solve_budget_multiplier(gaps, budget);
        const auto kkt = kkt_transfers(gaps, 2.0 * gamma);
        const LevelingResult lev = leveling_up_unsorted(incomes, z, budget);
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_NEAR(proj[i], kkt[i], 1e-9);
            EXPECT_NEAR(proj[i], lev.transfers[i], 1e-9);
        }
    }
}

TEST(Projection, BisectionAgreesWithSort) {
    std::mt19937_64 gen(13);
    for (int trial = 0; trial < 100; ++trial) {
        const auto gaps = random_gaps(gen, 50);
        const double budget = std::uniform_real_distribution<double>(1.0, 500.0)(gen);
        const double exact = solve_budget_multiplier(gaps, budget);
        const double bis = solve_budget_multiplier_bisection(gaps, budget);
        EXPECT_NEAR(thresholded_total(gaps, bis), thresholded_total(gaps, exact), 1e-9);
    }
}

TEST(Projection, Nonexpansive) {
    std::mt19937_64 gen(14);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = random_gaps(gen, 6);
        const auto b = random_gaps(gen, 6);
        const TransferVector pa = project_to_budget_simplex(a, 40.0);
        const TransferVector pb = project_to_budget_simplex(b, 40.0);
        double dp = 0.0, dx = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
            dp += (pa[i] - pb[i]) * (pa[i] - pb[i]);
            dx += (a[i] - b[i]) * (a[i] - b[i]);
        }
        EXPECT_LE(dp, dx + 1e-9);
    }
}

TEST(Projection, MultiplierNonincreasingInBudget) {
    std::mt19937_64 gen(15);
    const auto gaps = random_gaps(gen, 30);
    double last = std::numeric_limits<double>::infinity();
    for (double b = 1.0; b < 800.0; b *= 1.3) {
        const double g = solve_budget_multiplier(gaps, b);
        EXPECT_LE(g, last + 1e-12);
        last = g;
    }
}

TEST(Projection, SpendsWholeBudgetWhenBinding) {
    std::mt19937_64 gen(16);
    for (int trial = 0; trial < 100; ++trial) {
        const auto gaps = random_gaps(gen, 40);
        double pos = 0.0;
        for (double g : gaps) pos += std::max(g, 0.0);
        const double budget = 0.3 * pos;
        EXPECT_NEAR(project_to_budget_simplex(gaps, budget).spend(), budget, 1e-9 * budget);
    }
}

TEST(Leveling, WorkedExample) {
    const std::vector<double> y{20, 35, 45, 60, 100};
    const LevelingResult r = leveling_up(y, 100.0, 100.0);
    EXPECT_NEAR(r.level, 65.0, 1e-12);
    EXPECT_EQ(r.cutoff_index, 4u);
    EXPECT_NEAR(r.transfers[0], 45.0, 1e-12);
    EXPECT_NEAR(r.transfers[3], 5.0, 1e-12);
    EXPECT_DOUBLE_EQ(r.transfers[4], 0.0);
}

TEST(Leveling, SlackBudgetFillsEveryGap) {
    const std::vector<double> y{1, 2, 8};
    const LevelingResult r = leveling_up(y, 5.0, 100.0);
    EXPECT_DOUBLE_EQ(r.level, 5.0);
    EXPECT_EQ(r.cutoff_index, 2u);
    EXPECT_DOUBLE_EQ(r.transfers.spend(), 7.0);
}

TEST(Leveling, RejectsUnsorted) {
    EXPECT_THROW(leveling_up(std::vector<double>{3, 1, 2}, 5.0, 1.0), Error);
}

TEST(Leveling, Ties) {
    const LevelingResult r = leveling_up(std::vector<double>{1, 1, 1, 9}, 5.0, 3.0);
    EXPECT_NEAR(r.level, 2.0, 1e-12);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.transfers[i], 1.0, 1e-12);
}
