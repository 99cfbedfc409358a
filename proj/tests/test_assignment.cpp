#include <gtest/gtest.h>

#include <random>

#include "mbm/assignment.hpp"
#include "oracles.hpp"

using namespace mbm;

namespace {

CostMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto m = n == 0 ? 0 : static_cast<Eigen::Index>(rows.begin()->size());
    CostMatrix c(n, m);
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        Eigen::Index j = 0;
        for (double v : r) c.entries(i, j++) = v;
        ++i;
    }
    return c;
}

void expect_same_ranking(const std::vector<Assignment>& got, const std::vector<Assignment>& want, double tol) {
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t r = 0; r < got.size(); ++r) {
        EXPECT_NEAR(got[r].total_cost, want[r].total_cost, tol) << "rank " << r;
        EXPECT_EQ(got[r].row_to_col, want[r].row_to_col) << "rank " << r;
    }
}

void expect_valid(const CostMatrix& c, const Assignment& a) {
    std::vector<char> used(static_cast<std::size_t>(c.cols()), 0);
    ASSERT_EQ(a.row_to_col.size(), static_cast<std::size_t>(c.rows()));
    for (int i = 0; i < c.rows(); ++i) {
        const int j = a.row_to_col[static_cast<std::size_t>(i)];
        if (j == kUnassigned) continue;
        EXPECT_FALSE(CostMatrix::forbidden(c.entries(i, j)));
        EXPECT_FALSE(used[static_cast<std::size_t>(j)]) << "column used twice";
        used[static_cast<std::size_t>(j)] = 1;
    }
}

}  // namespace

TEST(SolveOptimal, EmptyMatrices) {
    for (auto [n, m] : {std::pair{0, 0}, std::pair{0, 3}, std::pair{3, 0}}) {
        const auto a = solve_optimal(CostMatrix(n, m));
        EXPECT_EQ(a.total_cost, 0.0);
        EXPECT_EQ(a.assigned_count(), 0u);
        EXPECT_EQ(a.row_to_col.size(), static_cast<std::size_t>(n));
    }
}

TEST(SolveOptimal, TwoByTwo) {
    const auto a = solve_optimal(from_rows({{-5, -1}, {-2, -4}}));
    EXPECT_EQ(a.row_to_col, (std::vector<int>{0, 1}));
    EXPECT_DOUBLE_EQ(a.total_cost, -9.0);
}

TEST(SolveOptimal, PositiveCostLeftUnassigned) {
    const auto a = solve_optimal(from_rows({{3}}));
    EXPECT_EQ(a.row_to_col, (std::vector<int>{kUnassigned}));
    EXPECT_EQ(a.total_cost, 0.0);
}

TEST(SolveOptimal, MandatorySlackMakesProblemInfeasible) {
    auto c = from_rows({{kForbidden}});
    c.unassigned_row_cost = Eigen::VectorXd::Constant(1, kForbidden);
    EXPECT_THROW(solve_optimal(c), NumericalError);
    EXPECT_TRUE(k_best(c, 3).empty());
}

TEST(SolveOptimal, RejectsNan) {
    auto c = from_rows({{std::nan("")}});
    EXPECT_THROW(solve_optimal(c), InputError);
    EXPECT_THROW(solve_optimal(from_rows({{-kForbidden}})), InputError);
}

TEST(KBest, TwoByTwoTopThree) {
    // Exhaustive: {0,1}=-9, {0,-}=-5, {-,1}=-4, {1,0}=-3, {-,0}=-2, {1,-}=-1, {-,-}=0
    const auto best = k_best(from_rows({{-5, -1}, {-2, -4}}), 3);
    ASSERT_EQ(best.size(), 3u);
    EXPECT_DOUBLE_EQ(best[0].total_cost, -9.0);
    EXPECT_DOUBLE_EQ(best[1].total_cost, -5.0);
    EXPECT_DOUBLE_EQ(best[2].total_cost, -4.0);
    EXPECT_EQ(best[1].row_to_col, (std::vector<int>{0, kUnassigned}));
    EXPECT_EQ(best[2].row_to_col, (std::vector<int>{kUnassigned, 1}));
}

TEST(KBest, EnumeratesEveryFeasibleAssignmentOnce) {
    const auto c = from_rows({{-5, -1}, {-2, -4}});
    const auto all = k_best(c, 100);
    EXPECT_EQ(all.size(), 7u);
    expect_same_ranking(all, oracle::brute_force_k_best(c, 100), 1e-12);
}

TEST(KBest, KOneEqualsSolveOptimal) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        const auto c = oracle::random_cost_matrix(rng, 1 + trial % 5, 1 + (trial / 5) % 5, 0.3, -5, 5);
        const auto best = k_best(c, 1);
        ASSERT_EQ(best.size(), 1u);
        const auto opt = solve_optimal(c);
        EXPECT_NEAR(best[0].total_cost, opt.total_cost, 1e-12);
        EXPECT_EQ(best[0].row_to_col, opt.row_to_col);
    }
}

TEST(KBest, MatchesExhaustiveEnumerationOnRandomMatrices) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> rows(1, 4), cols(1, 5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto c = oracle::random_cost_matrix(rng, rows(rng), cols(rng), 0.3, -5, 5);
        const auto got = k_best(c, 10);
        expect_same_ranking(got, oracle::brute_force_k_best(c, 10), 1e-12);
        for (const auto& a : got) expect_valid(c, a);
        for (std::size_t r = 1; r < got.size(); ++r) EXPECT_LE(got[r - 1].total_cost, got[r].total_cost);
    }
}

TEST(KBest, TieBreakOnSmallIntegerEntries) {
    // Entries from {-3,-1,0,2,FORBIDDEN}: plenty of exact ties, including
    // zero-cost pairs that tie with leaving both unassigned.
    std::mt19937_64 rng(99);
    const double values[] = {-3, -1, 0, 2, kForbidden};
    std::uniform_int_distribution<int> pick(0, 4), dim(0, 4);
    for (int trial = 0; trial < 200; ++trial) {
        CostMatrix c(dim(rng), dim(rng));
        for (int i = 0; i < c.rows(); ++i)
            for (int j = 0; j < c.cols(); ++j) c.entries(i, j) = values[pick(rng)];
        const std::size_t k = 1 + static_cast<std::size_t>(trial % 12);
        expect_same_ranking(k_best(c, k), oracle::brute_force_k_best(c, k), 0.0);
    }
}

TEST(KBest, SlackCostsAreRespected) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> v(-2, 2), u(0, 1);
    for (int trial = 0; trial < 60; ++trial) {
        auto c = oracle::random_cost_matrix(rng, 1 + trial % 4, 1 + trial % 3, 0.3, -3, 3);
        c.unassigned_row_cost.resize(c.rows());
        c.unassigned_col_cost.resize(c.cols());
        for (int i = 0; i < c.rows(); ++i) c.unassigned_row_cost[i] = u(rng) < 0.2 ? kForbidden : v(rng);
        for (int j = 0; j < c.cols(); ++j) c.unassigned_col_cost[j] = u(rng) < 0.2 ? kForbidden : v(rng);
        expect_same_ranking(k_best(c, 8), oracle::brute_force_k_best(c, 8), 1e-12);
    }
}

TEST(KBest, RowShiftMovesOnlyAssignmentsUsingThatRow) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> shift(-3, 3);
    for (int trial = 0; trial < 40; ++trial) {
        const auto c = oracle::random_cost_matrix(rng, 3, 4, 0.3, -5, 5);
        auto shifted = c;
        const double s = shift(rng);
        const int row = trial % 3;
        for (int j = 0; j < c.cols(); ++j)
            if (!CostMatrix::forbidden(c.entries(row, j))) shifted.entries(row, j) += s;

        const auto base = oracle::brute_force_k_best(c, 1000);
        const auto moved = k_best(shifted, 1000);
        ASSERT_EQ(base.size(), moved.size());
        for (const auto& a : moved) {
            auto it = std::find_if(base.begin(), base.end(), [&](const Assignment& b) { return b.row_to_col == a.row_to_col; });
            ASSERT_NE(it, base.end());
            const bool uses_row = a.row_to_col[static_cast<std::size_t>(row)] != kUnassigned;
            EXPECT_NEAR(a.total_cost, it->total_cost + (uses_row ? s : 0.0), 1e-12);
        }
        // order preserved among assignments agreeing on whether the row is used
        for (bool uses : {false, true}) {
            std::vector<std::vector<int>> from_base, from_moved;
            for (const auto& a : base)
                if ((a.row_to_col[static_cast<std::size_t>(row)] != kUnassigned) == uses) from_base.push_back(a.row_to_col);
            for (const auto& a : moved)
                if ((a.row_to_col[static_cast<std::size_t>(row)] != kUnassigned) == uses) from_moved.push_back(a.row_to_col);
            EXPECT_EQ(from_base, from_moved);
        }
    }
}

TEST(KBest, FewerFeasibleThanRequested) {
    const auto c = from_rows({{kForbidden, kForbidden}, {-1, kForbidden}});
    const auto best = k_best(c, 10);
    ASSERT_EQ(best.size(), 2u);
    EXPECT_EQ(best[0].row_to_col, (std::vector<int>{kUnassigned, 0}));
    EXPECT_EQ(best[1].row_to_col, (std::vector<int>{kUnassigned, kUnassigned}));
}
