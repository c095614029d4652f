#include "sprl/solvers.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace sprl;

namespace {

Matrix gaussian(Index n, Index k, Rng& rng)
{
    std::normal_distribution<double> N(0.0, 1.0);
    Matrix M(n, k);
    for (Index j = 0; j < k; ++j)
        for (Index i = 0; i < n; ++i) M(i, j) = N(rng);
    return M;
}

FeatureData synthetic_data(Index n, Index k, double gamma, bool doubled, Rng& rng)
{
    FeatureData d;
    d.Phi = gaussian(n, k, rng);
    d.PhiNext = gaussian(n, k, rng);
    if (doubled) d.PhiNext2 = gaussian(n, k, rng);
    d.R = gaussian(n, 1, rng).col(0);
    d.gamma = gamma;
    d.scales = Vector::Ones(k);
    d.zero_column.assign(static_cast<std::size_t>(k), false);
    return d;
}

RegularizedSolveConfig no_ridge()
{
    RegularizedSolveConfig c;
    c.eta = 0.0;
    return c;
}

} // namespace

TEST(Omp, RecoversSparseCombinationOfOrthonormalColumns)
{
    Rng rng(1);
    const Matrix Q = Eigen::HouseholderQR<Matrix>(gaussian(30, 30, rng)).householderQ();
    const Matrix X = Q.leftCols(12);
    const Vector y = 3.0 * X.col(4) - 2.0 * X.col(9) + 0.5 * X.col(0);
    const SolverResult r = omp(X, y, 0.0, no_ridge());
    ASSERT_EQ(r.active.size(), 3u);
    // orthonormal columns: order by coefficient magnitude
    EXPECT_EQ(r.active[0], 4);
    EXPECT_EQ(r.active[1], 9);
    EXPECT_EQ(r.active[2], 0);
    EXPECT_NEAR(r.w(4), 3.0, 1e-12);
    EXPECT_NEAR(r.w(9), -2.0, 1e-12);
    EXPECT_NEAR(r.w(0), 0.5, 1e-12);
    EXPECT_EQ(r.stop, StopReason::threshold);
}

TEST(Omp, TiesGoToLowestIndex)
{
    Matrix X = Matrix::Identity(4, 4);
    Vector y(4);
    y << 0.0, 2.0, -2.0, 1.0;
    const SolverResult r = omp(X, y, 0.0, no_ridge());
    ASSERT_GE(r.active.size(), 2u);
    EXPECT_EQ(r.active[0], 1);
    EXPECT_EQ(r.active[1], 2);
}

TEST(Omp, BetaAboveInitialCorrelationSelectsNothing)
{
    Rng rng(2);
    const Matrix X = gaussian(40, 10, rng);
    const Vector y = gaussian(40, 1, rng).col(0);
    const double c0 = (X.transpose() * y).cwiseAbs().maxCoeff() / 40.0;
    const SolverResult r = omp(X, y, c0 * 1.0001);
    EXPECT_TRUE(r.active.empty());
    EXPECT_TRUE(r.w.isZero());
    EXPECT_NEAR(r.final_correlation, c0, 1e-15);
}

TEST(Omp, ResidualNormDecreases)
{
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const Matrix X = gaussian(50, 80, rng);
        const Vector y = gaussian(50, 1, rng).col(0);
        const GreedyPath p = omp_path(X, y, 0.0, no_ridge());
        double prev = p.initial_residual_norm;
        for (const auto& s : p.steps) {
            EXPECT_LE(s.residual_norm, prev * (1 + 1e-12));
            prev = s.residual_norm;
        }
    }
}

TEST(Omp, IncrementalWeightsMatchDirectSolve)
{
    Rng rng(4);
    const Matrix X = gaussian(60, 40, rng);
    const Vector y = gaussian(60, 1, rng).col(0);
    for (double eta : {0.0, 0.01}) {
        RegularizedSolveConfig c;
        c.eta = eta;
        c.max_iterations = 15;
        const SolverResult r = omp(X, y, 0.0, c);
        ASSERT_EQ(r.active.size(), 15u);
        const Vector direct = least_squares(X, y, r.active, eta);
        for (std::size_t i = 0; i < r.active.size(); ++i)
            EXPECT_NEAR(r.w(r.active[i]), direct(static_cast<Index>(i)), 1e-10);
        EXPECT_EQ(r.stop, StopReason::iteration_cap);
    }
}

TEST(Omp, TruncationMatchesDirectRun)
{
    Rng rng(5);
    const Matrix X = gaussian(80, 60, rng);
    const Vector y = gaussian(80, 1, rng).col(0);
    const GreedyPath p = omp_path(X, y, 1e-3);
    for (double beta : {0.5, 0.2, 0.1, 0.05, 1e-2, 1e-3}) {
        const SolverResult a = truncate(p, beta);
        const SolverResult b = omp(X, y, beta);
        EXPECT_EQ(a.active, b.active) << beta;
        EXPECT_LT((a.w - b.w).norm(), 1e-12) << beta;
    }
    EXPECT_THROW(truncate(p, 1e-4), std::invalid_argument);
}

TEST(LeastSquares, RankDeficiencyAtZeroRidge)
{
    Matrix X(5, 2);
    X.col(0) = Vector::LinSpaced(5, 1.0, 5.0);
    X.col(1) = 2.0 * X.col(0);
    const Vector y = Vector::Ones(5);
    EXPECT_THROW(least_squares(X, y, {0, 1}, 0.0), DegenerateSystemError);
    EXPECT_NO_THROW(least_squares(X, y, {0, 1}, 0.1));
    EXPECT_THROW(least_squares(X, y, {0, 0}, 0.1), std::invalid_argument);
    EXPECT_THROW(least_squares(X, y, {}, 0.1), std::invalid_argument);
}

TEST(Lstd, FixedPointOrthogonality)
{
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        const FeatureData d = synthetic_data(100, 12, 0.9, false, rng);
        std::vector<Index> cols{0, 2, 3, 7, 11};
        const Vector w = lstd_solve(d, cols, 0.0);
        const Matrix P = detail::gather(d.Phi, cols);
        const Matrix Pn = detail::gather(d.PhiNext, cols);
        EXPECT_LT((P.transpose() * (d.R + d.gamma * Pn * w - P * w)).norm(), 1e-8);
    }
}

TEST(Brm, SingleSampleIsLeastSquaresOnBellmanDesign)
{
    Rng rng(7);
    const FeatureData d = synthetic_data(90, 10, 0.8, false, rng);
    const std::vector<Index> cols{1, 4, 5};
    const Matrix X = detail::gather(d.Phi - 0.8 * d.PhiNext, cols);
    // normal-equations oracle
    const Vector oracle = (X.transpose() * X).ldlt().solve(X.transpose() * d.R);
    EXPECT_LT((brm_solve(d, cols, false, 0.0) - oracle).norm(), 1e-10);
}

TEST(Brm, DoubledSolveSatisfiesSymmetrizedSystem)
{
    Rng rng(8);
    const FeatureData d = synthetic_data(120, 9, 0.9, true, rng);
    const std::vector<Index> cols{0, 3, 8};
    const double eta = 0.01;
    const Vector w = brm_solve(d, cols, true, eta);
    const Matrix P = detail::gather(d.Phi, cols);
    const Matrix X1 = P - 0.9 * detail::gather(*d.PhiNext2, cols);
    const Matrix X2 = P - 0.9 * detail::gather(d.PhiNext, cols);
    const Matrix A = 0.5 * (X1.transpose() * X2 + X2.transpose() * X1) + 120.0 * eta * Matrix::Identity(3, 3);
    EXPECT_LT((A * w - 0.5 * (X1 + X2).transpose() * d.R).norm(), 1e-10);

    FeatureData single = d;
    single.PhiNext2.reset();
    EXPECT_THROW(brm_solve(single, cols, true, eta), std::invalid_argument);
    EXPECT_THROW(omp_brm(single, 0.0, true), std::invalid_argument);
}

TEST(OmpTd, CounterexampleFirstSelectionLeavesOpt)
{
    const DiscreteMrp m = make_counterexample_chain(0.9);
    const FeatureData d = exact_feature_data(m, Matrix::Identity(5, 5));
    const SolverResult r = omp_td(d, 0.0, no_ridge());
    ASSERT_FALSE(r.active.empty());
    EXPECT_EQ(r.active[0], 0);
    // it still reaches V* exactly, but only with a support larger than opt
    EXPECT_GT(r.active.size(), 3u);
    EXPECT_LT((r.w - exact_values(m).values).norm(), 1e-10);
}

TEST(OmpTd, WeightsAreLstdOnActiveSet)
{
    Rng rng(9);
    const FeatureData d = synthetic_data(150, 30, 0.95, false, rng);
    RegularizedSolveConfig c;
    c.eta = 0.02;
    c.max_iterations = 10;
    const SolverResult r = omp_td(d, 0.0, c);
    const Vector direct = lstd_solve(d, r.active, 0.02);
    for (std::size_t i = 0; i < r.active.size(); ++i) EXPECT_NEAR(r.w(r.active[i]), direct(static_cast<Index>(i)), 1e-9);
}

TEST(Greedy, StoppingContract)
{
    Rng rng(10);
    for (int t = 0; t < 10; ++t) {
        const FeatureData d = synthetic_data(100, 40, 0.9, true, rng);
        for (double beta : {0.3, 0.1, 0.03}) {
            const SolverResult td = omp_td(d, beta);
            if (td.stop == StopReason::threshold) {
                Vector c = td_correlations(d, td.w);
                for (Index i : td.active) c(i) = 0.0;
                EXPECT_LE(c.maxCoeff(), beta + 1e-9);
            }
            for (bool dbl : {false, true}) {
                const SolverResult brm = omp_brm(d, beta, dbl);
                if (brm.stop != StopReason::threshold) continue;
                Vector c = brm_correlations(d, brm.w, dbl);
                for (Index i : brm.active) c(i) = 0.0;
                EXPECT_LE(c.maxCoeff(), beta + 1e-9);
            }
        }
    }
}

TEST(Greedy, ZeroColumnsNeverSelected)
{
    Rng rng(11);
    FeatureData d = synthetic_data(30, 6, 0.5, false, rng);
    d.Phi.col(2).setZero();
    d.PhiNext.col(2) = Vector::Ones(30); // would correlate if allowed
    d.zero_column[2] = true;
    const SolverResult r = omp_brm(d, 0.0, false, no_ridge());
    EXPECT_EQ(std::count(r.active.begin(), r.active.end(), 2), 0);
}

TEST(Greedy, DegenerateStepReportedOnTruncate)
{
    // feature 1 is its own successor at gamma = 1, so its LSTD pivot is zero
    FeatureData d;
    d.Phi = Matrix::Zero(4, 2);
    d.Phi.col(0) << 1.0, 0.0, 0.0, 0.0;
    d.Phi.col(1) << 0.0, 1.0, 0.0, 0.0;
    d.PhiNext = Matrix::Zero(4, 2);
    d.PhiNext.col(1) = d.Phi.col(1);
    d.R = Vector(4);
    d.R << 1.0, 1.0, 0.0, 0.0;
    d.gamma = 1.0;
    d.scales = Vector::Ones(2);
    d.zero_column = {false, false};
    const GreedyPath p = omp_td_path(d, 0.0, no_ridge());
    ASSERT_EQ(p.stop, StopReason::degenerate);
    EXPECT_THROW(truncate(p, 0.0), DegenerateSystemError);
    EXPECT_NO_THROW(truncate(p, p.final_correlation));
}

TEST(Greedy, ZeroDiscountReducesToOmp)
{
    Rng rng(12);
    for (int t = 0; t < 10; ++t) {
        FeatureData d = synthetic_data(70, 25, 0.0, false, rng);
        const SolverResult base = omp(d.Phi, d.R, 0.01);
        EXPECT_EQ(omp_brm(d, 0.01, false).active, base.active);
        EXPECT_EQ(omp_td(d, 0.01).active, base.active);
    }
}

TEST(Lasso, KktConditionsHold)
{
    Rng rng(13);
    const FeatureData d = synthetic_data(200, 50, 0.9, false, rng);
    const Matrix X = d.Phi - 0.9 * d.PhiNext;
    const double c0 = (X.transpose() * d.R).cwiseAbs().maxCoeff() / 200.0;
    std::vector<double> grid;
    for (int i = 0; i < 8; ++i) grid.push_back(2.0 * c0 * std::pow(0.5, i));
    const double eta = 0.01;
    const auto res = lasso_brm(d, grid, eta);
    ASSERT_EQ(res.size(), grid.size());
    // at the top of the grid the zero vector is optimal
    EXPECT_TRUE(res[0].w.isZero());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        ASSERT_EQ(res[g].stop, StopReason::converged);
        const Vector grad = X.transpose() * (d.R - X * res[g].w) / 200.0;
        for (Index i = 0; i < 50; ++i) {
            const double wi = res[g].w(i);
            if (wi != 0.0)
                EXPECT_NEAR(grad(i), 0.5 * grid[g] * (wi > 0 ? 1.0 : -1.0) + eta * wi, 1e-6);
            else
                EXPECT_LE(std::abs(grad(i)), 0.5 * grid[g] + 1e-6);
        }
    }
    EXPECT_THROW(lasso_brm(d, {0.1, 0.2}, eta), std::invalid_argument);
}

TEST(StopReasons, Names)
{
    EXPECT_EQ(to_string(StopReason::threshold), "threshold");
    EXPECT_EQ(to_string(StopReason::degenerate), "degenerate");
    EXPECT_EQ(to_string(StopReason::not_converged), "not_converged");
}
