#include <cmath>
#include <gtest/gtest.h>
#include <mtlasso/datagen.hpp>
#include <mtlasso/solver.hpp>
#include <mtlasso/theory.hpp>
#include "test_support.hpp"

using namespace mtlasso;
using mtlasso::testing::Rng;
using mtlasso::testing::random_problem;
using mtlasso::testing::random_sparse_rows;

namespace {

SolverConfig pg_config(double tol = 1e-9)
{
    SolverConfig c;
    c.method = SolverMethod::proximal_gradient;
    c.tol = tol;
    c.max_iters = 200000;
    return c;
}

SolverConfig bcd_config(double tol = 1e-9)
{
    SolverConfig c;
    c.tol = tol;
    return c;
}

} // namespace

TEST(BlockSoftThreshold, Examples)
{
    const Vector v = (Vector(2) << 3, 4).finished();
    EXPECT_TRUE(block_soft_threshold(v, 5).isZero(0));
    EXPECT_TRUE(block_soft_threshold(v, 7).isZero(0));
    EXPECT_EQ(block_soft_threshold(v, 0), v);
    const Vector r = block_soft_threshold(v, 2.5);
    EXPECT_DOUBLE_EQ(r(0), 1.5);
    EXPECT_DOUBLE_EQ(r(1), 2.0);
    EXPECT_THROW(block_soft_threshold(v, -1), DomainError);
}

TEST(RowSubproblem, MatchesOptimalityConditions)
{
    Rng rng(4);
    for (int t = 0; t < 500; ++t) {
        const Index K = rng.integer(1, 5);
        Vector c(K), d(K), u(K);
        for (Index k = 0; k < K; ++k) {
            c(k) = 3 * rng.normal();
            d(k) = rng.uniform(0.05, 4.0);
        }
        const double lam = rng.uniform(0.01, 3.0);
        solve_row_subproblem(c, d, lam, u);
        if (c.norm() <= lam) {
            EXPECT_TRUE(u.isZero(0));
            continue;
        }
        // Stationarity: d_k u_k - c_k + lam u_k / ||u|| = 0.
        const double un = u.norm();
        ASSERT_GT(un, 0.0);
        for (Index k = 0; k < K; ++k) EXPECT_NEAR(d(k) * u(k) - c(k) + lam * u(k) / un, 0.0, 1e-9 * (1 + std::abs(c(k))));
    }
}

TEST(RowSubproblem, EqualCurvatureClosedForm)
{
    const Vector c = (Vector(3) << 1, -2, 2).finished();
    const Vector d = Vector::Constant(3, 2.0);
    Vector u(3);
    solve_row_subproblem(c, d, 1.0, u);
    // (1/d) * block soft threshold of c at lambda.
    const Vector expect = block_soft_threshold(c, 1.0) / 2.0;
    EXPECT_LT((u - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Solve, AboveCriticalLambdaGivesZero)
{
    Rng rng(1);
    const MvmrProblem pr = random_problem(rng, 20, 8, 3, rng.gaussian(8, 3), 0.5);
    const double crit = critical_lambda(pr);
    for (auto method : {SolverMethod::bcd, SolverMethod::proximal_gradient}) {
        SolverConfig cfg;
        cfg.method = method;
        const SolveReport rep = solve(pr, crit * 1.01, cfg);
        EXPECT_TRUE(rep.estimate.values.isZero(0));
        EXPECT_TRUE(rep.converged);
        EXPECT_LE(rep.iterations, 2);
    }
}

TEST(Solve, SingleTaskLassoMethodsAgree)
{
    Rng rng(50);
    const Matrix b_star = random_sparse_rows(rng, 10, 1, 3);
    const MvmrProblem pr = random_problem(rng, 50, 10, 1, b_star, 0.5);
    const double lam = 0.1;
    const SolveReport a = solve(pr, lam, bcd_config(1e-10));
    const SolveReport b = solve(pr, lam, pg_config(1e-10));
    ASSERT_TRUE(a.converged && b.converged);
    EXPECT_LE(std::abs(a.objective_value - b.objective_value), 1e-8 * std::abs(a.objective_value));
}

TEST(Solve, NoiselessLeastSquaresLimit)
{
    Rng rng(51);
    const Matrix b_star = rng.gaussian(6, 2);
    const MvmrProblem pr = random_problem(rng, 60, 6, 2, b_star, 0.0);
    SolverConfig cfg = bcd_config(1e-12);
    const SolveReport rep = solve(pr, 1e-8, cfg);
    EXPECT_LE(block_norm(rep.estimate.values - b_star, inf, 2), 1e-4);
}

TEST(Solve, MethodAgreementProperty)
{
    Rng rng(2024);
    for (int t = 0; t < 60; ++t) {
        const Index p = rng.integer(2, 20), K = rng.integer(1, 4), n = rng.integer(5, 60);
        const Matrix b_star = random_sparse_rows(rng, p, K, rng.integer(1, std::min<Index>(p, 5)));
        const MvmrProblem pr = random_problem(rng, n, p, K, b_star, 0.5);
        const double lam = rng.uniform(0.05, 0.8) * critical_lambda(pr);
        const SolveReport a = solve(pr, lam, bcd_config(1e-9));
        const SolveReport b = solve(pr, lam, pg_config(1e-9));
        ASSERT_TRUE(a.converged) << "instance " << t;
        ASSERT_TRUE(b.converged) << "instance " << t;
        EXPECT_LE(std::abs(a.objective_value - b.objective_value), 1e-6 * (1 + std::abs(a.objective_value)));
        EXPECT_LE(a.final_kkt_residual, 1e-9);
        EXPECT_LE(kkt_residual(pr, b.estimate.values, lam), 1e-9 * 1.0001);
        const auto min_active = [](const Matrix& B) {
            double m = inf;
            for (Index j : support_of(B)) m = std::min(m, B.row(j).norm());
            return m;
        };
        if (min_active(a.estimate.values) > 1e-8 && min_active(b.estimate.values) > 1e-8) {
            EXPECT_EQ(support_of(a.estimate.values), support_of(b.estimate.values));
        }
    }
}

TEST(Solve, MonotoneDescentProperty)
{
    Rng rng(77);
    for (int t = 0; t < 20; ++t) {
        const Index p = rng.integer(5, 30), K = rng.integer(1, 4);
        const MvmrProblem pr = random_problem(rng, 25, p, K, random_sparse_rows(rng, p, K, 3), 0.5);
        SolverConfig cfg = bcd_config(1e-10);
        cfg.record_objective = true;
        cfg.randomized_order = (t % 2 == 1);
        cfg.order_seed = static_cast<std::uint64_t>(t);
        const double lam = 0.2 * critical_lambda(pr);
        const SolveReport rep = solve(pr, lam, cfg);
        ASSERT_GE(rep.objective_trace.size(), 1u);
        double prev = objective(pr, Matrix::Zero(p, K), lam);
        for (double f : rep.objective_trace) {
            EXPECT_GE(prev - f, -1e-12);
            prev = f;
        }
    }
}

TEST(Solve, ConvergedImpliesKktAndExactZeros)
{
    Rng rng(78);
    for (int t = 0; t < 30; ++t) {
        const Index p = rng.integer(5, 40), K = rng.integer(1, 4);
        const MvmrProblem pr = random_problem(rng, 30, p, K, random_sparse_rows(rng, p, K, 4), 0.5);
        const double lam = rng.uniform(0.05, 0.6) * critical_lambda(pr);
        const SolveReport rep = solve(pr, lam, bcd_config(1e-7));
        ASSERT_TRUE(rep.converged);
        EXPECT_LE(kkt_residual(pr, rep.estimate.values, lam), 1e-7);
        EXPECT_NEAR(rep.objective_value, objective(pr, rep.estimate.values, lam), 1e-12);
        for (Index j = 0; j < p; ++j) {
            const double nrm = rep.estimate.values.row(j).norm();
            EXPECT_TRUE(nrm == 0.0 || nrm > 1e-12);
        }
    }
}

TEST(Solve, NonConvergenceIsReported)
{
    Rng rng(79);
    const MvmrProblem pr = random_problem(rng, 30, 20, 2, random_sparse_rows(rng, 20, 2, 5), 0.5);
    SolverConfig cfg = pg_config(1e-14);
    cfg.max_iters = 3;
    cfg.accelerate = false;
    const SolveReport rep = solve(pr, 0.01, cfg);
    EXPECT_FALSE(rep.converged);
    EXPECT_EQ(rep.iterations, 3);
    EXPECT_GT(rep.final_kkt_residual, cfg.tol);
}

TEST(Solve, FixedStepAndUnacceleratedVariants)
{
    Rng rng(80);
    const MvmrProblem pr = random_problem(rng, 40, 10, 3, random_sparse_rows(rng, 10, 3, 3), 0.3);
    const double lam = 0.1;
    const SolveReport ref = solve(pr, lam, bcd_config(1e-10));
    SolverConfig plain = pg_config(1e-9);
    plain.accelerate = false;
    const SolveReport a = solve(pr, lam, plain);
    ASSERT_TRUE(a.converged);
    EXPECT_NEAR(a.objective_value, ref.objective_value, 1e-8);
    double L = 0.0;
    for (Index k = 0; k < pr.num_tasks(); ++k) L = std::max(L, detail::gram_spectral_norm(pr.design(k)));
    SolverConfig fixed = pg_config(1e-9);
    fixed.step_rule.fixed = 0.5 / L;
    const SolveReport b = solve(pr, lam, fixed);
    ASSERT_TRUE(b.converged);
    EXPECT_NEAR(b.objective_value, ref.objective_value, 1e-8);
}

TEST(Solve, InputValidation)
{
    Rng rng(81);
    const MvmrProblem pr = random_problem(rng, 10, 4, 2, rng.gaussian(4, 2), 0.1);
    EXPECT_THROW(solve(pr, 0.0), DomainError);
    EXPECT_THROW(solve(pr, -1.0), DomainError);
    SolverConfig bad;
    bad.tol = 0.0;
    EXPECT_THROW(solve(pr, 0.1, bad), ConfigError);
    bad = SolverConfig{};
    bad.max_iters = 0;
    EXPECT_THROW(solve(pr, 0.1, bad), ConfigError);
    EXPECT_THROW(solve(pr, 0.1, {}, Matrix::Zero(3, 2)), DimensionError);
}

TEST(Solve, WarmStartReachesSameOptimum)
{
    Rng rng(82);
    const MvmrProblem pr = random_problem(rng, 30, 12, 2, random_sparse_rows(rng, 12, 2, 3), 0.5);
    const double lam = 0.15;
    const SolveReport cold = solve(pr, lam, bcd_config(1e-10));
    const SolveReport warm = solve(pr, lam, bcd_config(1e-10), Matrix(rng.gaussian(12, 2)));
    EXPECT_NEAR(cold.objective_value, warm.objective_value, 1e-9);
}

TEST(SolveRestricted, PinsOffSupportRows)
{
    Rng rng(83);
    const MvmrProblem pr = random_problem(rng, 40, 10, 2, random_sparse_rows(rng, 10, 2, 3), 0.3);
    const IndexSet S{1, 4, 7};
    const SolveReport rep = solve_restricted(pr, S, 0.05, bcd_config(1e-10));
    EXPECT_TRUE(rep.converged);
    for (Index j : complement(S, 10)) EXPECT_EQ(rep.estimate.values.row(j).norm(), 0.0);
    const SolveReport empty = solve_restricted(pr, {}, 0.05);
    EXPECT_TRUE(empty.estimate.values.isZero(0));
}

TEST(DualWitness, StrictFeasibilityImpliesUniqueRecovery)
{
    // Noiseless, identity covariance, n well above the achievability threshold.
    const GroundTruth truth = build_truth({CoefficientKind::identical_uniform, SupportRule::stride_8}, 64, 2);
    const auto cs = build_covariance({CovarianceKind::identity}, 64, 2);
    Rng rng(84);
    int feasible = 0;
    for (int t = 0; t < 10; ++t) {
        const MvmrProblem pr = sample_problem(truth, cs, NoiseSpec::uniform(2, 0.0), 400, 1000 + t);
        const double lam = lambda_rule(64, truth.sparsity(), 400);
        const SolveReport restricted = solve_restricted(pr, truth.support_union, lam, bcd_config(1e-11));
        const WitnessReport w = dual_witness(pr, restricted.estimate.values, truth, lam);
        EXPECT_EQ(w.z_sc_row_norms.size(), 64 - truth.sparsity());
        if (!w.strict_feasible) continue;
        ++feasible;
        // Full problem solutions from random starts coincide with the restricted one.
        for (int r = 0; r < 5; ++r) {
            const SolveReport full = solve(pr, lam, bcd_config(1e-11), Matrix(rng.gaussian(64, 2)));
            ASSERT_TRUE(full.converged);
            EXPECT_LE(block_norm(full.estimate.values - restricted.estimate.values, inf, 2), 1e-5);
            EXPECT_EQ(support_of(full.estimate.values), truth.support_union);
        }
    }
    EXPECT_GE(feasible, 8);
}

TEST(DualWitness, AgreesWithKktSubgradient)
{
    // The witness on S^c equals -G_{S^c}/lambda at the restricted solution.
    Rng rng(85);
    const Matrix b_star = random_sparse_rows(rng, 15, 3, 4);
    const GroundTruth truth = make_ground_truth(b_star);
    const MvmrProblem pr = random_problem(rng, 50, 15, 3, b_star, 0.4);
    const double lam = 0.2;
    const SolveReport rest = solve_restricted(pr, truth.support_union, lam, bcd_config(1e-12));
    const WitnessReport w = dual_witness(pr, rest.estimate.values, truth, lam);
    const Matrix G = loss_gradient(pr, rest.estimate.values);
    const IndexSet Sc = complement(truth.support_union, 15);
    for (std::size_t i = 0; i < Sc.size(); ++i) {
        EXPECT_NEAR(w.z_sc_row_norms(static_cast<Index>(i)), G.row(Sc[i]).norm() / lam, 1e-8);
    }
    // On S the subgradient has unit rows wherever the estimate is nonzero.
    for (Index i = 0; i < w.z_support.rows(); ++i) {
        if (rest.estimate.values.row(truth.support_union[static_cast<std::size_t>(i)]).norm() > 0) {
            EXPECT_NEAR(w.z_support.row(i).norm(), 1.0, 1e-8);
        }
    }
}

TEST(DualWitness, EmptySupportAndErrors)
{
    Rng rng(86);
    const MvmrProblem pr = random_problem(rng, 20, 6, 2, Matrix::Zero(6, 2), 1.0);
    const GroundTruth empty = make_ground_truth(Matrix::Zero(6, 2));
    const WitnessReport w = dual_witness(pr, Matrix::Zero(6, 2), empty, 1e6);
    EXPECT_TRUE(w.strict_feasible);
    EXPECT_EQ(w.z_sc_row_norms.size(), 6);

    const GroundTruth wide = make_ground_truth(Matrix::Ones(6, 2));
    const MvmrProblem few = random_problem(rng, 4, 6, 2, Matrix::Ones(6, 2), 0.0);
    EXPECT_THROW(dual_witness(few, Matrix::Zero(6, 2), wide, 1.0), SingularityError);
}
