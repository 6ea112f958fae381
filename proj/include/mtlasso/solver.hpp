#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>
#include <mtlasso/model.hpp>

namespace mtlasso {

enum class SolverMethod { bcd, proximal_gradient };

struct StepRule
{
    /// Unset means step = 1/L with L = max_k lambda_max(X^(k)^T X^(k) / n).
    std::optional<double> fixed;
};

struct SolverConfig
{
    double tol = 1e-6;  ///< KKT residual target
    int max_iters = 10000;
    SolverMethod method = SolverMethod::bcd;
    StepRule step_rule{};
    /// Proximal gradient only: Nesterov momentum with adaptive restart.
    bool accelerate = true;
    /// BCD only: shuffle the row order of every full sweep.
    bool randomized_order = false;
    std::uint64_t order_seed = 0;
    /// Record the objective after every iteration (costs one objective evaluation each).
    bool record_objective = false;
};

struct SolveReport
{
    CoefficientMatrix estimate;
    int iterations = 0;
    double final_kkt_residual = 0.0;
    double objective_value = 0.0;
    bool converged = false;
    std::vector<double> objective_trace;
};

/// Proximal operator of threshold * ||.||_2: max(0, 1 - threshold/||v||) v.
inline Vector block_soft_threshold(const Eigen::Ref<const Vector>& v, double threshold)
{
    if (!(threshold >= 0.0)) throw DomainError("block_soft_threshold: threshold must be >= 0");
    const double nv = v.norm();
    if (nv <= threshold) return Vector::Zero(v.size());
    return (1.0 - threshold / nv) * v;
}

/**
 * Minimizes sum_k [d_k u_k^2 / 2 - c_k u_k] + lambda ||u||_2 over u in R^K.
 *
 * u = 0 iff ||c|| <= lambda. Otherwise u_k = c_k t / (d_k t + lambda) where
 * t = ||u|| is the unique root of sum_k c_k^2 / (d_k t + lambda)^2 = 1 in
 * [(||c|| - lambda)/d_max, (||c|| - lambda)/d_min]. The left side is convex
 * and decreasing in t, so Newton from the left end converges monotonically;
 * bisection guards against round-off leaving the bracket.
 */
inline void solve_row_subproblem(const Eigen::Ref<const Vector>& c, const Eigen::Ref<const Vector>& d,
                                 double lambda, Eigen::Ref<Vector> u)
{
    const double nc = c.norm();
    if (nc <= lambda) {
        u.setZero();
        return;
    }
    double d_min = inf;
    double d_max = 0.0;
    for (Index k = 0; k < c.size(); ++k) {
        if (d(k) <= 0.0) {
            if (c(k) != 0.0) throw DataError("row subproblem: zero curvature with nonzero gradient");
            continue;
        }
        d_min = std::min(d_min, d(k));
        d_max = std::max(d_max, d(k));
    }
    double t;
    if (d_max - d_min <= 1e-15 * d_max) {
        t = (nc - lambda) / d_max;
    } else {
        double lo = (nc - lambda) / d_max;
        double hi = (nc - lambda) / d_min;
        t = lo;
        for (int it = 0; it < 200; ++it) {
            double phi = -1.0;
            double dphi = 0.0;
            for (Index k = 0; k < c.size(); ++k) {
                const double den = d(k) * t + lambda;
                const double q = c(k) * c(k) / (den * den);
                phi += q;
                dphi -= 2.0 * q * d(k) / den;
            }
            if (phi > 0.0) {
                lo = t;
            } else {
                hi = t;
            }
            double next = (dphi < 0.0) ? t - phi / dphi : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            const double step = std::abs(next - t);
            t = next;
            if (step <= 1e-12 * t || hi - lo <= 1e-14 * hi) break;
        }
    }
    for (Index k = 0; k < c.size(); ++k) u(k) = c(k) * t / (d(k) * t + lambda);
}

namespace detail {

inline void check_solver_inputs(const MvmrProblem& problem, double lambda, const SolverConfig& config)
{
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("solve: lambda must be positive");
    if (!(config.tol > 0.0)) throw ConfigError("solve: tol must be positive");
    if (config.max_iters < 1) throw ConfigError("solve: max_iters must be >= 1");
    (void)problem;
}

inline Matrix initial_coefficients(const MvmrProblem& problem, const std::optional<Matrix>& initial)
{
    if (!initial) return Matrix::Zero(problem.dim(), problem.num_tasks());
    check_coefficients(problem, *initial);
    if (!initial->allFinite()) throw DataError("solve: non-finite initial coefficients");
    return *initial;
}

inline SolveReport finish_report(const MvmrProblem& problem, Matrix B, double lambda, int iterations,
                                 const SolverConfig& config, std::vector<double> trace)
{
    SolveReport rep;
    rep.final_kkt_residual = kkt_residual(problem, B, lambda);
    rep.objective_value = objective(problem, B, lambda);
    rep.converged = rep.final_kkt_residual <= config.tol;
    rep.iterations = iterations;
    rep.estimate = CoefficientMatrix{std::move(B), Role::estimate};
    rep.objective_trace = std::move(trace);
    return rep;
}

/**
 * Cyclic block coordinate descent on the naive (residual) form.
 *
 * Every outer pass is one full sweep over all rows followed by an exact KKT
 * check; between checks, sweeps are restricted to the current nonzero rows
 * until the largest curvature-weighted row change drops below an inner
 * tolerance. Each sweep (full or restricted) counts as one iteration.
 */
inline SolveReport solve_bcd(const MvmrProblem& problem, double lambda, const SolverConfig& config,
                             Matrix B)
{
    const Index n = problem.samples();
    const Index p = problem.dim();
    const Index K = problem.num_tasks();
    const double inv_n = 1.0 / static_cast<double>(n);

    Matrix curv(p, K);
    for (Index k = 0; k < K; ++k) {
        curv.col(k) = problem.design(k).colwise().squaredNorm().transpose() * inv_n;
    }
    std::vector<Vector> r = residuals(problem, B);

    Vector c(K), u(K), dj(K);
    auto update_row = [&](Index j) {
        for (Index k = 0; k < K; ++k) {
            c(k) = problem.design(k).col(j).dot(r[static_cast<std::size_t>(k)]) * inv_n +
                   curv(j, k) * B(j, k);
        }
        dj = curv.row(j).transpose();
        solve_row_subproblem(c, dj, lambda, u);
        double change = 0.0;
        for (Index k = 0; k < K; ++k) {
            const double delta = u(k) - B(j, k);
            if (delta != 0.0) {
                r[static_cast<std::size_t>(k)].noalias() -= delta * problem.design(k).col(j);
                change = std::max(change, curv(j, k) * std::abs(delta));
            }
            B(j, k) = u(k);
        }
        return change;
    };

    std::vector<Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 shuffle_rng(config.order_seed);

    std::vector<double> trace;
    auto record = [&] {
        if (config.record_objective) trace.push_back(objective(problem, B, lambda));
    };

    double inner_tol = 0.1 * config.tol;
    int iters = 0;
    while (iters < config.max_iters) {
        if (config.randomized_order) std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (Index j : order) update_row(j);
        ++iters;
        record();

        // Exact residual refresh, then KKT on every row.
        r = residuals(problem, B);
        Matrix G(p, K);
        for (Index k = 0; k < K; ++k) {
            G.col(k) = -(problem.design(k).transpose() * r[static_cast<std::size_t>(k)]) * inv_n;
        }
        if (kkt_residual_from_gradient(G, B, lambda) <= config.tol) break;

        std::vector<Index> active;
        for (Index j = 0; j < p; ++j) {
            if (B.row(j).squaredNorm() > 0.0) active.push_back(j);
        }
        bool inactive_violation = false;
        for (Index j = 0; j < p && !inactive_violation; ++j) {
            if (B.row(j).squaredNorm() == 0.0 && G.row(j).norm() - lambda > config.tol) {
                inactive_violation = true;
            }
        }
        if (!inactive_violation) inner_tol *= 0.1;

        while (iters < config.max_iters && !active.empty()) {
            double change = 0.0;
            for (Index j : active) change = std::max(change, update_row(j));
            ++iters;
            record();
            if (change <= inner_tol) break;
        }
    }
    return finish_report(problem, std::move(B), lambda, iters, config, std::move(trace));
}

/// Largest eigenvalue of X^T X / n, computed on the smaller Gram matrix.
inline double gram_spectral_norm(const Matrix& X)
{
    const double inv_n = 1.0 / static_cast<double>(X.rows());
    Matrix gram = (X.cols() <= X.rows()) ? Matrix(X.transpose() * X) : Matrix(X * X.transpose());
    gram *= inv_n;
    return Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

/// Proximal gradient (ISTA, or FISTA with gradient restart) on per-task Gram matrices.
inline SolveReport solve_proximal_gradient(const MvmrProblem& problem, double lambda,
                                           const SolverConfig& config, Matrix B)
{
    const Index p = problem.dim();
    const Index K = problem.num_tasks();
    const double inv_n = 1.0 / static_cast<double>(problem.samples());

    std::vector<Matrix> gram;
    Matrix xty(p, K);
    double lipschitz = 0.0;
    for (Index k = 0; k < K; ++k) {
        const Matrix& X = problem.design(k);
        gram.push_back(X.transpose() * X * inv_n);
        xty.col(k) = X.transpose() * problem.response(k) * inv_n;
        lipschitz = std::max(lipschitz, gram_spectral_norm(X));
    }
    double step;
    if (config.step_rule.fixed) {
        step = *config.step_rule.fixed;
        if (!(step > 0.0)) throw ConfigError("solve: fixed step must be positive");
    } else {
        if (!(lipschitz > 0.0)) {
            // All designs are zero: B = 0 is optimal for any lambda > 0.
            return finish_report(problem, Matrix::Zero(p, K), lambda, 1, config, {});
        }
        step = 1.0 / lipschitz;
    }

    auto gradient = [&](const Matrix& M) {
        Matrix G(p, K);
        for (Index k = 0; k < K; ++k) G.col(k) = gram[static_cast<std::size_t>(k)] * M.col(k) - xty.col(k);
        return G;
    };
    auto prox = [&](const Matrix& V) {
        Matrix out(p, K);
        for (Index j = 0; j < p; ++j) out.row(j) = block_soft_threshold(V.row(j).transpose(), lambda * step).transpose();
        return out;
    };

    std::vector<double> trace;
    Matrix x = std::move(B);
    Matrix x_prev = x;
    double momentum = 1.0;
    int iters = 0;
    while (iters < config.max_iters) {
        Matrix y = x;
        double next_momentum = 1.0;
        if (config.accelerate) {
            next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
            y = x + ((momentum - 1.0) / next_momentum) * (x - x_prev);
        }
        Matrix x_new = prox(y - step * gradient(y));
        ++iters;
        if (config.accelerate && ((y - x_new).cwiseProduct(x_new - x)).sum() > 0.0) {
            next_momentum = 1.0; // restart
        }
        x_prev = std::move(x);
        x = std::move(x_new);
        momentum = next_momentum;
        if (config.record_objective) trace.push_back(objective(problem, x, lambda));
        if (iters <= 2 || iters % 10 == 0 || iters == config.max_iters) {
            if (kkt_residual_from_gradient(gradient(x), x, lambda) <= config.tol) break;
        }
    }
    return finish_report(problem, std::move(x), lambda, iters, config, std::move(trace));
}

} // namespace detail

/**
 * Solves min_B (1/2n) sum_k ||Y^(k) - X^(k) beta^(k)||^2 + lambda ||B||_{l1/l2}.
 *
 * Converges when the KKT residual reaches config.tol; hitting max_iters is
 * reported through SolveReport::converged, not thrown. Inactive rows of the
 * estimate are exactly zero. Starts from `initial` when given, else from 0.
 */
inline SolveReport solve(const MvmrProblem& problem, double lambda, const SolverConfig& config = {},
                         const std::optional<Matrix>& initial = std::nullopt)
{
    detail::check_solver_inputs(problem, lambda, config);
    Matrix B = detail::initial_coefficients(problem, initial);
    if (config.method == SolverMethod::bcd) return detail::solve_bcd(problem, lambda, config, std::move(B));
    return detail::solve_proximal_gradient(problem, lambda, config, std::move(B));
}

/// Problem with design columns restricted to `rows` (same responses).
inline MvmrProblem restrict_columns(const MvmrProblem& problem, const IndexSet& rows)
{
    std::vector<Matrix> designs;
    for (Index k = 0; k < problem.num_tasks(); ++k) {
        designs.push_back(problem.design(k)(Eigen::all, rows));
    }
    return MvmrProblem(std::move(designs), problem.responses());
}

/// Solves the problem with rows outside `support` pinned to zero; returns a full p x K report.
inline SolveReport solve_restricted(const MvmrProblem& problem, const IndexSet& support, double lambda,
                                    const SolverConfig& config = {})
{
    const Index p = problem.dim();
    const Index K = problem.num_tasks();
    Matrix full = Matrix::Zero(p, K);
    int iterations = 0;
    if (!support.empty()) {
        const MvmrProblem sub = restrict_columns(problem, support);
        const SolveReport rep = solve(sub, lambda, config);
        full(support, Eigen::all) = rep.estimate.values;
        iterations = rep.iterations;
    }
    SolveReport out;
    out.iterations = iterations;
    // Optimality of the restricted problem: KKT over the support rows only.
    const Matrix G = loss_gradient(problem, full);
    out.final_kkt_residual = support.empty()
                                 ? 0.0
                                 : kkt_residual_from_gradient(G(support, Eigen::all), full(support, Eigen::all), lambda);
    out.objective_value = objective(problem, full, lambda);
    out.converged = out.final_kkt_residual <= config.tol;
    out.estimate = CoefficientMatrix{std::move(full), Role::estimate};
    return out;
}

struct WitnessReport
{
    Vector z_sc_row_norms; ///< one entry per j in S^c, in increasing j
    IndexSet off_support;  ///< S^c
    Matrix z_support;      ///< s x K subgradient on S from the restricted KKT
    double max_row_norm = 0.0;
    bool strict_feasible = false;
};

/**
 * Dual witness on S^c built from the restricted solution on S = truth.support_union:
 *
 *   Z_{S^c k} = -(1/(lambda n)) X_{S^c}^T (Pi_S - I) W + (1/n) X_{S^c}^T X_S Sigmahat_SS^{-1} Z_{S k}
 *
 * with Sigmahat_SS = X_S^T X_S / n and Pi_S = X_S Sigmahat_SS^{-1} X_S^T / n.
 * Z_{S k} = X_S^T (Y - X_S betahat_S) / (lambda n) is the restricted subgradient.
 * Since X_S beta*_S lies in the range of Pi_S, (Pi_S - I) W = (Pi_S - I) Y, so
 * the noise never has to be known. strict_feasible is max row norm < 1.
 */
inline WitnessReport dual_witness(const MvmrProblem& problem, const Matrix& estimate, const GroundTruth& truth,
                                  double lambda)
{
    detail::check_coefficients(problem, estimate);
    if (!(lambda > 0.0)) throw DomainError("dual_witness: lambda must be positive");
    if (truth.dim() != problem.dim() || truth.num_tasks() != problem.num_tasks()) {
        throw DimensionError("dual_witness: truth shape does not match problem");
    }
    const Index n = problem.samples();
    const Index K = problem.num_tasks();
    const double dn = static_cast<double>(n);
    const IndexSet& S = truth.support_union;
    const IndexSet Sc = complement(S, problem.dim());
    const Index s = static_cast<Index>(S.size());
    if (s > 0 && n < s) {
        throw SingularityError("dual_witness: n < s, sample covariance on S is singular");
    }

    WitnessReport rep;
    rep.off_support = Sc;
    rep.z_support = Matrix::Zero(s, K);
    Matrix z_sc(static_cast<Index>(Sc.size()), K);
    for (Index k = 0; k < K; ++k) {
        const Matrix& X = problem.design(k);
        const Vector& y = problem.response(k);
        const Matrix X_sc = X(Eigen::all, Sc);
        if (s == 0) {
            z_sc.col(k) = X_sc.transpose() * y / (lambda * dn);
            continue;
        }
        const Matrix X_s = X(Eigen::all, S);
        const Matrix sigma_ss = X_s.transpose() * X_s / dn;
        Eigen::LLT<Matrix> llt(sigma_ss);
        const Vector ldiag = Matrix(llt.matrixL()).diagonal();
        if (llt.info() != Eigen::Success || !(ldiag.minCoeff() > 1e-10 * ldiag.maxCoeff())) {
            throw SingularityError("dual_witness: sample covariance on S is singular for task " +
                                   std::to_string(k));
        }
        const Vector beta_s = estimate(S, k);
        const Vector z_s = X_s.transpose() * (y - X_s * beta_s) / (lambda * dn);
        rep.z_support.col(k) = z_s;
        const Vector proj_minus_id = X_s * llt.solve(X_s.transpose() * y / dn) - y;
        z_sc.col(k) = -(X_sc.transpose() * proj_minus_id) / (lambda * dn) +
                      X_sc.transpose() * (X_s * llt.solve(z_s)) / dn;
    }
    rep.z_sc_row_norms = z_sc.rowwise().norm();
    rep.max_row_norm = Sc.empty() ? 0.0 : rep.z_sc_row_norms.maxCoeff();
    rep.strict_feasible = rep.max_row_norm < 1.0;
    return rep;
}

} // namespace mtlasso
