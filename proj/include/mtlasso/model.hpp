#pragma once
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>
#include <mtlasso/error.hpp>

namespace mtlasso {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Sorted, duplicate-free set of 0-based row (feature) indices.
using IndexSet = std::vector<Index>;

inline constexpr double inf = std::numeric_limits<double>::infinity();

/**
 * K regression tasks sharing dimension p and sample count n:
 * Y^(k) = X^(k) beta^(k) + W^(k). Immutable after construction.
 */
class MvmrProblem
{
public:
    MvmrProblem(std::vector<Matrix> designs, std::vector<Vector> responses)
        : designs_(std::move(designs)), responses_(std::move(responses))
    {
        if (designs_.empty()) {
            throw DimensionError("MvmrProblem: at least one task is required");
        }
        if (designs_.size() != responses_.size()) {
            throw DimensionError("MvmrProblem: " + std::to_string(designs_.size()) +
                                 " designs but " + std::to_string(responses_.size()) + " responses");
        }
        const auto n = designs_.front().rows();
        const auto p = designs_.front().cols();
        if (n < 1 || p < 1) {
            throw DimensionError("MvmrProblem: designs must be at least 1x1");
        }
        for (std::size_t k = 0; k < designs_.size(); ++k) {
            if (designs_[k].rows() != n || designs_[k].cols() != p) {
                throw DimensionError("MvmrProblem: design " + std::to_string(k) + " is " +
                                     std::to_string(designs_[k].rows()) + "x" +
                                     std::to_string(designs_[k].cols()) + ", expected " +
                                     std::to_string(n) + "x" + std::to_string(p));
            }
            if (responses_[k].size() != n) {
                throw DimensionError("MvmrProblem: response " + std::to_string(k) +
                                     " has length " + std::to_string(responses_[k].size()));
            }
            if (!designs_[k].allFinite() || !responses_[k].allFinite()) {
                throw DataError("MvmrProblem: task " + std::to_string(k) + " has non-finite data");
            }
        }
    }

    Index num_tasks() const { return static_cast<Index>(designs_.size()); }
    Index dim() const { return designs_.front().cols(); }
    Index samples() const { return designs_.front().rows(); }

    const Matrix& design(Index k) const { return designs_[static_cast<std::size_t>(k)]; }
    const Vector& response(Index k) const { return responses_[static_cast<std::size_t>(k)]; }
    const std::vector<Matrix>& designs() const { return designs_; }
    const std::vector<Vector>& responses() const { return responses_; }

private:
    std::vector<Matrix> designs_;
    std::vector<Vector> responses_;
};

enum class Role { estimate, truth };

/// p x K coefficients. Row i is the group shared across tasks, column k is task k.
struct CoefficientMatrix
{
    Matrix values;
    Role role = Role::estimate;
};

struct GroundTruth
{
    CoefficientMatrix b_star;
    IndexSet support_union;
    std::vector<IndexSet> per_task_supports;
    double b_min = 0.0;

    Index dim() const { return b_star.values.rows(); }
    Index num_tasks() const { return b_star.values.cols(); }
    Index sparsity() const { return static_cast<Index>(support_union.size()); }
};

/// Per-task noise standard deviations. Variances are sigma^2; nothing stores them squared.
struct NoiseSpec
{
    std::vector<double> sigma_w;

    double sigma_max() const
    {
        return sigma_w.empty() ? 0.0 : *std::max_element(sigma_w.begin(), sigma_w.end());
    }

    static NoiseSpec uniform(Index num_tasks, double sigma)
    {
        return NoiseSpec{std::vector<double>(static_cast<std::size_t>(num_tasks), sigma)};
    }
};

namespace detail {

inline void check_coefficients(const MvmrProblem& problem, const Matrix& B)
{
    if (B.rows() != problem.dim() || B.cols() != problem.num_tasks()) {
        throw DimensionError("coefficient matrix is " + std::to_string(B.rows()) + "x" +
                             std::to_string(B.cols()) + ", problem expects " +
                             std::to_string(problem.dim()) + "x" +
                             std::to_string(problem.num_tasks()));
    }
}

inline bool supported_exponent(double e) { return e == 1.0 || e == 2.0 || e == inf; }

inline double vector_norm(const Eigen::Ref<const Vector>& v, double e)
{
    if (e == 1.0) return v.lpNorm<1>();
    if (e == 2.0) return v.norm();
    return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

} // namespace detail

/**
 * l_a/l_b block norm: [sum_i (sum_k |B_ik|^b)^(a/b)]^(1/a), with the max
 * convention for infinite exponents. Only a, b in {1, 2, inf}.
 */
inline double block_norm(const Matrix& B, double a, double b)
{
    if (!detail::supported_exponent(a) || !detail::supported_exponent(b)) {
        throw UnsupportedNormError("block_norm: exponents must be 1, 2 or inf");
    }
    if (B.size() == 0) {
        throw DimensionError("block_norm: empty matrix");
    }
    Vector row_norms(B.rows());
    for (Index i = 0; i < B.rows(); ++i) {
        row_norms(i) = detail::vector_norm(B.row(i).transpose(), b);
    }
    return detail::vector_norm(row_norms, a);
}

/// Row-wise l2 norms.
inline Vector row_norms(const Matrix& B) { return B.rowwise().norm(); }

/// Per-task residuals Y^(k) - X^(k) beta^(k).
inline std::vector<Vector> residuals(const MvmrProblem& problem, const Matrix& B)
{
    detail::check_coefficients(problem, B);
    std::vector<Vector> r;
    r.reserve(static_cast<std::size_t>(problem.num_tasks()));
    for (Index k = 0; k < problem.num_tasks(); ++k) {
        r.push_back(problem.response(k) - problem.design(k) * B.col(k));
    }
    return r;
}

/// Loss gradient; column k is -(1/n) X^(k)^T (Y^(k) - X^(k) beta^(k)).
inline Matrix loss_gradient(const MvmrProblem& problem, const Matrix& B)
{
    const auto r = residuals(problem, B);
    const double n = static_cast<double>(problem.samples());
    Matrix G(problem.dim(), problem.num_tasks());
    for (Index k = 0; k < problem.num_tasks(); ++k) {
        G.col(k) = -(problem.design(k).transpose() * r[static_cast<std::size_t>(k)]) / n;
    }
    return G;
}

/// (1/2n) sum_k ||Y^(k) - X^(k) beta^(k)||^2 + lambda ||B||_{l1/l2}
inline double objective(const MvmrProblem& problem, const Matrix& B, double lambda)
{
    if (!(lambda >= 0.0)) {
        throw DomainError("objective: lambda must be nonnegative");
    }
    const auto r = residuals(problem, B);
    double loss = 0.0;
    for (const auto& rk : r) loss += rk.squaredNorm();
    loss /= 2.0 * static_cast<double>(problem.samples());
    return loss + lambda * block_norm(B, 1.0, 2.0);
}

/**
 * Largest row-wise violation of the optimality condition grad + lambda Z = 0.
 * Nonzero rows contribute ||G_j + lambda B_j/||B_j|| ||, zero rows
 * max(0, ||G_j|| - lambda).
 */
inline double kkt_residual_from_gradient(const Matrix& G, const Matrix& B, double lambda)
{
    double worst = 0.0;
    for (Index j = 0; j < B.rows(); ++j) {
        const double bn = B.row(j).norm();
        double v;
        if (bn > 0.0) {
            v = (G.row(j) + (lambda / bn) * B.row(j)).norm();
        } else {
            v = std::max(0.0, G.row(j).norm() - lambda);
        }
        worst = std::max(worst, v);
    }
    return worst;
}

inline double kkt_residual(const MvmrProblem& problem, const Matrix& B, double lambda)
{
    if (!(lambda > 0.0)) {
        throw DomainError("kkt_residual: lambda must be positive");
    }
    return kkt_residual_from_gradient(loss_gradient(problem, B), B, lambda);
}

/// Smallest lambda at which B = 0 is optimal: max_j ||G_j(0)||_2.
inline double critical_lambda(const MvmrProblem& problem)
{
    const Matrix zero = Matrix::Zero(problem.dim(), problem.num_tasks());
    return loss_gradient(problem, zero).rowwise().norm().maxCoeff();
}

/// Rows whose l2 norm strictly exceeds zero_tol.
inline IndexSet support_of(const Matrix& B, double zero_tol = 0.0)
{
    if (!(zero_tol >= 0.0)) {
        throw DomainError("support_of: zero_tol must be nonnegative");
    }
    IndexSet s;
    for (Index i = 0; i < B.rows(); ++i) {
        if (B.row(i).norm() > zero_tol) s.push_back(i);
    }
    return s;
}

struct RecoveryResult
{
    bool support_match = false;
    double linf_l2_error = 0.0;
};

inline RecoveryResult recovery_check(const Matrix& estimate, const GroundTruth& truth,
                                     double zero_tol = 0.0)
{
    const Matrix& b = truth.b_star.values;
    if (estimate.rows() != b.rows() || estimate.cols() != b.cols()) {
        throw DimensionError("recovery_check: estimate and truth shapes differ");
    }
    RecoveryResult out;
    out.support_match = support_of(estimate, zero_tol) == truth.support_union;
    out.linf_l2_error = block_norm(estimate - b, inf, 2.0);
    return out;
}

/// Builds GroundTruth bookkeeping (supports, b_min) from a coefficient matrix.
inline GroundTruth make_ground_truth(Matrix b_star)
{
    GroundTruth t;
    t.per_task_supports.resize(static_cast<std::size_t>(b_star.cols()));
    for (Index k = 0; k < b_star.cols(); ++k) {
        for (Index j = 0; j < b_star.rows(); ++j) {
            if (b_star(j, k) != 0.0) t.per_task_supports[static_cast<std::size_t>(k)].push_back(j);
        }
    }
    t.support_union = support_of(b_star, 0.0);
    t.b_min = 0.0;
    if (!t.support_union.empty()) {
        t.b_min = inf;
        for (Index j : t.support_union) t.b_min = std::min(t.b_min, b_star.row(j).norm());
    }
    t.b_star = CoefficientMatrix{std::move(b_star), Role::truth};
    return t;
}

/// Complement of a sorted index set within {0, ..., p-1}.
inline IndexSet complement(const IndexSet& s, Index p)
{
    IndexSet c;
    c.reserve(static_cast<std::size_t>(p) - std::min<std::size_t>(s.size(), static_cast<std::size_t>(p)));
    std::size_t pos = 0;
    for (Index i = 0; i < p; ++i) {
        if (pos < s.size() && s[pos] == i) {
            ++pos;
        } else {
            c.push_back(i);
        }
    }
    return c;
}

} // namespace mtlasso
