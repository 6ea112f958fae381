#pragma once
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <mtlasso/datagen.hpp>
#include <mtlasso/model.hpp>

namespace mtlasso {
namespace theory {

namespace detail {

inline Eigen::LLT<Matrix> factor_block(const Matrix& cov, const IndexSet& S, const char* who)
{
    Eigen::LLT<Matrix> llt(cov(S, S));
    if (llt.info() != Eigen::Success) {
        throw SingularityError(std::string(who) + ": Sigma_SS is not positive definite");
    }
    const Vector ldiag = Matrix(llt.matrixL()).diagonal();
    if (!(ldiag.minCoeff() > 1e-12 * ldiag.maxCoeff())) {
        throw SingularityError(std::string(who) + ": Sigma_SS is numerically singular");
    }
    return llt;
}

inline void check_index_set(const IndexSet& S, Index p, const char* who)
{
    for (std::size_t i = 0; i < S.size(); ++i) {
        if (S[i] < 0 || S[i] >= p || (i > 0 && S[i] <= S[i - 1])) {
            throw DimensionError(std::string(who) + ": index set must be sorted, unique and < p");
        }
    }
}

inline Vector sign_vector(const Eigen::Ref<const Vector>& v)
{
    return v.unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

} // namespace detail

/// Sigma_{S^c S^c} - Sigma_{S^c S} Sigma_SS^{-1} Sigma_{S S^c}, via a Cholesky solve.
inline Matrix conditional_covariance(const Matrix& cov, const IndexSet& S)
{
    const Index p = cov.rows();
    detail::check_index_set(S, p, "conditional_covariance");
    if (S.empty() || static_cast<Index>(S.size()) >= p) {
        throw DomainError("conditional_covariance: S must be a nonempty proper subset");
    }
    const IndexSet Sc = complement(S, p);
    const auto llt = detail::factor_block(cov, S, "conditional_covariance");
    const Matrix cross = cov(S, Sc);
    Matrix q = cov(Sc, Sc) - cross.transpose() * llt.solve(cross);
    return 0.5 * (q + q.transpose());
}

/// max_k Z*_Sk^T (Sigma_SS^(k))^{-1} Z*_Sk, with Z*_S the l2-normalized rows of B*_S.
inline double psi(const Matrix& b_star, const CovarianceSet& covs, const IndexSet& S)
{
    if (covs.num_tasks() != b_star.cols() || covs.dim() != b_star.rows()) {
        throw DimensionError("psi: covariance set does not match B* shape");
    }
    detail::check_index_set(S, b_star.rows(), "psi");
    if (S.empty()) return 0.0;
    Matrix z = b_star(S, Eigen::all);
    for (Index i = 0; i < z.rows(); ++i) {
        const double nrm = z.row(i).norm();
        if (!(nrm > 0.0)) {
            throw DomainError("psi: row " + std::to_string(S[static_cast<std::size_t>(i)]) +
                              " of B* is zero but lies in S");
        }
        z.row(i) /= nrm;
    }
    double best = 0.0;
    for (Index k = 0; k < covs.num_tasks(); ++k) {
        const auto llt = detail::factor_block(covs[k], S, "psi");
        best = std::max(best, z.col(k).dot(llt.solve(z.col(k))));
    }
    return best;
}

/// sign(beta_S)^T Sigma_SS^{-1} sign(beta_S) over the caller-supplied evaluation support S.
inline double psi_single(const Vector& beta, const Matrix& cov, const IndexSet& S)
{
    if (cov.rows() != beta.size() || cov.cols() != beta.size()) {
        throw DimensionError("psi_single: covariance does not match beta");
    }
    detail::check_index_set(S, beta.size(), "psi_single");
    if (S.empty()) return 0.0;
    const Vector sgn = detail::sign_vector(beta(S));
    const auto llt = detail::factor_block(cov, S, "psi_single");
    return sgn.dot(llt.solve(sgn));
}

/// (1/K) max_k psi_single(beta, Sigma^(k), S): psi for B* = beta 1_K^T.
inline double psi_identical_columns(const Vector& beta, const CovarianceSet& covs, const IndexSet& S)
{
    double best = 0.0;
    for (Index k = 0; k < covs.num_tasks(); ++k) best = std::max(best, psi_single(beta, covs[k], S));
    return best / static_cast<double>(covs.num_tasks());
}

/// max_k psi_single(beta^(k), Sigma, S): psi for disjoint supports under a shared Sigma.
inline double psi_disjoint_supports(const Matrix& b_star, const Matrix& cov, const IndexSet& S)
{
    double best = 0.0;
    for (Index k = 0; k < b_star.cols(); ++k) {
        best = std::max(best, psi_single(b_star.col(k), cov, S));
    }
    return best;
}

/**
 * (1/K) max_k ((Bbar_k + Delta_k)/(Bbar_k - Delta_k))^2 for entries of B* on S
 * confined to [Bbar_k - Delta_k, Bbar_k + Delta_k] with Bbar_k > Delta_k > 0.
 */
inline double bounded_entry_ratio_bound(const Vector& center, const Vector& spread)
{
    if (center.size() != spread.size() || center.size() == 0) {
        throw DimensionError("bounded_entry_ratio_bound: need one (center, spread) pair per task");
    }
    double best = 0.0;
    for (Index k = 0; k < center.size(); ++k) {
        if (!(spread(k) > 0.0 && center(k) > spread(k))) {
            throw DomainError("bounded_entry_ratio_bound: need center > spread > 0");
        }
        const double r = (center(k) + spread(k)) / (center(k) - spread(k));
        best = std::max(best, r * r);
    }
    return best / static_cast<double>(center.size());
}

struct Irrepresentability
{
    double gamma = 1.0;
    double a_matrix_inf_norm = 0.0;
    Matrix a_matrix; ///< (p - s) x s, A_js = max_k |(Sigma_{S^cS} Sigma_SS^{-1})_js|
};

inline Irrepresentability irrepresentability(const CovarianceSet& covs, const IndexSet& S)
{
    const Index p = covs.dim();
    detail::check_index_set(S, p, "irrepresentability");
    const IndexSet Sc = complement(S, p);
    Irrepresentability out;
    out.a_matrix = Matrix::Zero(static_cast<Index>(Sc.size()), static_cast<Index>(S.size()));
    if (S.empty() || Sc.empty()) return out;
    for (Index k = 0; k < covs.num_tasks(); ++k) {
        const auto llt = detail::factor_block(covs[k], S, "irrepresentability");
        // (Sigma_{S^cS} Sigma_SS^{-1})^T = Sigma_SS^{-1} Sigma_{S S^c}
        const Matrix coef = llt.solve(covs[k](S, Sc)).transpose();
        out.a_matrix = out.a_matrix.cwiseMax(coef.cwiseAbs());
    }
    out.a_matrix_inf_norm = out.a_matrix.rowwise().sum().maxCoeff();
    out.gamma = 1.0 - out.a_matrix_inf_norm;
    return out;
}

struct RhoBounds
{
    double rho_u = 0.0;
    /// Unset when |S^c| < 2 (no pair i != j exists).
    std::optional<double> rho_l;
};

/// Extremes of the conditional covariances Q^(k) = Sigma^(k)_{S^cS^c|S}.
inline RhoBounds rho_bounds(const CovarianceSet& covs, const IndexSet& S)
{
    const Index p = covs.dim();
    detail::check_index_set(S, p, "rho_bounds");
    const IndexSet Sc = complement(S, p);
    if (Sc.empty()) throw DomainError("rho_bounds: S^c is empty");
    RhoBounds out;
    double lo = inf;
    for (Index k = 0; k < covs.num_tasks(); ++k) {
        const Matrix q = S.empty() ? Matrix(covs[k]) : conditional_covariance(covs[k], S);
        out.rho_u = std::max(out.rho_u, q.diagonal().maxCoeff());
        for (Index j = 0; j < q.rows(); ++j) {
            for (Index i = 0; i < j; ++i) lo = std::min(lo, q(j, j) + q(i, i) - 2.0 * q(j, i));
        }
    }
    if (Sc.size() >= 2) out.rho_l = lo;
    return out;
}

struct EigenBounds
{
    double c_min = 0.0;
    double c_max = 0.0;
    double d_max = 0.0; ///< max_k |||(Sigma_SS^(k))^{-1}|||_inf
};

inline EigenBounds eigen_bounds(const CovarianceSet& covs, const IndexSet& S)
{
    detail::check_index_set(S, covs.dim(), "eigen_bounds");
    if (S.empty()) throw DomainError("eigen_bounds: empty support");
    EigenBounds out;
    out.c_min = inf;
    const Index s = static_cast<Index>(S.size());
    for (Index k = 0; k < covs.num_tasks(); ++k) {
        const Matrix block = covs[k](S, S);
        const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(block, Eigen::EigenvaluesOnly).eigenvalues();
        out.c_min = std::min(out.c_min, ev.minCoeff());
        out.c_max = std::max(out.c_max, ev.maxCoeff());
        const auto llt = detail::factor_block(covs[k], S, "eigen_bounds");
        const Matrix inverse = llt.solve(Matrix::Identity(s, s));
        out.d_max = std::max(out.d_max, inverse.cwiseAbs().rowwise().sum().maxCoeff());
    }
    return out;
}

struct Thresholds
{
    double n_achievability = 0.0;
    double n_converse = 0.0;
};

/**
 * n_achievability = 2(1+v) psi ln(p-s) rho_u / gamma^2
 * n_converse      = 2(1-v) psi ln(p-s) rho_l / (2-gamma)^2
 */
inline Thresholds thresholds(double psi_val, Index p, Index s, double rho_u, double rho_l, double gamma,
                             double v)
{
    if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("thresholds: gamma must be in (0, 1]");
    if (p <= s) throw DomainError("thresholds: need p > s");
    if (!(v > 0.0 && v < 1.0)) throw DomainError("thresholds: v must be in (0, 1)");
    const double base = 2.0 * psi_val * std::log(static_cast<double>(p - s));
    return Thresholds{base * (1.0 + v) * rho_u / (gamma * gamma),
                      base * (1.0 - v) * rho_l / ((2.0 - gamma) * (2.0 - gamma))};
}

/// s/(K C_max) - 1e-9 <= psi <= s/C_min + 1e-9.
inline bool psi_bounds_check(double psi_val, Index s, Index K, double c_min, double c_max)
{
    if (s < 1 || K < 1 || !(c_min > 0.0) || c_max < c_min) {
        throw DomainError("psi_bounds_check: need s, K >= 1 and 0 < c_min <= c_max");
    }
    const double ds = static_cast<double>(s);
    return ds / (static_cast<double>(K) * c_max) - 1e-9 <= psi_val && psi_val <= ds / c_min + 1e-9;
}

/**
 * sqrt(8 sigma_max^2 s ln s / (n C_min)) + lambda (D_max + 12 s / (C_min sqrt n)).
 * sigma_max is the largest noise standard deviation; it is squared here.
 */
inline double rho_p2(Index n, Index s, double lambda, double sigma_max, double c_min, double d_max)
{
    if (s < 2) throw DomainError("rho_p2: need s >= 2 so that ln s > 0");
    if (n < 1 || !(lambda >= 0.0) || !(sigma_max >= 0.0) || !(c_min > 0.0) || !(d_max >= 0.0)) {
        throw DomainError("rho_p2: inputs must be positive");
    }
    const double dn = static_cast<double>(n);
    const double ds = static_cast<double>(s);
    return std::sqrt(8.0 * sigma_max * sigma_max * ds * std::log(ds) / (dn * c_min)) +
           lambda * (d_max + 12.0 * ds / (c_min * std::sqrt(dn)));
}

struct DeclaredBounds
{
    std::optional<double> c_min;
    std::optional<double> c_max;
    std::optional<double> d_max;
};

struct ConditionReport
{
    double gamma = 0.0;
    double a_matrix_inf_norm = 0.0;
    double c_min = 0.0;
    double c_max = 0.0;
    double d_max = 0.0;
    double rho_u = 0.0;
    std::optional<double> rho_l;
    double psi = 0.0;
    bool c1_holds = false;
    /// Set only when the corresponding bounds were declared.
    std::optional<bool> c2_holds;
    std::optional<bool> c3_holds;
};

inline ConditionReport condition_report(const GroundTruth& truth, const CovarianceSet& covs,
                                        const DeclaredBounds& declared = {})
{
    const IndexSet& S = truth.support_union;
    ConditionReport rep;
    const auto irr = irrepresentability(covs, S);
    rep.gamma = irr.gamma;
    rep.a_matrix_inf_norm = irr.a_matrix_inf_norm;
    rep.c1_holds = rep.gamma > 0.0;
    const auto eb = eigen_bounds(covs, S);
    rep.c_min = eb.c_min;
    rep.c_max = eb.c_max;
    rep.d_max = eb.d_max;
    const auto rb = rho_bounds(covs, S);
    rep.rho_u = rb.rho_u;
    rep.rho_l = rb.rho_l;
    rep.psi = psi(truth.b_star.values, covs, S);
    if (declared.c_min || declared.c_max) {
        rep.c2_holds = (!declared.c_min || *declared.c_min <= rep.c_min) &&
                       (!declared.c_max || rep.c_max <= *declared.c_max);
    }
    if (declared.d_max) rep.c3_holds = rep.d_max <= *declared.d_max;
    return rep;
}

} // namespace theory
} // namespace mtlasso
