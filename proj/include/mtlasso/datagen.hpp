#pragma once
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>
#include <mtlasso/model.hpp>
#include <mtlasso/random.hpp>

namespace mtlasso {

/**
 * K symmetric positive-definite p x p covariances with their cached minimum
 * eigenvalues, lower Cholesky factors, and any diagonal shift applied during
 * construction.
 */
class CovarianceSet
{
public:
    /// Validates symmetry (1e-12) and positive definiteness of every matrix.
    explicit CovarianceSet(std::vector<Matrix> matrices, std::vector<double> shifts = {})
        : matrices_(std::move(matrices)), shifts_(std::move(shifts))
    {
        if (matrices_.empty()) {
            throw DimensionError("CovarianceSet: at least one matrix is required");
        }
        if (shifts_.empty()) shifts_.assign(matrices_.size(), 0.0);
        if (shifts_.size() != matrices_.size()) {
            throw DimensionError("CovarianceSet: shift count does not match matrix count");
        }
        const Index p = matrices_.front().rows();
        for (std::size_t k = 0; k < matrices_.size(); ++k) {
            const Matrix& m = matrices_[k];
            if (m.rows() != p || m.cols() != p) {
                throw DimensionError("CovarianceSet: matrix " + std::to_string(k) + " is not " +
                                     std::to_string(p) + "x" + std::to_string(p));
            }
            if (!m.allFinite()) throw DataError("CovarianceSet: non-finite entries");
            if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
                throw SpdError("CovarianceSet: matrix " + std::to_string(k) + " is not symmetric");
            }
            const double lmin = Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly)
                                    .eigenvalues()
                                    .minCoeff();
            if (!(lmin > 0.0)) {
                throw SpdError("CovarianceSet: matrix " + std::to_string(k) +
                               " has minimum eigenvalue " + std::to_string(lmin));
            }
            Eigen::LLT<Matrix> llt(m);
            if (llt.info() != Eigen::Success) {
                throw SpdError("CovarianceSet: Cholesky failed for matrix " + std::to_string(k));
            }
            min_eigenvalues_.push_back(lmin);
            factors_.push_back(llt.matrixL());
        }
    }

    Index num_tasks() const { return static_cast<Index>(matrices_.size()); }
    Index dim() const { return matrices_.front().rows(); }
    const Matrix& operator[](Index k) const { return matrices_[static_cast<std::size_t>(k)]; }
    const std::vector<Matrix>& matrices() const { return matrices_; }
    const std::vector<double>& min_eigenvalues() const { return min_eigenvalues_; }
    const std::vector<double>& shifts() const { return shifts_; }
    const Matrix& cholesky_factor(Index k) const { return factors_[static_cast<std::size_t>(k)]; }

    bool shifted() const
    {
        for (double s : shifts_) {
            if (s != 0.0) return true;
        }
        return false;
    }

private:
    std::vector<Matrix> matrices_;
    std::vector<double> shifts_;
    std::vector<double> min_eigenvalues_;
    std::vector<Matrix> factors_;
};

enum class CovarianceKind { identity, tridiag_shared, tridiag_per_task };

/**
 * Tridiagonal covariances with unit diagonal. For task k (1-based) the
 * entry coupling features a and a+1 (1-based, a the smaller index) is
 *   tridiag_shared:   shared_offdiag
 *   tridiag_per_task: 1 + odd_gain/k  if a is odd,  1 - even_gain/k  if a is even.
 */
struct CovarianceModel
{
    CovarianceKind kind = CovarianceKind::identity;
    double shared_offdiag = 1.0;
    double odd_gain = 1.0;
    double even_gain = 0.8;
};

enum class CoefficientKind { identical_uniform, varying_same_support, overlap_model };

/// Support index formulas (1-based, t >= 0 unless noted):
///   stride_8        S_k = {8t+1}
///   stride_16_pair  S_k = {16t (t >= 1)} u {16t+8}
///   disjoint_16     S_1 = {16t+1}, S_2 = {16t+2}            (K = 2)
///   overlap_24      S_1 = {24t+1, 24t+2}, S_2 = {24t+2, 24t+3} (K = 2)
///   custom          caller-supplied 0-based sets
enum class SupportRule { stride_8, stride_16_pair, disjoint_16, overlap_24, custom };

struct CoefficientModel
{
    CoefficientKind kind = CoefficientKind::identical_uniform;
    SupportRule support_rule = SupportRule::stride_8;
    double perturbation = 1.0 / 16.0;
    /// Defaults to 1/sqrt(K) when unset.
    std::optional<double> scale;
    /// For SupportRule::custom, one 0-based index set per task.
    std::vector<IndexSet> custom_supports;
};

inline std::string_view to_string(CovarianceKind k)
{
    switch (k) {
    case CovarianceKind::identity: return "identity";
    case CovarianceKind::tridiag_shared: return "tridiag_shared";
    case CovarianceKind::tridiag_per_task: return "tridiag_per_task";
    }
    return "?";
}

inline std::string_view to_string(CoefficientKind k)
{
    switch (k) {
    case CoefficientKind::identical_uniform: return "identical_uniform";
    case CoefficientKind::varying_same_support: return "varying_same_support";
    case CoefficientKind::overlap_model: return "overlap_model";
    }
    return "?";
}

inline std::string_view to_string(SupportRule r)
{
    switch (r) {
    case SupportRule::stride_8: return "stride_8";
    case SupportRule::stride_16_pair: return "stride_16_pair";
    case SupportRule::disjoint_16: return "disjoint_16";
    case SupportRule::overlap_24: return "overlap_24";
    case SupportRule::custom: return "custom";
    }
    return "?";
}

inline constexpr double default_spd_floor = 0.05;
inline constexpr double default_sigma_w = 0.5;

/**
 * Builds Sigma^(1:K). Tridiagonal models whose minimum eigenvalue falls below
 * spd_floor are shifted to T + (spd_floor - lambda_min) I; the shift is kept
 * in CovarianceSet::shifts().
 */
inline CovarianceSet build_covariance(const CovarianceModel& model, Index p, Index K,
                                      double spd_floor = default_spd_floor)
{
    if (K < 1) throw ConfigError("build_covariance: K must be >= 1");
    if (!(spd_floor > 0.0)) throw ConfigError("build_covariance: spd_floor must be positive");
    if (model.kind == CovarianceKind::identity) {
        if (p < 1) throw ConfigError("build_covariance: p must be >= 1");
        return CovarianceSet(std::vector<Matrix>(static_cast<std::size_t>(K), Matrix::Identity(p, p)));
    }
    if (p < 2) throw DimensionError("build_covariance: tridiagonal models need p >= 2");

    std::vector<Matrix> mats;
    std::vector<double> shifts;
    for (Index k = 1; k <= K; ++k) {
        Matrix t = Matrix::Identity(p, p);
        for (Index a = 1; a < p; ++a) { // pair (a, a+1), 1-based
            double v;
            if (model.kind == CovarianceKind::tridiag_shared) {
                v = model.shared_offdiag;
            } else if (a % 2 == 1) {
                v = 1.0 + model.odd_gain / static_cast<double>(k);
            } else {
                v = 1.0 - model.even_gain / static_cast<double>(k);
            }
            t(a - 1, a) = v;
            t(a, a - 1) = v;
        }
        const double lmin =
            Eigen::SelfAdjointEigenSolver<Matrix>(t, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
        double shift = 0.0;
        if (lmin < spd_floor) {
            shift = spd_floor - lmin;
            t.diagonal().array() += shift;
        }
        mats.push_back(std::move(t));
        shifts.push_back(shift);
    }
    return CovarianceSet(std::move(mats), std::move(shifts));
}

namespace detail {

/// 1-based indices {stride*t + offset <= p}, t >= t_min, returned 0-based.
inline IndexSet arithmetic_support(Index p, Index stride, Index offset, Index t_min = 0)
{
    IndexSet s;
    for (Index t = t_min;; ++t) {
        const Index j = stride * t + offset;
        if (j > p) break;
        if (j >= 1) s.push_back(j - 1);
    }
    return s;
}

inline IndexSet merge(IndexSet a, const IndexSet& b)
{
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
}

inline std::vector<IndexSet> rule_supports(const CoefficientModel& model, Index p, Index K)
{
    const auto k_count = static_cast<std::size_t>(K);
    auto need_two_tasks = [&](std::string_view rule) {
        if (K != 2) {
            throw ConfigError(std::string("support rule ") + std::string(rule) +
                              " is defined for K = 2 only");
        }
    };
    switch (model.support_rule) {
    case SupportRule::stride_8:
        return std::vector<IndexSet>(k_count, arithmetic_support(p, 8, 1));
    case SupportRule::stride_16_pair:
        return std::vector<IndexSet>(
            k_count, merge(arithmetic_support(p, 16, 0, 1), arithmetic_support(p, 16, 8)));
    case SupportRule::disjoint_16:
        need_two_tasks("disjoint_16");
        return {arithmetic_support(p, 16, 1), arithmetic_support(p, 16, 2)};
    case SupportRule::overlap_24:
        need_two_tasks("overlap_24");
        return {merge(arithmetic_support(p, 24, 1), arithmetic_support(p, 24, 2)),
                merge(arithmetic_support(p, 24, 2), arithmetic_support(p, 24, 3))};
    case SupportRule::custom: {
        if (model.custom_supports.size() != k_count) {
            throw ConfigError("custom support rule needs one index set per task");
        }
        std::vector<IndexSet> out;
        for (const auto& s : model.custom_supports) {
            for (Index j : s) {
                if (j < 0 || j >= p) throw ConfigError("custom support index out of range");
            }
            out.push_back(merge(s, {}));
        }
        return out;
    }
    }
    throw ConfigError("unknown support rule");
}

} // namespace detail

/**
 * Builds B* and its supports. The index formulas are 1-based; the
 * conversion to 0-based happens in detail::arithmetic_support and nowhere else.
 */
inline GroundTruth build_truth(const CoefficientModel& model, Index p, Index K)
{
    if (p < 1 || K < 1) throw ConfigError("build_truth: p and K must be positive");
    const auto supports = detail::rule_supports(model, p, K);
    for (std::size_t k = 0; k < supports.size(); ++k) {
        if (supports[k].empty()) {
            throw ConfigError("build_truth: support rule " + std::string(to_string(model.support_rule)) +
                              " yields no index <= p=" + std::to_string(p) + " for task " +
                              std::to_string(k + 1));
        }
    }
    const double scale = model.scale.value_or(1.0 / std::sqrt(static_cast<double>(K)));
    const double pert = model.perturbation;

    Matrix b = Matrix::Zero(p, K);
    auto fill_uniform = [&] {
        for (Index k = 0; k < K; ++k) {
            for (Index j : supports[static_cast<std::size_t>(k)]) b(j, k) = scale;
        }
    };
    // (1 + k*pert) at 1-based j = 16t, (1 - k*pert) at j = 16t + 8.
    auto fill_varying = [&] {
        if (1.0 - static_cast<double>(K) * pert <= 0.0) {
            throw ConfigError("build_truth: perturbation too large for K, entries would be <= 0");
        }
        for (Index k = 0; k < K; ++k) {
            const double kk = static_cast<double>(k + 1);
            for (Index j : supports[static_cast<std::size_t>(k)]) {
                const bool up = (j + 1) % 16 == 0;
                b(j, k) = scale * (up ? 1.0 + kk * pert : 1.0 - kk * pert);
            }
        }
    };

    switch (model.kind) {
    case CoefficientKind::identical_uniform:
        fill_uniform();
        break;
    case CoefficientKind::varying_same_support:
        if (model.support_rule != SupportRule::stride_16_pair) {
            throw ConfigError("varying_same_support requires the stride_16_pair support rule");
        }
        fill_varying();
        break;
    case CoefficientKind::overlap_model:
        if (model.support_rule == SupportRule::stride_16_pair) {
            fill_varying();
        } else if (model.support_rule == SupportRule::disjoint_16) {
            fill_uniform();
        } else if (model.support_rule == SupportRule::overlap_24) {
            // Unshared entries are 1; the shared entry 24t+2 is scale*(1 + pert) in
            // task 1 and scale*(1 - pert) in task 2.
            for (Index j : supports[0]) b(j, 0) = ((j + 1) % 24 == 2) ? scale * (1.0 + pert) : 1.0;
            for (Index j : supports[1]) b(j, 1) = ((j + 1) % 24 == 2) ? scale * (1.0 - pert) : 1.0;
        } else {
            throw ConfigError("overlap_model supports stride_16_pair, disjoint_16 and overlap_24");
        }
        break;
    }
    return make_ground_truth(std::move(b));
}

/**
 * Draws one MVMR instance. Stream order: for each task k, the n x p design
 * row by row (x = L z), then the n noise draws. Noise is always drawn, even
 * when sigma is 0, so streams stay aligned across noise settings.
 */
inline MvmrProblem sample_problem(const GroundTruth& truth, const CovarianceSet& covs,
                                  const NoiseSpec& noise, Index n, std::uint64_t seed)
{
    const Index p = truth.dim();
    const Index K = truth.num_tasks();
    if (n < 1) throw ConfigError("sample_problem: n must be >= 1");
    if (covs.num_tasks() != K || covs.dim() != p) {
        throw DimensionError("sample_problem: covariance set does not match truth shape");
    }
    if (static_cast<Index>(noise.sigma_w.size()) != K) {
        throw DimensionError("sample_problem: need one noise level per task");
    }
    for (double s : noise.sigma_w) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("sample_problem: bad noise level");
    }

    NormalStream rng(seed);
    std::vector<Matrix> designs;
    std::vector<Vector> responses;
    designs.reserve(static_cast<std::size_t>(K));
    responses.reserve(static_cast<std::size_t>(K));
    Vector z(p);
    for (Index k = 0; k < K; ++k) {
        const Matrix& L = covs.cholesky_factor(k);
        // First structurally nonzero column per row of L (banded covariances are cheap).
        std::vector<Index> first(static_cast<std::size_t>(p));
        for (Index i = 0; i < p; ++i) {
            Index j0 = 0;
            while (j0 < i && L(i, j0) == 0.0) ++j0;
            first[static_cast<std::size_t>(i)] = j0;
        }
        Matrix X(n, p);
        for (Index r = 0; r < n; ++r) {
            for (Index i = 0; i < p; ++i) z(i) = rng();
            for (Index i = 0; i < p; ++i) {
                double acc = 0.0;
                for (Index j = first[static_cast<std::size_t>(i)]; j <= i; ++j) acc += L(i, j) * z(j);
                X(r, i) = acc;
            }
        }
        const double sigma = noise.sigma_w[static_cast<std::size_t>(k)];
        Vector y = X * truth.b_star.values.col(k);
        for (Index r = 0; r < n; ++r) y(r) += sigma * rng();
        designs.push_back(std::move(X));
        responses.push_back(std::move(y));
    }
    return MvmrProblem(std::move(designs), std::move(responses));
}

/// 3.5 sqrt(ln(p - s) ln(s) / n), natural logs.
inline double lambda_rule(Index p, Index s, Index n)
{
    if (s <= 1 || p <= s) {
        throw DomainError("lambda_rule: requires p > s >= 2 (got p=" + std::to_string(p) +
                          ", s=" + std::to_string(s) + ")");
    }
    if (n < 1) throw DomainError("lambda_rule: n must be >= 1");
    return 3.5 * std::sqrt(std::log(static_cast<double>(p - s)) * std::log(static_cast<double>(s)) /
                           static_cast<double>(n));
}

} // namespace mtlasso
