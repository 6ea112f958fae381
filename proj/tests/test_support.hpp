#pragma once
#include <cstdint>
#include <random>
#include <vector>
#include <mtlasso/datagen.hpp>
#include <mtlasso/model.hpp>

namespace mtlasso::testing {

/// Test-only RNG wrapper; independent of the library's NormalStream.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    Index integer(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(engine_); }

    Matrix gaussian(Index rows, Index cols)
    {
        Matrix m(rows, cols);
        for (Index j = 0; j < cols; ++j) {
            for (Index i = 0; i < rows; ++i) m(i, j) = normal();
        }
        return m;
    }

    /// A A^T / p + ridge I, well away from singular.
    Matrix spd(Index p, double ridge = 0.2)
    {
        const Matrix a = gaussian(p, p);
        Matrix s = a * a.transpose() / static_cast<double>(p) + ridge * Matrix::Identity(p, p);
        return 0.5 * (s + s.transpose());
    }

    /// Random subset of {0..p-1} of size s, sorted.
    IndexSet subset(Index p, Index s)
    {
        std::vector<Index> all(static_cast<std::size_t>(p));
        for (Index i = 0; i < p; ++i) all[static_cast<std::size_t>(i)] = i;
        std::shuffle(all.begin(), all.end(), engine_);
        IndexSet out(all.begin(), all.begin() + s);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Gaussian designs with i.i.d. entries, responses X B* + sigma * noise.
inline MvmrProblem random_problem(Rng& rng, Index n, Index p, Index K, const Matrix& b_star, double sigma)
{
    std::vector<Matrix> xs;
    std::vector<Vector> ys;
    for (Index k = 0; k < K; ++k) {
        Matrix X = rng.gaussian(n, p);
        Vector y = X * b_star.col(k);
        for (Index i = 0; i < n; ++i) y(i) += sigma * rng.normal();
        xs.push_back(std::move(X));
        ys.push_back(std::move(y));
    }
    return MvmrProblem(std::move(xs), std::move(ys));
}

/// Sparse p x K matrix with `s` nonzero rows of Gaussian entries.
inline Matrix random_sparse_rows(Rng& rng, Index p, Index K, Index s)
{
    Matrix b = Matrix::Zero(p, K);
    for (Index j : rng.subset(p, s)) {
        for (Index k = 0; k < K; ++k) b(j, k) = rng.normal();
    }
    return b;
}

} // namespace mtlasso::testing
