#pragma once
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace mtlasso {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014). Used for seed derivation only.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/**
 * Seed of trial `trial` in sweep cell `cell`:
 *   base_seed XOR splitmix64((cell << 32) | trial).
 */
constexpr std::uint64_t derive_trial_seed(std::uint64_t base_seed, std::uint64_t cell,
                                          std::uint64_t trial) noexcept
{
    return base_seed ^ splitmix64((cell << 32) | (trial & 0xFFFFFFFFULL));
}

/**
 * Standard normal stream, algorithm id "mt19937_64+boxmuller/v1".
 *
 * The engine is std::mt19937_64 seeded with splitmix64(seed). Uniforms are
 * u = ((x >> 11) + 1) * 2^-53 in (0, 1]; normals come in Box-Muller pairs
 * (r cos t, r sin t) with r = sqrt(-2 ln u1), t = 2 pi u2, cos first.
 * The stream is fully specified, so it is identical across platforms.
 */
class NormalStream
{
public:
    static constexpr const char* algorithm_id = "mt19937_64+boxmuller/v1";

    explicit NormalStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    double uniform() noexcept
    {
        return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    }

    double operator()() noexcept
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace mtlasso
