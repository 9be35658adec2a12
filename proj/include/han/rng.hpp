#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace han {

/// Seedable 64-bit generator (xoshiro256++ seeded through splitmix64).
/// Self-contained so streams are bit-identical across platforms and
/// standard-library versions; an identical seed yields an identical stream.
/// No global state: every stochastic operation takes an Rng by reference.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    /// Standard normal deviate (Marsaglia polar method, cached pair).
    double normal();

    /// Unbiased uniform index in [0, n). n must be > 0.
    std::size_t uniform_index(std::size_t n);

    /// Derive an independent child generator; stable function of
    /// (parent seed material, stream id).
    Rng split(std::uint64_t stream) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = uniform_index(i + 1);
            std::swap(v[i], v[j]);
        }
    }

private:
    Rng() = default;

    std::uint64_t state_[4]{};
    bool has_spare_{false};
    double spare_{0.0};
};

/// splitmix64 step; also used to derive per-run seeds from a master seed.
std::uint64_t splitmix64(std::uint64_t& state);

/// k-th derived seed of a master seed (k = 0, 1, ...).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k);

} // namespace han
