#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ovt {

/// Seeded random source. mt19937_64 has a standard-pinned sequence, and the
/// sampling helpers below avoid std::*_distribution (whose outputs are
/// implementation-defined), so a fixed seed reproduces byte-identical runs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n) by rejection; n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Standard normal via Box-Muller.
    double gaussian();
    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    std::vector<double> gaussian_vec(std::size_t n, double mean, double stddev);

    /// Fisher-Yates shuffle of 0..n-1 style index vectors.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct indices from [0, n), in selection order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    /// Derives an independent stream: one seed, many reproducible substreams.
    static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ovt
