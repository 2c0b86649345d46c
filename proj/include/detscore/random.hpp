#pragma once

#include <cstdint>
#include <random>

namespace detscore {

namespace detail {

// SplitMix64 finalizer; full-period bijection used to whiten stream keys.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Derives an independent RNG seed from a master seed and a stream index.
/// Two streams with distinct indices never share state, so work items keyed
/// by index (trees, folds, images) can run in any order or thread count and
/// still reproduce bit-identical results.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) {
    return detail::splitmix64(detail::splitmix64(master) ^ stream);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    return stream_seed(stream_seed(master, a), b);
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t stream) {
    return std::mt19937_64(stream_seed(master, stream));
}

/// Beta(alpha, beta) sampler built on two gamma draws.
template <typename Rng>
double sample_beta(Rng& rng, double alpha, double beta) {
    std::gamma_distribution<double> ga(alpha, 1.0);
    std::gamma_distribution<double> gb(beta, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    const double s = x + y;
    return s > 0.0 ? x / s : 0.5;
}

} // namespace detscore
