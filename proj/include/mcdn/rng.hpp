#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

// Deterministic, platform-independent random number utilities.
// All randomness in the library flows through SplitMix64 streams or the
// stateless mix64 hash, so results are reproducible bit-for-bit across
// platforms and across any degree of parallelism.

namespace mcdn {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// stateless hash of (seed, index); used for counter-based per-voxel streams
inline std::uint64_t mix64(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t state = seed ^ (index * 0xd6e8feb86659fd93ull) ^ 0x2545f4914f6cdd1dull;
    return splitmix64_next(state);
}

// uniform in (0, 1]; never returns 0 so log() stays finite
inline double u64_to_unit(std::uint64_t bits) {
    return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64_next(state_); }

    // uniform in (0, 1]
    double next_unit() { return u64_to_unit(next_u64()); }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller; pairs are generated and cached
    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Box-Muller pair from the counter-based stream: voxel-indexed, order-free.
struct GaussPair {
    double n1, n2;
};

inline GaussPair gauss_pair_at(std::uint64_t seed, std::uint64_t index) {
    const double u1 = u64_to_unit(mix64(seed, 2 * index));
    const double u2 = u64_to_unit(mix64(seed, 2 * index + 1));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    return {r * std::cos(a), r * std::sin(a)};
}

// Fisher-Yates shuffle driven by an Rng stream
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace mcdn
