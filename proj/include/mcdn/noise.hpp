#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mcdn/parallel.hpp"
#include "mcdn/rng.hpp"
#include "mcdn/volume.hpp"

// Rician corruption of magnitude images: each voxel becomes
// sqrt((x + n1)^2 + n2^2) with n1, n2 independent zero-mean Gaussians of
// standard deviation sigma. A "p% noise" level means sigma = p/100 times the
// reference intensity (the maximum of the noise-free volume; 255 for
// normalized volumes).

namespace mcdn {

struct NoiseLevel {
    double percent = 0.0;
    double sigma = 0.0;

    static NoiseLevel from_percent(double percent, double reference_intensity = 255.0) {
        if (percent <= 0.0 || percent > 100.0)
            throw ValueError("noise level must lie in (0, 100] percent, got " +
                             std::to_string(percent));
        if (reference_intensity <= 0.0)
            throw ValueError("reference intensity must be positive");
        return {percent, percent / 100.0 * reference_intensity};
    }
};

// The evaluation sweep: 1% to 15% in steps of 2.
inline std::vector<double> noise_sweep_levels() {
    std::vector<double> levels;
    for (int p = 1; p <= 15; p += 2)
        levels.push_back(static_cast<double>(p));
    return levels;
}

// Deterministic given (volume, level, seed): voxel i draws its Gaussian pair
// from the counter-based stream at index i, so any parallel schedule produces
// identical output.
inline Volume add_rician(const Volume& volume, const NoiseLevel& level, std::uint64_t seed) {
    if (level.sigma <= 0.0)
        throw ValueError("rician sigma must be positive, got " + std::to_string(level.sigma));
    Volume out = volume;
    const double sigma = level.sigma;
    float* v = out.voxels.data();
    const std::int64_t n = static_cast<std::int64_t>(out.voxels.size());
    const std::int64_t chunk = 1 << 14;
    parallel_for((n + chunk - 1) / chunk, [&](std::int64_t b) {
        const std::int64_t hi = std::min(n, (b + 1) * chunk);
        for (std::int64_t i = b * chunk; i < hi; ++i) {
            const GaussPair gp = gauss_pair_at(seed, static_cast<std::uint64_t>(i));
            const double re = static_cast<double>(v[i]) + sigma * gp.n1;
            const double im = sigma * gp.n2;
            v[i] = static_cast<float>(std::sqrt(re * re + im * im));
        }
    });
    return out;
}

} // namespace mcdn
