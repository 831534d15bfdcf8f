#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "mcdn/parallel.hpp"
#include "mcdn/volume.hpp"

// Image quality measures on the 0-255 intensity convention:
//   PSNR = 20 log10(255 / RMSE)
//   SSIM computed locally over 3x3x3 voxel windows (population statistics,
//   unweighted box) and averaged over every fully interior window position.

namespace mcdn {

// standard constants for a 255 dynamic range
constexpr double kSsimC1 = (0.01 * 255.0) * (0.01 * 255.0);
constexpr double kSsimC2 = (0.03 * 255.0) * (0.03 * 255.0);

inline double rmse(const Volume& reference, const Volume& test) {
    require_same_dims(reference, test, "rmse");
    const std::size_t n = reference.voxels.size();
    // per-slab partials merged in order, stable under parallel evaluation
    const std::size_t slab = 1 << 15;
    const std::size_t slabs = (n + slab - 1) / slab;
    std::vector<double> parts(slabs, 0.0);
    const float* a = reference.voxels.data();
    const float* b = test.voxels.data();
    parallel_for(static_cast<std::int64_t>(slabs), [&](std::int64_t s) {
        const std::size_t hi = std::min(n, (static_cast<std::size_t>(s) + 1) * slab);
        double acc = 0.0;
        for (std::size_t i = static_cast<std::size_t>(s) * slab; i < hi; ++i) {
            const double d = static_cast<double>(a[i]) - b[i];
            acc += d * d;
        }
        parts[static_cast<std::size_t>(s)] = acc;
    });
    double total = 0.0;
    for (double p : parts)
        total += p;
    return std::sqrt(total / static_cast<double>(n));
}

// +infinity when the volumes are identical (RMSE == 0)
inline double psnr(const Volume& reference, const Volume& test) {
    const double e = rmse(reference, test);
    if (e == 0.0)
        return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(255.0 / e);
}

// local structural similarity of two complete 3x3x3 windows (27 voxels each)
inline double ssim_local(const float* x, const float* y, double c1 = kSsimC1,
                         double c2 = kSsimC2) {
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < 27; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= 27.0;
    my /= 27.0;
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (int i = 0; i < 27; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        vx += dx * dx;
        vy += dy * dy;
        cov += dx * dy;
    }
    vx /= 27.0;
    vy /= 27.0;
    cov /= 27.0;
    return ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
           ((mx * mx + my * my + c1) * (vx + vy + c2));
}

// mean of ssim_local over all fully interior window positions, stride 1;
// per-plane partial sums are merged in z order
inline double ssim_global(const Volume& reference, const Volume& test, double c1 = kSsimC1,
                          double c2 = kSsimC2) {
    require_same_dims(reference, test, "ssim_global");
    const int X = reference.dims[0], Y = reference.dims[1], Z = reference.dims[2];
    if (X < 3 || Y < 3 || Z < 3)
        throw ValueError("ssim_global needs every dimension >= 3, got " +
                         reference.dims_string());

    std::vector<double> plane_sums(static_cast<std::size_t>(Z - 2), 0.0);
    parallel_for(Z - 2, [&](std::int64_t zi) {
        const int z = static_cast<int>(zi) + 1;
        double acc = 0.0;
        float wx[27], wy[27];
        for (int y = 1; y + 1 < Y; ++y)
            for (int x = 1; x + 1 < X; ++x) {
                int i = 0;
                for (int dz = -1; dz <= 1; ++dz)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx, ++i) {
                            wx[i] = reference.at(x + dx, y + dy, z + dz);
                            wy[i] = test.at(x + dx, y + dy, z + dz);
                        }
                acc += ssim_local(wx, wy, c1, c2);
            }
        plane_sums[static_cast<std::size_t>(zi)] = acc;
    });
    double total = 0.0;
    for (double p : plane_sums)
        total += p;
    const double count = static_cast<double>(X - 2) * (Y - 2) * (Z - 2);
    return total / count;
}

struct MetricReport {
    double psnr_db = 0.0;
    double ssim_global = 0.0;
    double rmse = 0.0;
};

inline MetricReport evaluate_pair(const Volume& reference, const Volume& test,
                                  double c1 = kSsimC1, double c2 = kSsimC2) {
    MetricReport r;
    r.rmse = rmse(reference, test);
    r.psnr_db = r.rmse == 0.0 ? std::numeric_limits<double>::infinity()
                              : 20.0 * std::log10(255.0 / r.rmse);
    r.ssim_global = ssim_global(reference, test, c1, c2);
    return r;
}

} // namespace mcdn
