#pragma once

#include <array>
#include <cmath>

#include "mcdn/rng.hpp"
#include "mcdn/volume.hpp"

// Synthetic ground-truth volumes: nested ellipsoids at graded intensities on
// a dark background, plus a gentle intensity ramp so slices are not piecewise
// constant. Intensities span [0, 255]; the seed jitters geometry so distinct
// seeds give distinct anatomy.

namespace mcdn {

inline Volume make_phantom(int x_dim, int y_dim, int z_dim, std::uint64_t seed) {
    Volume vol(x_dim, y_dim, z_dim);
    Rng rng(seed);

    struct Ellipsoid {
        double cx, cy, cz; // center, relative to volume extent
        double rx, ry, rz; // semi-axes, relative
        float intensity;
    };

    std::array<Ellipsoid, 5> shells{};
    const double jx = 0.05 * (rng.next_unit() - 0.5);
    const double jy = 0.05 * (rng.next_unit() - 0.5);
    const double jz = 0.05 * (rng.next_unit() - 0.5);
    const float base[5] = {90.0f, 140.0f, 200.0f, 120.0f, 255.0f};
    double r = 0.46;
    for (int i = 0; i < 5; ++i) {
        shells[static_cast<std::size_t>(i)] = {0.5 + jx,
                                               0.5 + jy,
                                               0.5 + jz,
                                               r,
                                               r * (0.85 + 0.1 * rng.next_unit()),
                                               r * (0.9 + 0.1 * rng.next_unit()),
                                               base[i]};
        r *= 0.72;
    }

    // a few small off-center blobs for structure variety
    struct Blob {
        double cx, cy, cz, radius;
        float intensity;
    };
    std::array<Blob, 3> blobs{};
    for (auto& b : blobs) {
        b.cx = 0.25 + 0.5 * rng.next_unit();
        b.cy = 0.25 + 0.5 * rng.next_unit();
        b.cz = 0.25 + 0.5 * rng.next_unit();
        b.radius = 0.04 + 0.05 * rng.next_unit();
        b.intensity = static_cast<float>(40.0 + 180.0 * rng.next_unit());
    }

    const double ramp_x = 0.2 * rng.next_unit();
    const double ramp_y = 0.2 * rng.next_unit();

    for (int z = 0; z < z_dim; ++z) {
        const double fz = (z + 0.5) / z_dim;
        for (int y = 0; y < y_dim; ++y) {
            const double fy = (y + 0.5) / y_dim;
            for (int x = 0; x < x_dim; ++x) {
                const double fx = (x + 0.5) / x_dim;
                float value = 0.0f;
                for (const auto& e : shells) {
                    const double dx = (fx - e.cx) / e.rx;
                    const double dy = (fy - e.cy) / e.ry;
                    const double dz = (fz - e.cz) / e.rz;
                    if (dx * dx + dy * dy + dz * dz <= 1.0)
                        value = e.intensity;
                }
                for (const auto& b : blobs) {
                    const double dx = fx - b.cx;
                    const double dy = fy - b.cy;
                    const double dz = fz - b.cz;
                    if (dx * dx + dy * dy + dz * dz <= b.radius * b.radius)
                        value = b.intensity;
                }
                if (value > 0.0f)
                    value *= static_cast<float>(1.0 - ramp_x * fx - ramp_y * fy);
                vol.at(x, y, z) = value;
            }
        }
    }
    return vol;
}

} // namespace mcdn
