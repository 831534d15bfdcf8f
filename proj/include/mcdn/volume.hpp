#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "mcdn/errors.hpp"

namespace mcdn {

// Intensity range of the volume before normalization; lets denormalize invert
// the affine map back to original units.
struct IntensityScale {
    float original_min = 0.0f;
    float original_max = 255.0f;
};

// 3D scalar field, x-fastest voxel ordering.
struct Volume {
    std::array<int, 3> dims{0, 0, 0}; // X, Y, Z
    std::vector<float> voxels;
    IntensityScale scale{};

    Volume() = default;

    Volume(int x, int y, int z) : dims{x, y, z} {
        if (x <= 0 || y <= 0 || z <= 0)
            throw ShapeError("volume extents must be positive, got " + std::to_string(x) + "x" +
                             std::to_string(y) + "x" + std::to_string(z));
        voxels.assign(static_cast<std::size_t>(x) * y * z, 0.0f);
    }

    std::size_t size() const { return voxels.size(); }

    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x;
    }

    float& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
    float at(int x, int y, int z) const { return voxels[index(x, y, z)]; }

    float min_value() const {
        float m = std::numeric_limits<float>::max();
        for (float v : voxels)
            m = v < m ? v : m;
        return m;
    }

    float max_value() const {
        float m = std::numeric_limits<float>::lowest();
        for (float v : voxels)
            m = v > m ? v : m;
        return m;
    }

    std::string dims_string() const {
        return std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "x" +
               std::to_string(dims[2]);
    }
};

inline void require_same_dims(const Volume& a, const Volume& b, const char* what) {
    if (a.dims != b.dims)
        throw ShapeError(std::string(what) + ": volume dims " + a.dims_string() + " vs " +
                         b.dims_string());
}

// Affine map of [min, max] onto [0, 255]; the original range is kept so
// denormalize can invert it.
inline Volume normalize(const Volume& v) {
    const float lo = v.min_value();
    const float hi = v.max_value();
    if (!(hi > lo))
        throw ValueError("cannot normalize a constant volume (min == max == " +
                         std::to_string(lo) + ")");
    Volume out = v;
    const float s = 255.0f / (hi - lo);
    for (float& x : out.voxels)
        x = (x - lo) * s;
    out.scale = {lo, hi};
    return out;
}

inline Volume denormalize(const Volume& v) {
    Volume out = v;
    const float lo = v.scale.original_min;
    const float hi = v.scale.original_max;
    const float s = (hi - lo) / 255.0f;
    for (float& x : out.voxels)
        x = lo + x * s;
    out.scale = {0.0f, 255.0f};
    return out;
}

} // namespace mcdn
