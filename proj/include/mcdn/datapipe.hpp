#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mcdn/bytesio.hpp"
#include "mcdn/noise.hpp"
#include "mcdn/rng.hpp"
#include "mcdn/tensor.hpp"
#include "mcdn/volume.hpp"

// Training data assembly: 5-slice stacks with edge replication at the volume
// boundary, sliding-window patch extraction, and the two training regimes
// (noise-specific and general). Patch sets are lazy: they hold volume
// references plus coordinates and materialize tensors on demand, so the
// 150k-patch configuration does not hold 150k tensors in memory.

namespace mcdn {

constexpr int kStackSlices = 5;

// Tensor [H, W, 5] whose channels are slices s-2..s+2 of the volume, with
// out-of-range slice indices clamped to the nearest valid slice.
inline Tensor make_stack(const Volume& vol, int slice) {
    const int X = vol.dims[0], Y = vol.dims[1], Z = vol.dims[2];
    if (slice < 0 || slice >= Z)
        throw ValueError("slice index " + std::to_string(slice) + " out of range [0, " +
                         std::to_string(Z) + ")");
    Tensor stack({Y, X, kStackSlices});
    for (int c = 0; c < kStackSlices; ++c) {
        const int z = std::clamp(slice - 2 + c, 0, Z - 1);
        for (int y = 0; y < Y; ++y)
            for (int x = 0; x < X; ++x)
                stack.at(y, x, c) = vol.at(x, y, z);
    }
    return stack;
}

struct PatchSample {
    Tensor noisy_stack;  // [P, P, 5]
    Tensor clean_center; // [P, P]
    Tensor noisy_center; // [P, P]
    double level_percent = 0.0;
};

struct PatchDataset {
    virtual ~PatchDataset() = default;
    virtual std::size_t size() const = 0;
    virtual PatchSample get(std::size_t i) const = 0;
};

struct VolumePair {
    std::shared_ptr<const Volume> clean;
    std::shared_ptr<const Volume> noisy;
    double level_percent = 0.0;
};

struct PatchCoord {
    int pair;  // index into PatchSet::pairs
    int slice; // center slice
    int row;   // top edge (y)
    int col;   // left edge (x)
};

class PatchSet : public PatchDataset {
public:
    int patch = 60;
    std::vector<VolumePair> pairs;
    std::vector<PatchCoord> coords;

    std::size_t size() const override { return coords.size(); }

    PatchSample get(std::size_t i) const override {
        const PatchCoord& pc = coords[i];
        const VolumePair& vp = pairs[static_cast<std::size_t>(pc.pair)];
        const Volume& clean = *vp.clean;
        const Volume& noisy = *vp.noisy;
        const int Z = noisy.dims[2];

        PatchSample s;
        s.level_percent = vp.level_percent;
        s.noisy_stack = Tensor({patch, patch, kStackSlices});
        s.clean_center = Tensor({patch, patch});
        s.noisy_center = Tensor({patch, patch});
        for (int c = 0; c < kStackSlices; ++c) {
            const int z = std::clamp(pc.slice - 2 + c, 0, Z - 1);
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x)
                    s.noisy_stack.at(y, x, c) = noisy.at(pc.col + x, pc.row + y, z);
        }
        for (int y = 0; y < patch; ++y)
            for (int x = 0; x < patch; ++x) {
                s.clean_center.at(y, x) = clean.at(pc.col + x, pc.row + y, pc.slice);
                s.noisy_center.at(y, x) = noisy.at(pc.col + x, pc.row + y, pc.slice);
            }
        return s;
    }
};

namespace detail {

// grid positions along one axis: floor((extent - patch) / stride) + 1
inline int grid_count(int extent, int patch, int stride) {
    return (extent - patch) / stride + 1;
}

inline void append_grid_coords(PatchSet& set, int pair_index, const Volume& vol, int patch,
                               int stride) {
    const int X = vol.dims[0], Y = vol.dims[1], Z = vol.dims[2];
    if (patch > X || patch > Y)
        throw ValueError("patch size " + std::to_string(patch) + " exceeds slice extent " +
                         std::to_string(X) + "x" + std::to_string(Y));
    const int nx = grid_count(X, patch, stride);
    const int ny = grid_count(Y, patch, stride);
    for (int z = 0; z < Z; ++z)
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix)
                set.coords.push_back({pair_index, z, iy * stride, ix * stride});
}

// seeded uniform subsample (and shuffle) down to at most target_count
inline void subsample_coords(PatchSet& set, std::size_t target_count, Rng& rng) {
    shuffle(set.coords, rng);
    if (set.coords.size() > target_count)
        set.coords.resize(target_count);
}

} // namespace detail

// Slide a patch x patch window with the given stride over every slice of the
// volume pair; when the grid yields more than target_count positions,
// subsample uniformly at random (seeded) to exactly target_count.
inline PatchSet extract_patches(std::shared_ptr<const Volume> noisy,
                                std::shared_ptr<const Volume> clean, int patch,
                                std::size_t target_count, int stride, std::uint64_t seed,
                                double level_percent = 0.0) {
    if (!noisy || !clean)
        throw ValueError("extract_patches requires both volumes");
    require_same_dims(*noisy, *clean, "extract_patches");
    if (stride < 1)
        throw ValueError("stride must be positive");
    PatchSet set;
    set.patch = patch;
    set.pairs.push_back({std::move(clean), std::move(noisy), level_percent});
    detail::append_grid_coords(set, 0, *set.pairs[0].noisy, patch, stride);
    Rng rng(seed);
    detail::subsample_coords(set, target_count, rng);
    return set;
}

struct Regime {
    enum class Kind { specific, general };
    Kind kind = Kind::specific;
    double level = 0.0;         // specific
    std::vector<double> levels; // general

    static Regime specific(double level_percent) {
        Regime r;
        r.kind = Kind::specific;
        r.level = level_percent;
        return r;
    }
    static Regime general(std::vector<double> level_percents = noise_sweep_levels()) {
        if (level_percents.empty())
            throw ValueError("general regime needs at least one noise level");
        Regime r;
        r.kind = Kind::general;
        r.levels = std::move(level_percents);
        return r;
    }
};

struct PatchConfig {
    int patch = 60;
    int stride = 20;
    std::size_t target_count = 150000;
};

// Specific regime: every volume corrupted at the single level. General
// regime: every volume corrupted once per level, patches pooled over all
// (volume, level) pairs. Both pools are then subsampled to target_count.
inline PatchSet build_training_set(const std::vector<std::shared_ptr<const Volume>>& clean_volumes,
                                   const Regime& regime, const PatchConfig& config,
                                   std::uint64_t seed) {
    if (clean_volumes.empty())
        throw ValueError("build_training_set requires at least one volume");
    const std::vector<double> levels =
        regime.kind == Regime::Kind::specific ? std::vector<double>{regime.level} : regime.levels;

    PatchSet set;
    set.patch = config.patch;
    int pair_index = 0;
    for (std::size_t v = 0; v < clean_volumes.size(); ++v) {
        const std::shared_ptr<const Volume>& clean = clean_volumes[v];
        if (!clean)
            throw ValueError("build_training_set: null volume");
        for (std::size_t li = 0; li < levels.size(); ++li) {
            const NoiseLevel level =
                NoiseLevel::from_percent(levels[li], static_cast<double>(clean->max_value()));
            const std::uint64_t nseed = mix64(seed, v * 257 + li + 1);
            auto noisy = std::make_shared<Volume>(add_rician(*clean, level, nseed));
            set.pairs.push_back({clean, std::move(noisy), levels[li]});
            detail::append_grid_coords(set, pair_index, *set.pairs.back().noisy, config.patch,
                                       config.stride);
            ++pair_index;
        }
    }
    Rng rng(mix64(seed, 0));
    detail::subsample_coords(set, config.target_count, rng);
    return set;
}

// In-memory dataset, e.g. loaded from a patch cache file.
class InMemoryPatches : public PatchDataset {
public:
    std::vector<PatchSample> samples;

    std::size_t size() const override { return samples.size(); }
    PatchSample get(std::size_t i) const override { return samples[i]; }
};

// ---- on-disk patch cache ----
// <path>: per sample noisy_stack | clean_center | noisy_center | level as
// little-endian f32; <path>.json: counts and shapes.

inline void save_patch_cache(const PatchDataset& data, const std::string& path) {
    if (data.size() == 0)
        throw ValueError("refusing to write an empty patch cache");
    const PatchSample first = data.get(0);
    const int patch = first.clean_center.dim(0);

    std::vector<std::uint8_t> buf;
    const std::size_t record_floats =
        first.noisy_stack.size() + first.clean_center.size() + first.noisy_center.size() + 1;
    buf.reserve(data.size() * record_floats * 4);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const PatchSample s = i == 0 ? first : data.get(i);
        for (std::size_t j = 0; j < s.noisy_stack.size(); ++j)
            put_f32_le(buf, s.noisy_stack[j]);
        for (std::size_t j = 0; j < s.clean_center.size(); ++j)
            put_f32_le(buf, s.clean_center[j]);
        for (std::size_t j = 0; j < s.noisy_center.size(); ++j)
            put_f32_le(buf, s.noisy_center[j]);
        put_f32_le(buf, static_cast<float>(s.level_percent));
    }
    write_file_bytes(path, buf);

    nlohmann::json meta;
    meta["count"] = data.size();
    meta["patch"] = patch;
    meta["stack_channels"] = kStackSlices;
    meta["record_floats"] = record_floats;
    meta["byte_order"] = "little";
    meta["fields"] = {"noisy_stack", "clean_center", "noisy_center", "level_percent"};
    std::ofstream js(path + ".json");
    if (!js)
        throw IoError("cannot write patch cache sidecar: " + path + ".json");
    js << meta.dump(2) << "\n";
}

inline InMemoryPatches load_patch_cache(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js)
        throw IoError("cannot open patch cache sidecar: " + path + ".json");
    nlohmann::json meta = nlohmann::json::parse(js);
    const std::size_t count = meta.at("count").get<std::size_t>();
    const int patch = meta.at("patch").get<int>();
    const int channels = meta.at("stack_channels").get<int>();
    if (channels != kStackSlices)
        throw IoError("patch cache has " + std::to_string(channels) +
                      " stack channels, expected " + std::to_string(kStackSlices));

    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    const std::size_t pp = static_cast<std::size_t>(patch) * patch;
    const std::size_t record_floats = pp * kStackSlices + 2 * pp + 1;
    if (bytes.size() != count * record_floats * 4)
        throw IoError("patch cache " + path + " has " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(count * record_floats * 4));

    InMemoryPatches out;
    out.samples.resize(count);
    const std::uint8_t* p = bytes.data();
    for (std::size_t i = 0; i < count; ++i) {
        PatchSample& s = out.samples[i];
        s.noisy_stack = Tensor({patch, patch, kStackSlices});
        s.clean_center = Tensor({patch, patch});
        s.noisy_center = Tensor({patch, patch});
        for (std::size_t j = 0; j < s.noisy_stack.size(); ++j, p += 4)
            s.noisy_stack[j] = get_f32_le(p);
        for (std::size_t j = 0; j < pp; ++j, p += 4)
            s.clean_center[j] = get_f32_le(p);
        for (std::size_t j = 0; j < pp; ++j, p += 4)
            s.noisy_center[j] = get_f32_le(p);
        s.level_percent = get_f32_le(p);
        p += 4;
    }
    return out;
}

} // namespace mcdn
