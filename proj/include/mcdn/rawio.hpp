#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mcdn/bytesio.hpp"
#include "mcdn/volume.hpp"

// Raw volume format: <path> holds the voxels as little-endian float32 in
// x-fastest order, <path>.json describes them:
//   {"dims": [X, Y, Z], "dtype": "float32", "byte_order": "little",
//    "original_min": m, "original_max": M}

namespace mcdn {

inline void write_raw(const Volume& vol, const std::string& path) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(vol.voxels.size() * 4);
    for (float v : vol.voxels)
        put_f32_le(bytes, v);
    write_file_bytes(path, bytes);

    nlohmann::json meta;
    meta["dims"] = {vol.dims[0], vol.dims[1], vol.dims[2]};
    meta["dtype"] = "float32";
    meta["byte_order"] = "little";
    meta["original_min"] = vol.scale.original_min;
    meta["original_max"] = vol.scale.original_max;
    std::ofstream js(path + ".json");
    if (!js)
        throw IoError("cannot write raw sidecar: " + path + ".json");
    js << meta.dump(2) << "\n";
}

inline Volume read_raw(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js)
        throw IoError("cannot open raw sidecar: " + path + ".json");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("raw sidecar " + path + ".json is not valid JSON: " + e.what());
    }
    const auto dims = meta.at("dims");
    if (!dims.is_array() || dims.size() != 3)
        throw IoError("raw sidecar " + path + ".json: \"dims\" must be a 3-element array");
    if (meta.value("dtype", "float32") != "float32")
        throw IoError("raw volume " + path + ": unsupported dtype " +
                      meta.value("dtype", "?"));

    Volume vol(dims[0].get<int>(), dims[1].get<int>(), dims[2].get<int>());
    if (meta.contains("original_min"))
        vol.scale.original_min = meta["original_min"].get<float>();
    if (meta.contains("original_max"))
        vol.scale.original_max = meta["original_max"].get<float>();

    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    if (bytes.size() != vol.voxels.size() * 4)
        throw IoError("raw volume " + path + ": " + std::to_string(bytes.size()) +
                      " bytes but dims imply " + std::to_string(vol.voxels.size() * 4));
    for (std::size_t i = 0; i < vol.voxels.size(); ++i)
        vol.voxels[i] = get_f32_le(bytes.data() + 4 * i);
    return vol;
}

} // namespace mcdn
