#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcdn/bytesio.hpp"
#include "mcdn/volume.hpp"

// Minimal single-file uncompressed NIfTI-1 (.nii) support: 348-byte header,
// magic "n+1\0", datatypes 2 (uint8), 4 (int16) and 16 (float32), dim[0] of 3
// (or 4 with a single frame). Byte order is detected from the dim[0]
// plausibility check; scl_slope/scl_inter are applied when scl_slope != 0.
// The writer emits little-endian float32 with vox_offset 352. Orientation
// matrices are not interpreted.

namespace mcdn {
namespace nifti {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

// the header fields this reader/writer touches, by byte offset
constexpr int kOffSizeofHdr = 0;   // int32, must be 348
constexpr int kOffDim = 40;        // int16[8]
constexpr int kOffDatatype = 70;   // int16
constexpr int kOffBitpix = 72;     // int16
constexpr int kOffPixdim = 76;     // float[8]
constexpr int kOffVoxOffset = 108; // float
constexpr int kOffSclSlope = 112;  // float
constexpr int kOffSclInter = 116;  // float
constexpr int kOffMagic = 344;     // char[4], "n+1\0"

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

namespace detail {

inline std::uint16_t load_u16(const std::uint8_t* p, bool swap) {
    return swap ? static_cast<std::uint16_t>((p[0] << 8) | p[1]) : get_u16_le(p);
}

inline std::int16_t load_i16(const std::uint8_t* p, bool swap) {
    return static_cast<std::int16_t>(load_u16(p, swap));
}

inline std::uint32_t load_u32(const std::uint8_t* p, bool swap) {
    if (!swap)
        return get_u32_le(p);
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline std::int32_t load_i32(const std::uint8_t* p, bool swap) {
    return static_cast<std::int32_t>(load_u32(p, swap));
}

inline float load_f32(const std::uint8_t* p, bool swap) {
    const std::uint32_t bits = load_u32(p, swap);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace detail

} // namespace nifti

inline Volume read_nifti(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    if (bytes.size() < static_cast<std::size_t>(nifti::kHeaderSize))
        throw IoError("nifti " + path + ": file shorter than the 348-byte header (" +
                      std::to_string(bytes.size()) + " bytes)");
    const std::uint8_t* h = bytes.data();

    // byte order: dim[0] must be a sensible rank in one of the two orders
    std::int16_t dim0 = nifti::detail::load_i16(h + nifti::kOffDim, false);
    bool swap = false;
    if (dim0 < 1 || dim0 > 7) {
        dim0 = nifti::detail::load_i16(h + nifti::kOffDim, true);
        swap = true;
        if (dim0 < 1 || dim0 > 7)
            throw IoError("nifti " + path + ": dim[0] is implausible in either byte order");
    }

    const std::int32_t sizeof_hdr = nifti::detail::load_i32(h + nifti::kOffSizeofHdr, swap);
    if (sizeof_hdr != nifti::kHeaderSize)
        throw IoError("nifti " + path + ": sizeof_hdr is " + std::to_string(sizeof_hdr) +
                      ", expected 348");
    if (!(h[nifti::kOffMagic] == 'n' && h[nifti::kOffMagic + 1] == '+' &&
          h[nifti::kOffMagic + 2] == '1' && h[nifti::kOffMagic + 3] == '\0'))
        throw IoError("nifti " + path + ": magic is not \"n+1\" (two-file .hdr/.img pairs and "
                      "other formats are unsupported)");

    std::int16_t dim[8];
    for (int i = 0; i < 8; ++i)
        dim[i] = nifti::detail::load_i16(h + nifti::kOffDim + 2 * i, swap);
    if (!(dim[0] == 3 || (dim[0] == 4 && dim[4] == 1)))
        throw IoError("nifti " + path + ": dim[0]=" + std::to_string(dim[0]) +
                      " unsupported (need a 3D volume, or 4D with a single frame)");
    const int X = dim[1], Y = dim[2], Z = dim[3];
    if (X < 1 || Y < 1 || Z < 1)
        throw IoError("nifti " + path + ": non-positive extents in dim[]");

    const std::int16_t datatype = nifti::detail::load_i16(h + nifti::kOffDatatype, swap);
    int bytes_per_voxel = 0;
    switch (datatype) {
    case nifti::kDtUint8: bytes_per_voxel = 1; break;
    case nifti::kDtInt16: bytes_per_voxel = 2; break;
    case nifti::kDtFloat32: bytes_per_voxel = 4; break;
    default:
        throw IoError("nifti " + path + ": unsupported datatype " + std::to_string(datatype) +
                      " (supported: 2, 4, 16)");
    }

    const float vox_offset_f = nifti::detail::load_f32(h + nifti::kOffVoxOffset, swap);
    const std::size_t vox_offset = static_cast<std::size_t>(vox_offset_f);
    if (vox_offset_f < nifti::kHeaderSize)
        throw IoError("nifti " + path + ": vox_offset " + std::to_string(vox_offset_f) +
                      " overlaps the header");
    const float scl_slope = nifti::detail::load_f32(h + nifti::kOffSclSlope, swap);
    const float scl_inter = nifti::detail::load_f32(h + nifti::kOffSclInter, swap);

    Volume vol(X, Y, Z);
    const std::size_t count = vol.voxels.size();
    if (bytes.size() < vox_offset + count * static_cast<std::size_t>(bytes_per_voxel))
        throw IoError("nifti " + path + ": data section truncated (need " +
                      std::to_string(count * static_cast<std::size_t>(bytes_per_voxel)) +
                      " bytes at offset " + std::to_string(vox_offset) + ", file has " +
                      std::to_string(bytes.size()) + ")");

    const std::uint8_t* d = bytes.data() + vox_offset;
    for (std::size_t i = 0; i < count; ++i) {
        float v = 0.0f;
        switch (datatype) {
        case nifti::kDtUint8: v = static_cast<float>(d[i]); break;
        case nifti::kDtInt16:
            v = static_cast<float>(nifti::detail::load_i16(d + 2 * i, swap));
            break;
        case nifti::kDtFloat32: v = nifti::detail::load_f32(d + 4 * i, swap); break;
        default: break;
        }
        if (scl_slope != 0.0f)
            v = v * scl_slope + scl_inter;
        vol.voxels[i] = v;
    }
    return vol;
}

inline void write_nifti(const Volume& vol, const std::string& path) {
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(nifti::kVoxOffset), 0);
    auto put_i16_at = [&](int off, std::int16_t v) {
        bytes[static_cast<std::size_t>(off)] = static_cast<std::uint8_t>(v & 0xff);
        bytes[static_cast<std::size_t>(off) + 1] = static_cast<std::uint8_t>((v >> 8) & 0xff);
    };
    auto put_u32_at = [&](int off, std::uint32_t v) {
        for (int i = 0; i < 4; ++i)
            bytes[static_cast<std::size_t>(off) + static_cast<std::size_t>(i)] =
                static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
    };
    auto put_f32_at = [&](int off, float v) {
        std::uint32_t b;
        std::memcpy(&b, &v, 4);
        put_u32_at(off, b);
    };

    put_u32_at(nifti::kOffSizeofHdr, nifti::kHeaderSize);
    bytes[38] = 'r'; // regular
    put_i16_at(nifti::kOffDim, 3);
    put_i16_at(nifti::kOffDim + 2, static_cast<std::int16_t>(vol.dims[0]));
    put_i16_at(nifti::kOffDim + 4, static_cast<std::int16_t>(vol.dims[1]));
    put_i16_at(nifti::kOffDim + 6, static_cast<std::int16_t>(vol.dims[2]));
    for (int i = 4; i < 8; ++i)
        put_i16_at(nifti::kOffDim + 2 * i, 1);
    put_i16_at(nifti::kOffDatatype, nifti::kDtFloat32);
    put_i16_at(nifti::kOffBitpix, 32);
    for (int i = 0; i < 8; ++i)
        put_f32_at(nifti::kOffPixdim + 4 * i, 1.0f);
    put_f32_at(nifti::kOffVoxOffset, static_cast<float>(nifti::kVoxOffset));
    put_f32_at(nifti::kOffSclSlope, 1.0f);
    put_f32_at(nifti::kOffSclInter, 0.0f);
    bytes[nifti::kOffMagic] = 'n';
    bytes[nifti::kOffMagic + 1] = '+';
    bytes[nifti::kOffMagic + 2] = '1';
    bytes[nifti::kOffMagic + 3] = '\0';
    // bytes 348..351 stay zero: no header extensions

    bytes.reserve(bytes.size() + vol.voxels.size() * 4);
    for (float v : vol.voxels)
        put_f32_le(bytes, v);
    write_file_bytes(path, bytes);
}

} // namespace mcdn
