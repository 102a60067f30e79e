#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "svt/errors.hpp"
#include "svt/volume.hpp"

namespace svt {

// "SVOL" container: magic, u32 version, u32 level, f32 voxel_size, u32[3] dims,
// u32 channels, u64 count, then count * (i32[3] coord, f32[channels] feature),
// all little-endian.
namespace detail {
template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("unexpected end of stream");
    return v;
}
}  // namespace detail

inline void save_svol(std::ostream& os, const SparseVolume& vol) {
    using detail::write_pod;
    os.write("SVOL", 4);
    write_pod<uint32_t>(os, 1u);
    write_pod<uint32_t>(os, static_cast<uint32_t>(vol.level));
    write_pod<float>(os, static_cast<float>(vol.voxel_size));
    write_pod<uint32_t>(os, static_cast<uint32_t>(vol.dims.x));
    write_pod<uint32_t>(os, static_cast<uint32_t>(vol.dims.y));
    write_pod<uint32_t>(os, static_cast<uint32_t>(vol.dims.z));
    write_pod<uint32_t>(os, static_cast<uint32_t>(vol.channels));
    write_pod<uint64_t>(os, static_cast<uint64_t>(vol.count()));
    for (int i = 0; i < vol.count(); ++i) {
        const VoxelCoord c = vol.coords()[i];
        write_pod<int32_t>(os, c.x);
        write_pod<int32_t>(os, c.y);
        write_pod<int32_t>(os, c.z);
        for (int j = 0; j < vol.channels; ++j)
            write_pod<float>(os, static_cast<float>(vol.features().at(i, j)));
    }
}

inline SparseVolume load_svol(std::istream& is) {
    using detail::read_pod;
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SVOL", 4) != 0) throw IoError("not an SVOL stream");
    const uint32_t version = read_pod<uint32_t>(is);
    if (version != 1u) throw IoError("unsupported SVOL version");
    SparseVolume vol;
    vol.level = static_cast<int>(read_pod<uint32_t>(is));
    vol.voxel_size = read_pod<float>(is);
    vol.dims.x = static_cast<int>(read_pod<uint32_t>(is));
    vol.dims.y = static_cast<int>(read_pod<uint32_t>(is));
    vol.dims.z = static_cast<int>(read_pod<uint32_t>(is));
    vol.channels = static_cast<int>(read_pod<uint32_t>(is));
    const uint64_t count = read_pod<uint64_t>(is);
    std::vector<VoxelCoord> coords(count);
    Tensor<double> feats(static_cast<int>(count), vol.channels);
    for (uint64_t i = 0; i < count; ++i) {
        coords[i].x = read_pod<int32_t>(is);
        coords[i].y = read_pod<int32_t>(is);
        coords[i].z = read_pod<int32_t>(is);
        for (int j = 0; j < vol.channels; ++j)
            feats.at(static_cast<int>(i), j) = read_pod<float>(is);
    }
    vol.assign(std::move(coords), std::move(feats));
    return vol;
}

inline void save_svol_file(const std::string& path, const SparseVolume& vol) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    save_svol(os, vol);
}

inline SparseVolume load_svol_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return load_svol(is);
}

}  // namespace svt
