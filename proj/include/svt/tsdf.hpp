#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "svt/errors.hpp"
#include "svt/volume.hpp"

namespace svt {

// Dense truncated signed distance grid, values normalized to [-1, 1] by the
// truncation distance. Voxels that never fell inside the truncation band are
// stored as +1 and flagged free-space so ground-truth occupancy can tell them
// apart from band-boundary voxels.
struct TsdfVolume {
    Dims3 dims;
    double voxel_size = 0.04;
    std::array<double, 3> origin = {0, 0, 0};
    std::vector<double> values;      // dims.x * dims.y * dims.z, x-major
    std::vector<uint8_t> free_space;  // 1 = untruncated free space

    TsdfVolume() = default;
    TsdfVolume(Dims3 d, double vs, std::array<double, 3> org)
        : dims(d),
          voxel_size(vs),
          origin(org),
          values(static_cast<size_t>(d.total()), 1.0),
          free_space(static_cast<size_t>(d.total()), 1) {}

    size_t index(int x, int y, int z) const {
        return (static_cast<size_t>(x) * dims.y + y) * dims.z + z;
    }
    double at(int x, int y, int z) const { return values[index(x, y, z)]; }
    void set(int x, int y, int z, double v, bool free = false) {
        if (v < -1.0 || v > 1.0) throw StructuralError("TsdfVolume: value outside [-1,1]");
        values[index(x, y, z)] = v;
        free_space[index(x, y, z)] = free ? 1 : 0;
    }
    std::array<double, 3> world(int x, int y, int z) const {
        return {origin[0] + x * voxel_size, origin[1] + y * voxel_size, origin[2] + z * voxel_size};
    }
};

}  // namespace svt
