#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "svt/errors.hpp"
#include "svt/tensor.hpp"

namespace svt {

struct VoxelCoord {
    int32_t x = 0, y = 0, z = 0;
    friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
};

inline VoxelCoord operator+(VoxelCoord a, VoxelCoord b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline VoxelCoord operator-(VoxelCoord a, VoxelCoord b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }

struct VoxelCoordHash {
    size_t operator()(const VoxelCoord& c) const {
        // 64-bit mix of the three indices; any deterministic mixing works.
        uint64_t h = static_cast<uint32_t>(c.x);
        h = h * 0x9e3779b97f4a7c15ULL ^ (static_cast<uint64_t>(static_cast<uint32_t>(c.y)) << 21);
        h = h * 0xbf58476d1ce4e5b9ULL ^ (static_cast<uint64_t>(static_cast<uint32_t>(c.z)) << 42);
        h ^= h >> 31;
        return static_cast<size_t>(h * 0x94d049bb133111ebULL);
    }
};

struct Dims3 {
    int x = 0, y = 0, z = 0;
    bool contains(VoxelCoord c) const {
        return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < x && c.y < y && c.z < z;
    }
    int64_t total() const { return int64_t(x) * y * z; }
    Dims3 halved() const { return {(x + 1) / 2, (y + 1) / 2, (z + 1) / 2}; }
    friend bool operator==(const Dims3&, const Dims3&) = default;
};

inline VoxelCoord parent_of(VoxelCoord c) {
    auto fl = [](int32_t v) { return static_cast<int32_t>(std::floor(v / 2.0)); };
    return {fl(c.x), fl(c.y), fl(c.z)};
}

// Sparse feature volume: sorted coordinate list + hash index + row-major
// feature matrix [N, channels]. Coordinates stay lexicographically sorted so
// iteration order is deterministic.
class SparseVolume {
public:
    int level = 0;
    double voxel_size = 0.04;
    Dims3 dims;
    int channels = 0;

    SparseVolume() = default;
    SparseVolume(int lvl, double vs, Dims3 d, int ch) : level(lvl), voxel_size(vs), dims(d), channels(ch) {}

    // Coordinates need not be pre-sorted; features row e corresponds to coords[e].
    void assign(std::vector<VoxelCoord> coords, Tensor<double> feats) {
        if (static_cast<int>(coords.size()) != feats.rows || feats.cols != channels)
            throw StructuralError("SparseVolume::assign: feature shape mismatch");
        std::vector<int> order(coords.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return coords[a] < coords[b]; });
        coords_.resize(coords.size());
        feats_ = Tensor<double>(feats.rows, channels);
        index_.clear();
        index_.reserve(coords.size() * 2);
        for (size_t i = 0; i < order.size(); ++i) {
            const VoxelCoord c = coords[order[i]];
            if (!dims.contains(c)) throw StructuralError("SparseVolume: coordinate outside dims");
            coords_[i] = c;
            if (!index_.emplace(c, static_cast<int>(i)).second)
                throw StructuralError("SparseVolume: duplicate coordinate");
            std::copy(feats.row(order[i]), feats.row(order[i]) + channels, feats_.row(static_cast<int>(i)));
        }
    }

    void assign_zero(std::vector<VoxelCoord> coords) {
        const int n = static_cast<int>(coords.size());
        assign(std::move(coords), Tensor<double>(n, channels));
    }

    int count() const { return static_cast<int>(coords_.size()); }
    const std::vector<VoxelCoord>& coords() const { return coords_; }
    const Tensor<double>& features() const { return feats_; }
    Tensor<double>& features_mut() { return feats_; }

    int row_of(VoxelCoord c) const {
        auto it = index_.find(c);
        return it == index_.end() ? -1 : it->second;
    }
    bool active(VoxelCoord c) const { return index_.count(c) != 0; }

private:
    std::vector<VoxelCoord> coords_;
    Tensor<double> feats_;
    std::unordered_map<VoxelCoord, int, VoxelCoordHash> index_;
};

// Scalar occupancy in [0,1] over active voxels; same indexing scheme.
class OccupancyVolume {
public:
    int level = 0;
    double voxel_size = 0.0;
    Dims3 dims;

    void assign(std::vector<VoxelCoord> coords, std::vector<double> values) {
        if (coords.size() != values.size()) throw StructuralError("OccupancyVolume: size mismatch");
        std::vector<int> order(coords.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return coords[a] < coords[b]; });
        coords_.resize(coords.size());
        values_.resize(values.size());
        index_.clear();
        for (size_t i = 0; i < order.size(); ++i) {
            const double v = values[order[i]];
            if (v < 0.0 || v > 1.0) throw StructuralError("OccupancyVolume: value outside [0,1]");
            coords_[i] = coords[order[i]];
            values_[i] = v;
            if (!index_.emplace(coords_[i], static_cast<int>(i)).second)
                throw StructuralError("OccupancyVolume: duplicate coordinate");
        }
    }

    int count() const { return static_cast<int>(coords_.size()); }
    const std::vector<VoxelCoord>& coords() const { return coords_; }
    const std::vector<double>& values() const { return values_; }
    // Occupancy of an absent coordinate is 0.
    double value_at(VoxelCoord c) const {
        auto it = index_.find(c);
        return it == index_.end() ? 0.0 : values_[it->second];
    }

private:
    std::vector<VoxelCoord> coords_;
    std::vector<double> values_;
    std::unordered_map<VoxelCoord, int, VoxelCoordHash> index_;
};

// One downsampling step: which fine rows were grouped under each coarse
// coordinate. children_of[p] indexes rows of the fine volume; parents aligns
// with the rows of the coarse volume.
struct SampleMap {
    std::vector<VoxelCoord> parents;
    std::vector<std::vector<int>> children_rows;
    std::vector<VoxelCoord> child_coords;  // flattened, aligned with fine rows
};

// ---- voxel-core operations ----

// Retains voxels whose coarser-level parent occupancy is >= threshold.
inline SparseVolume sparsify(const SparseVolume& vol, const OccupancyVolume& occ, double threshold) {
    if (occ.level != vol.level + 1)
        throw StructuralError("sparsify: occupancy must come from the next coarser level");
    std::vector<VoxelCoord> keep;
    std::vector<int> rows;
    for (int i = 0; i < vol.count(); ++i) {
        const VoxelCoord c = vol.coords()[i];
        if (occ.value_at(parent_of(c)) >= threshold) {
            keep.push_back(c);
            rows.push_back(i);
        }
    }
    Tensor<double> f(static_cast<int>(rows.size()), vol.channels);
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy(vol.features().row(rows[i]), vol.features().row(rows[i]) + vol.channels,
                  f.row(static_cast<int>(i)));
    SparseVolume out(vol.level, vol.voxel_size, vol.dims, vol.channels);
    out.assign(std::move(keep), std::move(f));
    return out;
}

// Window span per axis: center - floor(n/2) ... center + (n - 1 - floor(n/2)).
// Odd n gives the symmetric center +/- (n-1)/2 window of n^3 cells; even n is
// the asymmetric n^3-cell window biased one cell low.
struct WindowSpan {
    int lo, hi;  // inclusive offsets
    explicit WindowSpan(int n) : lo(-(n / 2)), hi(n - 1 - n / 2) {}
};

inline std::vector<VoxelCoord> window_neighbors(const SparseVolume& vol, VoxelCoord center, int n) {
    if (!vol.active(center)) throw std::invalid_argument("window_neighbors: center is not active");
    const WindowSpan w(n);
    std::vector<VoxelCoord> out;
    for (int dx = w.lo; dx <= w.hi; ++dx)
        for (int dy = w.lo; dy <= w.hi; ++dy)
            for (int dz = w.lo; dz <= w.hi; ++dz) {
                const VoxelCoord c{center.x + dx, center.y + dy, center.z + dz};
                if (vol.active(c)) out.push_back(c);
            }
    std::sort(out.begin(), out.end());
    return out;
}

// 3x3x3 morphological dilation of the active set, clipped to dims. New voxels
// carry zero features; existing voxels keep theirs.
inline SparseVolume dilate(const SparseVolume& vol) {
    std::unordered_map<VoxelCoord, int, VoxelCoordHash> seen;
    std::vector<VoxelCoord> coords;
    for (int i = 0; i < vol.count(); ++i) {
        const VoxelCoord c = vol.coords()[i];
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    const VoxelCoord d{c.x + dx, c.y + dy, c.z + dz};
                    if (vol.dims.contains(d) && seen.emplace(d, 0).second) coords.push_back(d);
                }
    }
    Tensor<double> f(static_cast<int>(coords.size()), vol.channels);
    for (size_t i = 0; i < coords.size(); ++i) {
        const int r = vol.row_of(coords[i]);
        if (r >= 0)
            std::copy(vol.features().row(r), vol.features().row(r) + vol.channels,
                      f.row(static_cast<int>(i)));
    }
    SparseVolume out(vol.level, vol.voxel_size, vol.dims, vol.channels);
    out.assign(std::move(coords), std::move(f));
    return out;
}

// Groups active coordinates under floor(c/2); parent feature is the mean of
// its children. Children are recorded in the SampleMap for exact inversion.
inline std::pair<SparseVolume, SampleMap> downsample(const SparseVolume& vol) {
    std::unordered_map<VoxelCoord, int, VoxelCoordHash> pidx;
    std::vector<VoxelCoord> parents;
    std::vector<std::vector<int>> groups;
    for (int i = 0; i < vol.count(); ++i) {
        const VoxelCoord p = parent_of(vol.coords()[i]);
        auto [it, fresh] = pidx.emplace(p, static_cast<int>(parents.size()));
        if (fresh) {
            parents.push_back(p);
            groups.emplace_back();
        }
        groups[it->second].push_back(i);
    }
    // Order parents lexicographically so the map matches the volume's rows.
    std::vector<int> order(parents.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return parents[a] < parents[b]; });

    SampleMap map;
    map.child_coords = vol.coords();
    Tensor<double> f(static_cast<int>(parents.size()), vol.channels);
    std::vector<VoxelCoord> pc(parents.size());
    for (size_t i = 0; i < order.size(); ++i) {
        pc[i] = parents[order[i]];
        const auto& g = groups[order[i]];
        double* fr = f.row(static_cast<int>(i));
        for (int r : g)
            for (int j = 0; j < vol.channels; ++j) fr[j] += vol.features().at(r, j);
        for (int j = 0; j < vol.channels; ++j) fr[j] /= static_cast<double>(g.size());
        map.parents.push_back(pc[i]);
        map.children_rows.push_back(g);
    }
    SparseVolume out(vol.level, vol.voxel_size * 2.0, vol.dims.halved(), vol.channels);
    out.assign(std::move(pc), std::move(f));
    return {std::move(out), std::move(map)};
}

// Restores exactly the child set recorded in the map; each child receives its
// parent's feature verbatim.
inline SparseVolume upsample(const SparseVolume& vol, const SampleMap& map) {
    Tensor<double> f(static_cast<int>(map.child_coords.size()), vol.channels);
    for (size_t p = 0; p < map.parents.size(); ++p) {
        const int pr = vol.row_of(map.parents[p]);
        if (pr < 0) throw StructuralError("upsample: parent missing from volume");
        for (int cr : map.children_rows[p])
            std::copy(vol.features().row(pr), vol.features().row(pr) + vol.channels, f.row(cr));
    }
    // The fine dims are not stored in the map; the parent grid doubled bounds
    // every recorded child.
    SparseVolume out(vol.level, vol.voxel_size / 2.0,
                     Dims3{vol.dims.x * 2, vol.dims.y * 2, vol.dims.z * 2}, vol.channels);
    out.assign(map.child_coords, std::move(f));
    return out;
}

}  // namespace svt
