#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "svt/tsdf.hpp"

namespace svt {

struct TriangleMesh {
    std::vector<std::array<double, 3>> vertices;
    std::vector<std::array<uint32_t, 3>> triangles;
    std::vector<std::array<double, 3>> normals;  // optional, empty or per-vertex

    bool empty() const { return triangles.empty(); }
    void validate() const;  // throws StructuralError on bad indices / degenerate faces
};

// Table-driven iso-surface extraction with linear interpolation along cell
// edges. Grid values live on nodes at origin + index * voxel_size. An
// all-positive or all-negative grid yields an empty mesh.
TriangleMesh marching_cubes(const TsdfVolume& tsdf, double iso = 0.0);

// Optional epsilon-weld: merges vertices closer than eps and drops collapsed
// triangles. Used to thin meshes before point sampling.
TriangleMesh weld_vertices(const TriangleMesh& mesh, double eps);

// Binary little-endian PLY: float x/y/z vertices, uchar-count uint triangles.
void export_ply(std::ostream& os, const TriangleMesh& mesh);
TriangleMesh import_ply(std::istream& is);
void save_ply_file(const std::string& path, const TriangleMesh& mesh);
TriangleMesh load_ply_file(const std::string& path);

// Plain-text XYZ point dump for metric debugging.
void export_xyz(std::ostream& os, const std::vector<std::array<double, 3>>& points);

namespace mc_tables {
extern const int kEdgeTable[256];
extern const int kTriTable[256][16];
}  // namespace mc_tables

}  // namespace svt
