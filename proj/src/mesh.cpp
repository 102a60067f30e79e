#include "svt/mesh.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_map>

#include "svt/errors.hpp"

namespace svt {

void TriangleMesh::validate() const {
    const uint32_t n = static_cast<uint32_t>(vertices.size());
    for (const auto& t : triangles) {
        if (t[0] >= n || t[1] >= n || t[2] >= n)
            throw StructuralError("TriangleMesh: vertex index out of range");
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
            throw StructuralError("TriangleMesh: degenerate face");
    }
    if (!normals.empty() && normals.size() != vertices.size())
        throw StructuralError("TriangleMesh: normal count mismatch");
}

namespace {

// Cell corner offsets, matching the edge/triangle tables.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
// Edge -> corner pair.
constexpr int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

void accumulate_normals(TriangleMesh& mesh) {
    mesh.normals.assign(mesh.vertices.size(), {0, 0, 0});
    for (const auto& t : mesh.triangles) {
        const auto& a = mesh.vertices[t[0]];
        const auto& b = mesh.vertices[t[1]];
        const auto& c = mesh.vertices[t[2]];
        const double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
        const double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
        // cross product, area weighted
        const double nx = uy * vz - uz * vy;
        const double ny = uz * vx - ux * vz;
        const double nz = ux * vy - uy * vx;
        for (int k = 0; k < 3; ++k) {
            mesh.normals[t[k]][0] += nx;
            mesh.normals[t[k]][1] += ny;
            mesh.normals[t[k]][2] += nz;
        }
    }
    for (auto& n : mesh.normals) {
        const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
        if (len > 0) {
            n[0] /= len;
            n[1] /= len;
            n[2] /= len;
        }
    }
}

}  // namespace

TriangleMesh marching_cubes(const TsdfVolume& tsdf, double iso) {
    if (tsdf.dims.x < 2 || tsdf.dims.y < 2 || tsdf.dims.z < 2)
        throw StructuralError("marching_cubes: grid must be at least 2 nodes per axis");

    TriangleMesh mesh;
    // One shared vertex per grid edge; keyed by the lower node's linear index
    // plus the axis (0=x, 1=y, 2=z).
    std::unordered_map<uint64_t, uint32_t> edge_vertex;
    const auto node_id = [&](int x, int y, int z) -> uint64_t {
        return (static_cast<uint64_t>(x) * tsdf.dims.y + y) * tsdf.dims.z + z;
    };

    const auto edge_key = [&](int c0[3], int c1[3]) -> uint64_t {
        int axis = 0;
        if (c1[1] != c0[1]) axis = 1;
        if (c1[2] != c0[2]) axis = 2;
        const int lx = std::min(c0[0], c1[0]);
        const int ly = std::min(c0[1], c1[1]);
        const int lz = std::min(c0[2], c1[2]);
        return node_id(lx, ly, lz) * 3 + axis;
    };

    for (int x = 0; x + 1 < tsdf.dims.x; ++x)
        for (int y = 0; y + 1 < tsdf.dims.y; ++y)
            for (int z = 0; z + 1 < tsdf.dims.z; ++z) {
                double val[8];
                int cx[8][3];
                int cube = 0;
                for (int i = 0; i < 8; ++i) {
                    cx[i][0] = x + kCorner[i][0];
                    cx[i][1] = y + kCorner[i][1];
                    cx[i][2] = z + kCorner[i][2];
                    val[i] = tsdf.at(cx[i][0], cx[i][1], cx[i][2]);
                    if (val[i] < iso) cube |= 1 << i;
                }
                const int edges = mc_tables::kEdgeTable[cube];
                if (edges == 0) continue;

                uint32_t ev[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(edges & (1 << e))) continue;
                    const uint64_t key = edge_key(cx[kEdgeCorner[e][0]], cx[kEdgeCorner[e][1]]);
                    auto it = edge_vertex.find(key);
                    if (it != edge_vertex.end()) {
                        ev[e] = it->second;
                        continue;
                    }
                    const int* a = cx[kEdgeCorner[e][0]];
                    const int* b = cx[kEdgeCorner[e][1]];
                    const double va = val[kEdgeCorner[e][0]];
                    const double vb = val[kEdgeCorner[e][1]];
                    double t = (vb == va) ? 0.5 : (iso - va) / (vb - va);
                    if (t < 0) t = 0;
                    if (t > 1) t = 1;
                    std::array<double, 3> p;
                    for (int k = 0; k < 3; ++k)
                        p[k] = tsdf.origin[k] + (a[k] + t * (b[k] - a[k])) * tsdf.voxel_size;
                    ev[e] = static_cast<uint32_t>(mesh.vertices.size());
                    mesh.vertices.push_back(p);
                    edge_vertex.emplace(key, ev[e]);
                }

                const int* tri = mc_tables::kTriTable[cube];
                for (int i = 0; tri[i] != -1; i += 3) {
                    // table order winds clockwise from outside under our
                    // corner layout; swap to counterclockwise
                    const uint32_t i0 = ev[tri[i]];
                    const uint32_t i1 = ev[tri[i + 2]];
                    const uint32_t i2 = ev[tri[i + 1]];
                    // edge interpolation can land two table vertices on the
                    // exact same grid node; skip the collapsed face
                    if (i0 == i1 || i1 == i2 || i0 == i2) continue;
                    mesh.triangles.push_back({i0, i1, i2});
                }
            }

    accumulate_normals(mesh);
    mesh.validate();
    return mesh;
}

TriangleMesh weld_vertices(const TriangleMesh& mesh, double eps) {
    if (eps <= 0) throw std::invalid_argument("weld_vertices: eps must be positive");
    TriangleMesh out;
    std::vector<uint32_t> remap(mesh.vertices.size());
    std::map<std::array<int64_t, 3>, uint32_t> cells;
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        const auto& v = mesh.vertices[i];
        std::array<int64_t, 3> key = {static_cast<int64_t>(std::floor(v[0] / eps)),
                                      static_cast<int64_t>(std::floor(v[1] / eps)),
                                      static_cast<int64_t>(std::floor(v[2] / eps))};
        auto it = cells.find(key);
        if (it == cells.end()) {
            remap[i] = static_cast<uint32_t>(out.vertices.size());
            cells.emplace(key, remap[i]);
            out.vertices.push_back(v);
        } else {
            remap[i] = it->second;
        }
    }
    for (const auto& t : mesh.triangles) {
        const uint32_t a = remap[t[0]], b = remap[t[1]], c = remap[t[2]];
        if (a == b || b == c || a == c) continue;
        out.triangles.push_back({a, b, c});
    }
    accumulate_normals(out);
    out.validate();
    return out;
}

}  // namespace svt
