#pragma once

// Synthetic desk-scale scenes: an analytic SDF composition rendered from an
// orbiting camera. Provides the ground truth (TSDF + mesh) and the inputs
// (depth + shaded images) for reconstruction and training runs.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "svt/fusion.hpp"
#include "svt/mesh.hpp"
#include "svt/tsdf.hpp"

namespace svt {

struct ScenePrimitive {
    enum Kind { kSphere = 0, kBox = 1, kPlane = 2 };
    int kind = kSphere;
    bool subtract = false;          // carve instead of add
    std::array<double, 3> a{};      // sphere/box center, plane unit normal
    std::array<double, 3> b{};      // sphere: b[0]=radius; box: half extents; plane: b[0]=offset
};

struct SceneSpec {
    uint64_t seed = 1;
    int n_views = 8;
    int image_size = 64;            // square, must divide by 16 for the 2D pyramid
    double voxel_size = 0.04;       // finest level
    std::array<double, 3> bounds_min = {-0.32, -0.32, -0.32};
    std::array<double, 3> bounds_max = {0.32, 0.32, 0.32};
    std::array<double, 3> target = {0, 0, 0};
    double orbit_radius = 0.85;
    double orbit_height = 0.25;     // vertical swing amplitude over the orbit
    double focal_scale = 0.8;       // fx = fy = focal_scale * image_size
    std::vector<ScenePrimitive> prims;
};

// Signed distance of the composition at a world point; +inf for an empty one.
double scene_sdf(const SceneSpec& spec, const std::array<double, 3>& p);

// Seeded three-primitive scene (two solids plus one carve) that fits the
// default bounds.
SceneSpec three_primitive_scene(uint64_t seed);

// Ground truth sampled at voxel centers, truncated at 3 * voxel_size and
// normalized to [-1, 1]; voxels beyond +truncation are flagged free space.
TsdfVolume scene_tsdf(const SceneSpec& spec);

// Marching cubes over the ground-truth TSDF, vertex-welded.
TriangleMesh scene_mesh(const SceneSpec& spec);

// Sphere-traces one depth + 3-channel shaded image per orbit pose. The 2D
// feature pyramids are left empty; the reconstruction model fills them.
std::vector<CameraView> render_views(const SceneSpec& spec);

struct SceneData {
    SceneSpec spec;
    std::vector<CameraView> views;
    TsdfVolume gt_tsdf;
    TriangleMesh gt_mesh;
};

// Directory layout: meta.json, intrinsics.txt, view_NNN.pose.txt,
// view_NNN.vfck (image + depth tensors), gt_tsdf.svol, gt_mesh.ply.
void save_scene(const std::string& dir, const SceneSpec& spec);
SceneData load_scene(const std::string& dir);

}  // namespace svt
