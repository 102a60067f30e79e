#include "svt/scene.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "svt/errors.hpp"
#include "svt/params.hpp"
#include "svt/volume_io.hpp"

namespace svt {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 sub(Vec3 a, Vec3 b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 add(Vec3 a, Vec3 b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 scale(Vec3 a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot(Vec3 a, Vec3 b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(Vec3 a) {
    const double n = norm(a);
    if (n == 0) throw StructuralError("scene: zero-length vector");
    return scale(a, 1.0 / n);
}
Vec3 cross(Vec3 a, Vec3 b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double primitive_sdf(const ScenePrimitive& pr, const Vec3& p) {
    switch (pr.kind) {
        case ScenePrimitive::kSphere:
            return norm(sub(p, pr.a)) - pr.b[0];
        case ScenePrimitive::kBox: {
            const Vec3 q = {std::fabs(p[0] - pr.a[0]) - pr.b[0], std::fabs(p[1] - pr.a[1]) - pr.b[1],
                            std::fabs(p[2] - pr.a[2]) - pr.b[2]};
            const Vec3 qp = {std::max(q[0], 0.0), std::max(q[1], 0.0), std::max(q[2], 0.0)};
            return norm(qp) + std::min(std::max({q[0], q[1], q[2]}), 0.0);
        }
        case ScenePrimitive::kPlane:
            return dot(pr.a, p) - pr.b[0];
        default:
            throw StructuralError("scene: unknown primitive kind");
    }
}

Vec3 sdf_normal(const SceneSpec& spec, const Vec3& p) {
    const double h = 1e-4;
    Vec3 n;
    for (int a = 0; a < 3; ++a) {
        Vec3 hi = p, lo = p;
        hi[a] += h;
        lo[a] -= h;
        n[a] = scene_sdf(spec, hi) - scene_sdf(spec, lo);
    }
    const double len = norm(n);
    return len > 0 ? scale(n, 1.0 / len) : Vec3{0, 0, 1};
}

// world -> camera [R|t] looking from eye at target, world z up
std::array<double, 16> look_at(Vec3 eye, Vec3 target) {
    const Vec3 fwd = normalized(sub(target, eye));
    const Vec3 right = normalized(cross(Vec3{0, 0, 1}, fwd));
    const Vec3 down = cross(fwd, right);  // right x down = fwd, det +1
    std::array<double, 16> P{};
    const Vec3 rows[3] = {right, down, fwd};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) P[i * 4 + j] = rows[i][j];
        P[i * 4 + 3] = -dot(rows[i], eye);
    }
    P[15] = 1;
    return P;
}

constexpr double kMaxTraceDist = 8.0;

// Returns the hit distance along the (unit) ray, or a negative value on miss.
double sphere_trace(const SceneSpec& spec, Vec3 origin, Vec3 dir) {
    double t = 0.0;
    for (int it = 0; it < 256 && t < kMaxTraceDist; ++it) {
        const double d = scene_sdf(spec, add(origin, scale(dir, t)));
        if (d < 1e-5) return t;
        t += d;
    }
    return -1.0;
}

std::string view_stem(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "view_%03d", i);
    return buf;
}

void write_matrix(const std::string& path, const double* m, int rows, int cols) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.precision(17);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) os << m[i * cols + j] << (j + 1 == cols ? '\n' : ' ');
    }
}

void read_matrix(const std::string& path, double* m, int rows, int cols) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    for (int i = 0; i < rows * cols; ++i)
        if (!(is >> m[i])) throw IoError("truncated matrix file: " + path);
}

}  // namespace

double scene_sdf(const SceneSpec& spec, const std::array<double, 3>& p) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& pr : spec.prims) {
        const double s = primitive_sdf(pr, p);
        d = pr.subtract ? std::max(d, -s) : std::min(d, s);
    }
    return d;
}

SceneSpec three_primitive_scene(uint64_t seed) {
    SceneSpec spec;
    spec.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);

    ScenePrimitive sphere;
    sphere.kind = ScenePrimitive::kSphere;
    sphere.a = {-0.09 + 0.02 * u(rng), -0.07 + 0.02 * u(rng), 0.03 + 0.02 * u(rng)};
    sphere.b = {0.12 + 0.02 * u(rng), 0, 0};

    ScenePrimitive box;
    box.kind = ScenePrimitive::kBox;
    box.a = {0.10 + 0.02 * u(rng), 0.08 + 0.02 * u(rng), -0.05 + 0.02 * u(rng)};
    box.b = {0.10 + 0.015 * u(rng), 0.08 + 0.015 * u(rng), 0.07 + 0.015 * u(rng)};

    ScenePrimitive carve;  // bite a corner out of the box
    carve.kind = ScenePrimitive::kSphere;
    carve.subtract = true;
    carve.a = add(box.a, {box.b[0], box.b[1], box.b[2]});
    carve.b = {0.07 + 0.01 * u(rng), 0, 0};

    spec.prims = {sphere, box, carve};
    return spec;
}

TsdfVolume scene_tsdf(const SceneSpec& spec) {
    const double vs = spec.voxel_size;
    const double trunc = 3.0 * vs;
    const Dims3 dims = {static_cast<int>(std::floor((spec.bounds_max[0] - spec.bounds_min[0]) / vs)),
                        static_cast<int>(std::floor((spec.bounds_max[1] - spec.bounds_min[1]) / vs)),
                        static_cast<int>(std::floor((spec.bounds_max[2] - spec.bounds_min[2]) / vs))};
    if (dims.x < 1 || dims.y < 1 || dims.z < 1)
        throw DegenerateSceneError(0, "scene bounds smaller than one voxel");
    // grid nodes sit on voxel centers so meshes land at true world positions
    TsdfVolume out(dims, vs,
                   {spec.bounds_min[0] + 0.5 * vs, spec.bounds_min[1] + 0.5 * vs,
                    spec.bounds_min[2] + 0.5 * vs});
    for (int x = 0; x < dims.x; ++x)
        for (int y = 0; y < dims.y; ++y)
            for (int z = 0; z < dims.z; ++z) {
                const Vec3 p = {spec.bounds_min[0] + (x + 0.5) * vs,
                                spec.bounds_min[1] + (y + 0.5) * vs,
                                spec.bounds_min[2] + (z + 0.5) * vs};
                const double d = scene_sdf(spec, p);
                if (d > trunc) continue;  // default +1 / free space
                out.set(x, y, z, std::clamp(d / trunc, -1.0, 1.0));
            }
    return out;
}

TriangleMesh scene_mesh(const SceneSpec& spec) {
    return weld_vertices(marching_cubes(scene_tsdf(spec)), 1e-7);
}

std::vector<CameraView> render_views(const SceneSpec& spec) {
    if (spec.n_views < 1) throw std::invalid_argument("scene: need at least one view");
    if (spec.image_size < 16 || spec.image_size % 16 != 0)
        throw std::invalid_argument("scene: image size must be a positive multiple of 16");

    const int s = spec.image_size;
    const double f = spec.focal_scale * s;
    const double c = (s - 1) / 2.0;
    const Vec3 light = normalized({0.4, -0.3, 0.85});

    std::vector<CameraView> views;
    for (int i = 0; i < spec.n_views; ++i) {
        const double ang = 2.0 * M_PI * i / spec.n_views;
        const Vec3 eye = {spec.target[0] + spec.orbit_radius * std::cos(ang),
                          spec.target[1] + spec.orbit_radius * std::sin(ang),
                          spec.target[2] + spec.orbit_height * std::sin(2.0 * ang + 0.7)};

        CameraView v;
        v.id = i;
        v.K = {f, 0, c, 0, f, c, 0, 0, 1};
        v.P = look_at(eye, spec.target);
        v.depth = FeatureMap(s, s, 1);
        FeatureMap img(s, s, 3);

        std::array<Vec3, 3> rot;  // camera rows, for world-space rays
        for (int r = 0; r < 3; ++r) rot[r] = {v.P[r * 4], v.P[r * 4 + 1], v.P[r * 4 + 2]};
        for (int py = 0; py < s; ++py)
            for (int px = 0; px < s; ++px) {
                const Vec3 d_cam = {(px - c) / f, (py - c) / f, 1.0};
                Vec3 d_world{};
                for (int a = 0; a < 3; ++a)
                    d_world[a] = rot[0][a] * d_cam[0] + rot[1][a] * d_cam[1] + rot[2][a] * d_cam[2];
                d_world = normalized(d_world);
                const double t = sphere_trace(spec, eye, d_world);
                double* ip = img.at(px, py);
                if (t < 0) {
                    v.depth.at(px, py)[0] = 0.0;  // invalid
                    ip[0] = ip[1] = ip[2] = 0.0;
                    continue;
                }
                const Vec3 hit = add(eye, scale(d_world, t));
                const Vec3 hc = sub(hit, eye);
                v.depth.at(px, py)[0] = dot(rot[2], hc);  // camera-space z
                const Vec3 n = sdf_normal(spec, hit);
                ip[0] = 0.5 + 0.5 * dot(n, light);
                ip[1] = std::exp(-t);  // depth band
                ip[2] = 0.5 + 0.5 * n[2];
            }
        v.feats.clear();
        v.feats.push_back(std::move(img));  // raw image; pyramids are model-side
        views.push_back(std::move(v));
    }
    return views;
}

void save_scene(const std::string& dir, const SceneSpec& spec) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    nlohmann::json meta;
    meta["seed"] = spec.seed;
    meta["n_views"] = spec.n_views;
    meta["image_size"] = spec.image_size;
    meta["voxel_size"] = spec.voxel_size;
    meta["bounds_min"] = spec.bounds_min;
    meta["bounds_max"] = spec.bounds_max;
    meta["target"] = spec.target;
    meta["orbit_radius"] = spec.orbit_radius;
    meta["orbit_height"] = spec.orbit_height;
    meta["focal_scale"] = spec.focal_scale;
    for (const auto& pr : spec.prims)
        meta["primitives"].push_back({{"kind", pr.kind}, {"subtract", pr.subtract}, {"a", pr.a}, {"b", pr.b}});
    {
        std::ofstream os(dir + "/meta.json");
        if (!os) throw IoError("cannot open for writing: " + dir + "/meta.json");
        os << meta.dump(2) << "\n";
    }

    std::vector<CameraView> views = render_views(spec);
    write_matrix(dir + "/intrinsics.txt", views[0].K.data(), 3, 3);
    for (const auto& v : views) {
        const std::string stem = dir + "/" + view_stem(v.id);
        write_matrix(stem + ".pose.txt", v.P.data(), 4, 4);

        const int s = spec.image_size;
        ParamStore tensors;
        Tensor<double>& img = tensors.add("image", {uint32_t(s), uint32_t(s), 3}, s * s, 3);
        Tensor<double>& dep = tensors.add("depth", {uint32_t(s), uint32_t(s)}, s * s, 1);
        img = v.feats[0].data;
        dep = v.depth.data;
        tensors.save_file(stem + ".vfck");
    }

    const TsdfVolume tsdf = scene_tsdf(spec);
    SparseVolume packed(0, spec.voxel_size, tsdf.dims, 2);
    {
        std::vector<VoxelCoord> coords;
        Tensor<double> feats(static_cast<int>(tsdf.dims.total()), 2);
        int r = 0;
        for (int x = 0; x < tsdf.dims.x; ++x)
            for (int y = 0; y < tsdf.dims.y; ++y)
                for (int z = 0; z < tsdf.dims.z; ++z, ++r) {
                    coords.push_back({x, y, z});
                    feats.at(r, 0) = tsdf.at(x, y, z);
                    feats.at(r, 1) = tsdf.free_space[tsdf.index(x, y, z)] ? 1.0 : 0.0;
                }
        packed.assign(std::move(coords), std::move(feats));
    }
    save_svol_file(dir + "/gt_tsdf.svol", packed);
    save_ply_file(dir + "/gt_mesh.ply", weld_vertices(marching_cubes(tsdf), 1e-7));
}

SceneData load_scene(const std::string& dir) {
    SceneData data;

    nlohmann::json meta;
    {
        std::ifstream is(dir + "/meta.json");
        if (!is) throw IoError("cannot open: " + dir + "/meta.json");
        is >> meta;
    }
    SceneSpec& spec = data.spec;
    spec.seed = meta.at("seed").get<uint64_t>();
    spec.n_views = meta.at("n_views").get<int>();
    spec.image_size = meta.at("image_size").get<int>();
    spec.voxel_size = meta.at("voxel_size").get<double>();
    spec.bounds_min = meta.at("bounds_min").get<Vec3>();
    spec.bounds_max = meta.at("bounds_max").get<Vec3>();
    spec.target = meta.at("target").get<Vec3>();
    spec.orbit_radius = meta.at("orbit_radius").get<double>();
    spec.orbit_height = meta.at("orbit_height").get<double>();
    spec.focal_scale = meta.at("focal_scale").get<double>();
    if (meta.contains("primitives"))
        for (const auto& j : meta["primitives"]) {
            ScenePrimitive pr;
            pr.kind = j.at("kind").get<int>();
            pr.subtract = j.at("subtract").get<bool>();
            pr.a = j.at("a").get<Vec3>();
            pr.b = j.at("b").get<Vec3>();
            spec.prims.push_back(pr);
        }

    std::array<double, 9> K;
    read_matrix(dir + "/intrinsics.txt", K.data(), 3, 3);
    const int s = spec.image_size;
    for (int i = 0; i < spec.n_views; ++i) {
        CameraView v;
        v.id = i;
        v.K = K;
        const std::string stem = dir + "/" + view_stem(i);
        read_matrix(stem + ".pose.txt", v.P.data(), 4, 4);

        ParamStore tensors;
        tensors.add("image", {uint32_t(s), uint32_t(s), 3}, s * s, 3);
        tensors.add("depth", {uint32_t(s), uint32_t(s)}, s * s, 1);
        tensors.load_file(stem + ".vfck");
        FeatureMap img(s, s, 3);
        img.data = tensors.value("image");
        v.feats.push_back(std::move(img));
        v.depth = FeatureMap(s, s, 1);
        v.depth.data = tensors.value("depth");
        v.validate();
        data.views.push_back(std::move(v));
    }

    const SparseVolume packed = load_svol_file(dir + "/gt_tsdf.svol");
    data.gt_tsdf = TsdfVolume(packed.dims, packed.voxel_size,
                              {spec.bounds_min[0] + 0.5 * packed.voxel_size,
                               spec.bounds_min[1] + 0.5 * packed.voxel_size,
                               spec.bounds_min[2] + 0.5 * packed.voxel_size});
    for (int r = 0; r < packed.count(); ++r) {
        const VoxelCoord c = packed.coords()[r];
        data.gt_tsdf.set(c.x, c.y, c.z, packed.features().at(r, 0),
                         packed.features().at(r, 1) != 0.0);
    }
    data.gt_mesh = load_ply_file(dir + "/gt_mesh.ply");
    return data;
}

}  // namespace svt
