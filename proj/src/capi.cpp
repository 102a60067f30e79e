#include "svt/svt.h"

#include <exception>
#include <string>

#include "svt/errors.hpp"
#include "svt/mesh.hpp"
#include "svt/runner.hpp"
#include "svt/scene.hpp"

namespace {

thread_local std::string g_last_error;

svt_status classify(const std::exception& e) {
    g_last_error = e.what();
    if (dynamic_cast<const svt::IoError*>(&e)) return SVT_ERR_IO;
    if (dynamic_cast<const svt::ResourceError*>(&e)) return SVT_ERR_RESOURCE;
    if (dynamic_cast<const svt::DegenerateSceneError*>(&e)) return SVT_ERR_DEGENERATE;
    if (dynamic_cast<const svt::StructuralError*>(&e)) return SVT_ERR_STRUCTURAL;
    if (dynamic_cast<const std::invalid_argument*>(&e)) return SVT_ERR_INVALID;
    return SVT_ERR_INTERNAL;
}

svt::RunOptions to_run_options(const svt_options* o) {
    if (!o) throw std::invalid_argument("options must not be null");
    svt::RunOptions r;
    if (o->scene) r.scene_dir = o->scene;
    if (o->config) r.config_path = o->config;
    if (o->checkpoint) r.checkpoint = o->checkpoint;
    if (o->out) r.out_dir = o->out;
    if (o->precision) r.precision = o->precision;
    r.seed = o->seed;
    r.deterministic = o->deterministic != 0;
    r.steps = o->steps;
    r.dims = o->dims;
    r.occupancy = o->occupancy;
    r.window = o->window;
    r.trials = o->trials;
    return r;
}

template <typename Fn>
svt_status guarded(Fn&& fn) {
    try {
        g_last_error.clear();
        return fn() == 0 ? SVT_OK : SVT_ERR_FAILED;
    } catch (const std::exception& e) {
        return classify(e);
    } catch (...) {
        g_last_error = "unknown error";
        return SVT_ERR_INTERNAL;
    }
}

}  // namespace

struct svt_tsdf {
    svt::TsdfVolume vol;
};
struct svt_mesh {
    svt::TriangleMesh mesh;
};

extern "C" {

const char* svt_last_error(void) { return g_last_error.c_str(); }

void svt_options_init(svt_options* opts) {
    if (!opts) return;
    *opts = svt_options{};
    opts->seed = 1;
    opts->steps = -1;
    opts->dims = 100;
    opts->occupancy = 0.1;
    opts->window = 10;
    opts->trials = 0;
}

svt_status svt_gen_scene(const svt_options* o) {
    return guarded([&] { return svt::cmd_gen_scene(to_run_options(o)); });
}
svt_status svt_reconstruct(const svt_options* o) {
    return guarded([&] { return svt::cmd_reconstruct(to_run_options(o)); });
}
svt_status svt_train_tiny(const svt_options* o) {
    return guarded([&] { return svt::cmd_train_tiny(to_run_options(o)); });
}
svt_status svt_verify(const svt_options* o) {
    return guarded([&] { return svt::cmd_verify(to_run_options(o)); });
}
svt_status svt_bench(const svt_options* o) {
    return guarded([&] { return svt::cmd_bench(to_run_options(o)); });
}

svt_status svt_tsdf_load_scene(const char* scene_dir, svt_tsdf** out) {
    return guarded([&] {
        if (!scene_dir || !out) throw std::invalid_argument("null argument");
        svt::SceneData data = svt::load_scene(scene_dir);
        *out = new svt_tsdf{std::move(data.gt_tsdf)};
        return 0;
    });
}

void svt_tsdf_dims(const svt_tsdf* tsdf, int* x, int* y, int* z) {
    if (!tsdf) return;
    if (x) *x = tsdf->vol.dims.x;
    if (y) *y = tsdf->vol.dims.y;
    if (z) *z = tsdf->vol.dims.z;
}

void svt_tsdf_free(svt_tsdf* tsdf) { delete tsdf; }

svt_status svt_marching_cubes(const svt_tsdf* tsdf, double iso, svt_mesh** out) {
    return guarded([&] {
        if (!tsdf || !out) throw std::invalid_argument("null argument");
        *out = new svt_mesh{svt::marching_cubes(tsdf->vol, iso)};
        return 0;
    });
}

svt_status svt_mesh_load_ply(const char* path, svt_mesh** out) {
    return guarded([&] {
        if (!path || !out) throw std::invalid_argument("null argument");
        *out = new svt_mesh{svt::load_ply_file(path)};
        return 0;
    });
}

svt_status svt_mesh_save_ply(const svt_mesh* mesh, const char* path) {
    return guarded([&] {
        if (!mesh || !path) throw std::invalid_argument("null argument");
        svt::save_ply_file(path, mesh->mesh);
        return 0;
    });
}

size_t svt_mesh_vertex_count(const svt_mesh* mesh) {
    return mesh ? mesh->mesh.vertices.size() : 0;
}
size_t svt_mesh_triangle_count(const svt_mesh* mesh) {
    return mesh ? mesh->mesh.triangles.size() : 0;
}
void svt_mesh_free(svt_mesh* mesh) { delete mesh; }

}  // extern "C"
