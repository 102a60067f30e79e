#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <string>

#include "svt/svt.h"

namespace {

struct TmpDir {
    std::string path;
    explicit TmpDir(std::string p) : path(std::move(p)) {}
    ~TmpDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("options init fills defaults") {
    svt_options o;
    std::memset(&o, 0xff, sizeof o);
    svt_options_init(&o);
    CHECK(o.scene == nullptr);
    CHECK(o.seed == 1);
    CHECK(o.steps == -1);
    CHECK(o.dims == 100);
    CHECK(o.occupancy == 0.1);
    CHECK(o.trials == 0);
}

TEST_CASE("missing scene directory reports IO error with a message") {
    svt_options o;
    svt_options_init(&o);
    o.scene = "no_such_scene_dir";
    const svt_status st = svt_reconstruct(&o);
    CHECK(st == SVT_ERR_IO);
    CHECK(std::strlen(svt_last_error()) > 0);
}

TEST_CASE("null options are rejected") {
    CHECK(svt_gen_scene(nullptr) == SVT_ERR_INVALID);
    CHECK(svt_bench(nullptr) == SVT_ERR_INVALID);
}

TEST_CASE("invalid bench arguments") {
    svt_options o;
    svt_options_init(&o);
    o.occupancy = 1.5;
    CHECK(svt_bench(&o) == SVT_ERR_INVALID);
}

TEST_CASE("scene round trip through opaque handles") {
    TmpDir dir("capi_scene_tmp");
    svt_options o;
    svt_options_init(&o);
    o.scene = dir.path.c_str();
    o.seed = 9;

    // a small scene keeps this test fast
    const std::string cfg_path = dir.path + ".cfg";
    {
        std::filesystem::create_directories(dir.path);
        FILE* f = fopen(cfg_path.c_str(), "w");
        REQUIRE(f);
        fputs("n_views = 2\nimage_size = 32\nbound = 0.24\n", f);
        fclose(f);
    }
    o.config = cfg_path.c_str();
    REQUIRE(svt_gen_scene(&o) == SVT_OK);

    svt_tsdf* tsdf = nullptr;
    REQUIRE(svt_tsdf_load_scene(dir.path.c_str(), &tsdf) == SVT_OK);
    int x = 0, y = 0, z = 0;
    svt_tsdf_dims(tsdf, &x, &y, &z);
    CHECK(x == 12);  // 0.48 / 0.04
    CHECK(y == 12);
    CHECK(z == 12);

    svt_mesh* mesh = nullptr;
    REQUIRE(svt_marching_cubes(tsdf, 0.0, &mesh) == SVT_OK);
    CHECK(svt_mesh_vertex_count(mesh) > 0);
    CHECK(svt_mesh_triangle_count(mesh) > 0);

    const std::string ply = dir.path + "/roundtrip.ply";
    REQUIRE(svt_mesh_save_ply(mesh, ply.c_str()) == SVT_OK);
    svt_mesh* back = nullptr;
    REQUIRE(svt_mesh_load_ply(ply.c_str(), &back) == SVT_OK);
    CHECK(svt_mesh_vertex_count(back) == svt_mesh_vertex_count(mesh));
    CHECK(svt_mesh_triangle_count(back) == svt_mesh_triangle_count(mesh));

    svt_mesh_free(back);
    svt_mesh_free(mesh);
    svt_tsdf_free(tsdf);
    std::filesystem::remove(cfg_path);

    CHECK(svt_mesh_load_ply("missing.ply", &back) == SVT_ERR_IO);
}

TEST_CASE("verify runs clean through the C API") {
    svt_options o;
    svt_options_init(&o);
    CHECK(svt_verify(&o) == SVT_OK);
}
