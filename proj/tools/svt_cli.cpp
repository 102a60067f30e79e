// Thin command-line front end; everything happens behind the C API.

#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "svt/svt.h"

namespace {

int finish(svt_status st) {
    if (st == SVT_OK) return 0;
    const char* msg = svt_last_error();
    if (msg && *msg) std::fprintf(stderr, "error: %s\n", msg);
    return st == SVT_ERR_FAILED ? 1 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse-voxel transformer reconstruction"};
    app.require_subcommand(1);

    svt_options o;
    svt_options_init(&o);
    std::string scene, config, checkpoint, out = "out", precision = "f64";
    bool deterministic = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--scene", scene, "scene directory");
        cmd->add_option("--config", config, "key=value config file");
        cmd->add_option("--checkpoint", checkpoint, "parameter file");
        cmd->add_option("--out", out, "output directory");
        cmd->add_option("--seed", o.seed, "random seed");
        cmd->add_flag("--deterministic", deterministic, "force serial reductions");
        cmd->add_option("--precision", precision, "f32 or f64")
            ->check(CLI::IsMember({"f32", "f64"}));
    };

    CLI::App* gen = app.add_subcommand("gen-scene", "write a synthetic scene");
    add_common(gen);

    CLI::App* rec = app.add_subcommand("reconstruct", "run the full pipeline on a scene");
    add_common(rec);

    CLI::App* train = app.add_subcommand("train-tiny", "overfit on one scene");
    add_common(train);
    train->add_option("--steps", o.steps, "optimizer steps");

    CLI::App* verify = app.add_subcommand("verify", "run the oracle suite");
    add_common(verify);

    CLI::App* bench = app.add_subcommand("bench", "attention pair-count benchmark");
    add_common(bench);
    bench->add_option("--dims", o.dims, "cubic grid side");
    bench->add_option("--occupancy", o.occupancy, "active voxel fraction");
    bench->add_option("--window", o.window, "attention window n");
    bench->add_option("--trials", o.trials, "timed attention runs (0 = count only)");

    CLI11_PARSE(app, argc, argv);

    o.scene = scene.empty() ? nullptr : scene.c_str();
    o.config = config.empty() ? nullptr : config.c_str();
    o.checkpoint = checkpoint.empty() ? nullptr : checkpoint.c_str();
    o.out = out.c_str();
    o.precision = precision.c_str();
    o.deterministic = deterministic ? 1 : 0;

    if (gen->parsed()) return finish(svt_gen_scene(&o));
    if (rec->parsed()) return finish(svt_reconstruct(&o));
    if (train->parsed()) return finish(svt_train_tiny(&o));
    if (verify->parsed()) return finish(svt_verify(&o));
    if (bench->parsed()) return finish(svt_bench(&o));
    return 2;
}
