#pragma once

// Command entry points shared by the C API and the verification suites.

#include <cstdint>
#include <iosfwd>
#include <string>

namespace svt {

struct RunOptions {
    std::string scene_dir;
    std::string config_path;   // optional key=value file
    std::string checkpoint;    // input (reconstruct) or output (train) path
    std::string out_dir = "out";
    uint64_t seed = 1;
    bool deterministic = false;
    std::string precision = "f64";  // f32 | f64
    int steps = -1;                 // <0: take from config

    // bench
    int dims = 100;
    double occupancy = 0.1;
    int window = 10;
    int trials = 0;  // 0 = pair counting only
};

// All commands return 0 on success and throw svt exceptions on error.
int cmd_gen_scene(const RunOptions& opts);
int cmd_reconstruct(const RunOptions& opts);
int cmd_train_tiny(const RunOptions& opts);
int cmd_bench(const RunOptions& opts);

// Cross-module oracle suite; prints one PASS/FAIL line per check to `os`
// and returns the number of failures.
int run_verify(std::ostream& os);
int cmd_verify(const RunOptions& opts);

}  // namespace svt
