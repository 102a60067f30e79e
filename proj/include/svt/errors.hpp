#pragma once

#include <stdexcept>
#include <string>

namespace svt {

// Violated structural contract (mismatched grids, missing parents, ...).
struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& m) : std::runtime_error(m) {}
};

// A configured resource cap was exceeded.
struct ResourceError : std::runtime_error {
    explicit ResourceError(const std::string& m) : std::runtime_error(m) {}
};

// Sparsification emptied a level; carries the offending level.
struct DegenerateSceneError : std::runtime_error {
    int level;
    DegenerateSceneError(int lvl, const std::string& m) : std::runtime_error(m), level(lvl) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace svt
