#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "svt/volume.hpp"
#include "svt/volume_io.hpp"

using namespace svt;

namespace {

SparseVolume random_volume(Dims3 dims, double occupancy, int channels, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_real_distribution<double> feat(-1.0, 1.0);
    std::vector<VoxelCoord> coords;
    for (int x = 0; x < dims.x; ++x)
        for (int y = 0; y < dims.y; ++y)
            for (int z = 0; z < dims.z; ++z)
                if (coin(rng) < occupancy) coords.push_back({x, y, z});
    Tensor<double> f(static_cast<int>(coords.size()), channels);
    for (auto& v : f.v) v = feat(rng);
    SparseVolume vol(0, 0.04, dims, channels);
    vol.assign(std::move(coords), std::move(f));
    return vol;
}

std::set<VoxelCoord> active_set(const SparseVolume& v) {
    return {v.coords().begin(), v.coords().end()};
}

}  // namespace

TEST_CASE("sparsify: threshold boundary keeps parent occupancy == threshold") {
    SparseVolume vol(0, 0.04, {4, 4, 4}, 2);
    vol.assign({{0, 0, 0}, {2, 2, 2}}, Tensor<double>(2, 2, 1.0));
    OccupancyVolume occ;
    occ.level = 1;
    occ.dims = {2, 2, 2};
    occ.assign({{0, 0, 0}, {1, 1, 1}}, {0.5, 0.49});
    SparseVolume out = sparsify(vol, occ, 0.5);
    CHECK(out.count() == 1);
    CHECK(out.active({0, 0, 0}));      // parent occupancy exactly 0.5 retained
    CHECK(!out.active({2, 2, 2}));     // 0.49 < 0.5 dropped
}

TEST_CASE("sparsify: all occupancies 1.0 is a no-op") {
    std::mt19937_64 rng(1);
    SparseVolume vol = random_volume({8, 8, 8}, 0.3, 3, rng);
    std::vector<VoxelCoord> pc;
    std::set<VoxelCoord> seen;
    for (auto c : vol.coords())
        if (seen.insert(parent_of(c)).second) pc.push_back(parent_of(c));
    OccupancyVolume occ;
    occ.level = 1;
    occ.dims = {4, 4, 4};
    occ.assign(pc, std::vector<double>(pc.size(), 1.0));
    SparseVolume out = sparsify(vol, occ, 0.5);
    CHECK(active_set(out) == active_set(vol));
    CHECK(out.features().v == vol.features().v);
}

TEST_CASE("sparsify: random 16^3 matches brute-force per-voxel filter") {
    std::mt19937_64 rng(2);
    SparseVolume vol = random_volume({16, 16, 16}, 0.2, 2, rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<VoxelCoord> pc;
    std::vector<double> pv;
    std::set<VoxelCoord> seen;
    for (auto c : vol.coords())
        if (seen.insert(parent_of(c)).second) pc.push_back(parent_of(c));
    for (size_t i = 0; i < pc.size(); ++i) pv.push_back(u(rng));
    OccupancyVolume occ;
    occ.level = 1;
    occ.dims = {8, 8, 8};
    occ.assign(pc, pv);

    SparseVolume out = sparsify(vol, occ, 0.5);

    std::set<VoxelCoord> expected;
    for (auto c : vol.coords())
        if (occ.value_at(parent_of(c)) >= 0.5) expected.insert(c);
    CHECK(active_set(out) == expected);
    CHECK(active_set(out).size() <= active_set(vol).size());
}

TEST_CASE("sparsify: level mismatch is a structural error") {
    SparseVolume vol(0, 0.04, {4, 4, 4}, 1);
    vol.assign({{0, 0, 0}}, Tensor<double>(1, 1));
    OccupancyVolume occ;
    occ.level = 0;  // must be vol.level + 1
    occ.dims = {2, 2, 2};
    occ.assign({{0, 0, 0}}, {1.0});
    CHECK_THROWS_AS(sparsify(vol, occ, 0.5), StructuralError);
}

TEST_CASE("window_neighbors: singleton and dense cases") {
    SparseVolume single(0, 0.04, {5, 5, 5}, 1);
    single.assign({{2, 2, 2}}, Tensor<double>(1, 1));
    auto nb = window_neighbors(single, {2, 2, 2}, 3);
    REQUIRE(nb.size() == 1);
    CHECK(nb[0] == VoxelCoord{2, 2, 2});

    std::vector<VoxelCoord> all;
    for (int x = 0; x < 5; ++x)
        for (int y = 0; y < 5; ++y)
            for (int z = 0; z < 5; ++z) all.push_back({x, y, z});
    SparseVolume dense(0, 0.04, {5, 5, 5}, 1);
    dense.assign(all, Tensor<double>(125, 1));
    CHECK(window_neighbors(dense, {2, 2, 2}, 3).size() == 27);

    CHECK_THROWS_AS(window_neighbors(dense, {9, 9, 9}, 3), std::invalid_argument);
}

TEST_CASE("window_neighbors: matches brute-force scan, odd and even n") {
    std::mt19937_64 rng(3);
    SparseVolume vol = random_volume({12, 12, 12}, 0.1, 1, rng);
    REQUIRE(vol.count() > 0);
    for (int n : {3, 4, 10}) {
        const WindowSpan w(n);
        for (int i = 0; i < vol.count(); i += 7) {
            const VoxelCoord c = vol.coords()[i];
            auto got = window_neighbors(vol, c, n);
            std::set<VoxelCoord> expected;
            for (auto a : vol.coords()) {
                const VoxelCoord d = a - c;
                if (d.x >= w.lo && d.x <= w.hi && d.y >= w.lo && d.y <= w.hi && d.z >= w.lo &&
                    d.z <= w.hi)
                    expected.insert(a);
            }
            CHECK(std::set<VoxelCoord>(got.begin(), got.end()) == expected);
            CHECK(std::is_sorted(got.begin(), got.end()));
            // center always included
            CHECK(std::binary_search(got.begin(), got.end(), c));
        }
    }
}

TEST_CASE("dilate: footprint, clipping, union oracle, extensive + monotone") {
    SparseVolume interior(0, 0.04, {8, 8, 8}, 1);
    interior.assign({{4, 4, 4}}, Tensor<double>(1, 1, 2.5));
    SparseVolume d1 = dilate(interior);
    CHECK(d1.count() == 27);
    CHECK(d1.features().at(d1.row_of({4, 4, 4}), 0) == 2.5);  // original feature kept
    CHECK(d1.features().at(d1.row_of({4, 4, 5}), 0) == 0.0);  // new voxel zeroed

    SparseVolume corner(0, 0.04, {8, 8, 8}, 1);
    corner.assign({{0, 0, 0}}, Tensor<double>(1, 1));
    CHECK(dilate(corner).count() == 8);

    std::mt19937_64 rng(4);
    SparseVolume vol = random_volume({16, 16, 16}, 0.1, 1, rng);
    SparseVolume dil = dilate(vol);
    std::set<VoxelCoord> expected;
    for (auto c : vol.coords())
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    VoxelCoord d{c.x + dx, c.y + dy, c.z + dz};
                    if (vol.dims.contains(d)) expected.insert(d);
                }
    CHECK(active_set(dil) == expected);

    // extensive
    for (auto c : vol.coords()) CHECK(dil.active(c));

    // monotone: subset input gives subset output
    std::vector<VoxelCoord> half(vol.coords().begin(), vol.coords().begin() + vol.count() / 2);
    SparseVolume sub(0, 0.04, vol.dims, 1);
    sub.assign_zero(half);
    for (auto c : dilate(sub).coords()) CHECK(dil.active(c));
}

TEST_CASE("downsample: mean reduction and group-by oracle") {
    SparseVolume eight(0, 0.04, {2, 2, 2}, 1);
    std::vector<VoxelCoord> cs;
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y)
            for (int z = 0; z < 2; ++z) cs.push_back({x, y, z});
    eight.assign(cs, Tensor<double>(8, 1, 1.0));
    auto [par, map] = downsample(eight);
    REQUIRE(par.count() == 1);
    CHECK(par.features().v[0] == doctest::Approx(1.0));

    SparseVolume single(0, 0.04, {4, 4, 4}, 2);
    Tensor<double> f1(1, 2);
    f1.v = {0.25, -3.0};
    single.assign({{3, 1, 2}}, f1);
    auto [p1, m1] = downsample(single);
    CHECK(p1.features().v[0] == doctest::Approx(0.25));
    CHECK(p1.features().v[1] == doctest::Approx(-3.0));

    std::mt19937_64 rng(5);
    SparseVolume vol = random_volume({16, 16, 16}, 0.15, 3, rng);
    auto [coarse, cmap] = downsample(vol);
    for (int p = 0; p < coarse.count(); ++p) {
        const VoxelCoord pc = coarse.coords()[p];
        std::vector<int> rows;
        for (int i = 0; i < vol.count(); ++i)
            if (parent_of(vol.coords()[i]) == pc) rows.push_back(i);
        REQUIRE(!rows.empty());
        for (int j = 0; j < 3; ++j) {
            double mean = 0;
            for (int r : rows) mean += vol.features().at(r, j);
            mean /= static_cast<double>(rows.size());
            CHECK(coarse.features().at(p, j) == doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("upsample: round trip restores exact active set; features copied") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        SparseVolume vol = random_volume({16, 16, 16}, 0.1 + 0.05 * trial, 2, rng);
        auto [coarse, map] = downsample(vol);
        SparseVolume back = upsample(coarse, map);
        CHECK(active_set(back) == active_set(vol));
    }

    SparseVolume one(0, 0.08, {2, 2, 2}, 1);
    one.assign({{1, 1, 0}}, Tensor<double>(1, 1, 7.0));
    auto [p, m] = downsample(one);
    SparseVolume up = upsample(p, m);
    CHECK(up.features().v[0] == doctest::Approx(7.0));

    // missing parent is a structural error
    SparseVolume empty(0, 0.08, p.dims, 1);
    empty.assign({}, Tensor<double>(0, 1));
    CHECK_THROWS_AS(upsample(empty, m), StructuralError);
}

TEST_CASE("SparseVolume invariants: dims bound and duplicate rejection") {
    SparseVolume vol(0, 0.04, {2, 2, 2}, 1);
    CHECK_THROWS_AS(vol.assign({{5, 0, 0}}, Tensor<double>(1, 1)), StructuralError);
    CHECK_THROWS_AS(vol.assign({{0, 0, 0}, {0, 0, 0}}, Tensor<double>(2, 1)), StructuralError);
}

TEST_CASE("SVOL snapshot round trip") {
    std::mt19937_64 rng(7);
    SparseVolume vol = random_volume({6, 5, 4}, 0.4, 3, rng);
    vol.level = 2;
    vol.voxel_size = 0.16;
    std::stringstream ss;
    save_svol(ss, vol);
    // header spot checks: magic + version + level
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 4) == "SVOL");
    SparseVolume back = load_svol(ss);
    CHECK(back.level == 2);
    CHECK(back.dims == vol.dims);
    CHECK(back.channels == 3);
    CHECK(active_set(back) == active_set(vol));
    for (size_t i = 0; i < vol.features().v.size(); ++i)
        CHECK(back.features().v[i] == doctest::Approx(vol.features().v[i]).epsilon(1e-6));
}
