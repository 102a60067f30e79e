#pragma once

// View selection, pinhole back-projection of 2D feature maps into sparse
// voxel grids, and variance-weighted multi-view fusion.

#include <algorithm>
#include <array>
#include <cmath>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "svt/errors.hpp"
#include "svt/params.hpp"
#include "svt/tape.hpp"
#include "svt/volume.hpp"

namespace svt {

// Row-major image-plane feature grid; rows indexed y * w + x.
struct FeatureMap {
    int h = 0, w = 0, c = 0;
    Tensor<double> data;

    FeatureMap() = default;
    FeatureMap(int h_, int w_, int c_) : h(h_), w(w_), c(c_), data(h_ * w_, c_) {}
    const double* at(int x, int y) const { return data.row(y * w + x); }
    double* at(int x, int y) { return data.row(y * w + x); }
};

struct CameraView {
    int id = 0;
    std::array<double, 9> K{};    // row-major 3x3 intrinsics
    std::array<double, 16> P{};   // row-major 4x4 world -> camera
    std::vector<FeatureMap> feats;  // one per pyramid level, finest first
    FeatureMap depth;               // optional, c = 1

    void validate() const {
        if (K[0] <= 0 || K[4] <= 0) throw StructuralError("CameraView: focal entries must be positive");
        if (K[3] != 0 || K[6] != 0 || K[7] != 0)
            throw StructuralError("CameraView: intrinsics must be upper triangular");
        // rotation block orthonormal, right handed
        double rtr[3][3] = {};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) rtr[i][j] += P[k * 4 + i] * P[k * 4 + j];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (std::fabs(rtr[i][j] - (i == j ? 1.0 : 0.0)) > 1e-5)
                    throw StructuralError("CameraView: rotation block not orthonormal");
        const auto r = [&](int i, int j) { return P[i * 4 + j]; };
        const double det = r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) -
                           r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0)) +
                           r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
        if (std::fabs(det - 1.0) > 1e-5) throw StructuralError("CameraView: rotation det != +1");
        if (P[12] != 0 || P[13] != 0 || P[14] != 0 || P[15] != 1)
            throw StructuralError("CameraView: bottom extrinsics row must be 0 0 0 1");
    }
};

// ---- view selection ----

inline std::array<double, 3> camera_center(const std::array<double, 16>& P) {
    // C = -R^T t for world->camera [R|t]
    std::array<double, 3> c{};
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) c[i] -= P[k * 4 + i] * P[k * 4 + 3];
    return c;
}

inline double relative_rotation_deg(const std::array<double, 16>& A, const std::array<double, 16>& B) {
    // trace(Ra * Rb^T)
    double tr = 0;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) tr += A[i * 4 + k] * B[i * 4 + k];
    const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c) * 180.0 / M_PI;
}

// Greedy keyframe gate: keep a frame only when it moved more than 0.1 m AND
// rotated more than 15 degrees since the last kept frame. Over-long results
// are thinned by a seeded uniform subsample.
inline std::vector<int> select_views(const std::vector<std::array<double, 16>>& trajectory,
                                     int limit, uint64_t seed,
                                     double min_translation = 0.1, double min_rotation_deg = 15.0) {
    if (trajectory.empty()) throw std::invalid_argument("select_views: empty trajectory");
    if (limit <= 0) throw std::invalid_argument("select_views: limit must be positive");
    std::vector<int> kept = {0};
    for (int i = 1; i < static_cast<int>(trajectory.size()); ++i) {
        const auto& prev = trajectory[kept.back()];
        const auto ca = camera_center(prev);
        const auto cb = camera_center(trajectory[i]);
        const double dt = std::sqrt((ca[0] - cb[0]) * (ca[0] - cb[0]) +
                                    (ca[1] - cb[1]) * (ca[1] - cb[1]) +
                                    (ca[2] - cb[2]) * (ca[2] - cb[2]));
        const double dr = relative_rotation_deg(prev, trajectory[i]);
        if (dt > min_translation && dr > min_rotation_deg) kept.push_back(i);
    }
    if (static_cast<int>(kept.size()) > limit) {
        std::mt19937_64 rng(seed);
        std::vector<int> sub;
        std::sample(kept.begin(), kept.end(), std::back_inserter(sub), limit, rng);
        return sub;
    }
    return kept;
}

// ---- back-projection ----

struct BackProjection {
    Tensor<double> feats;        // one row per queried voxel
    std::vector<uint8_t> seen;   // 0 = behind camera or off image
};

// Projects voxel centers through K*(R|t) and bilinearly samples the feature
// map. `k_scale` rescales the pixel rows of K when the map is a pyramid level
// below full image resolution.
inline BackProjection back_project(const CameraView& view, const FeatureMap& fm, double k_scale,
                                   const std::vector<VoxelCoord>& coords, double voxel_size,
                                   const std::array<double, 3>& origin) {
    view.validate();
    const int n = static_cast<int>(coords.size());
    BackProjection out{Tensor<double>(n, fm.c), std::vector<uint8_t>(n, 0)};
    for (int m = 0; m < n; ++m) {
        const double X[3] = {origin[0] + (coords[m].x + 0.5) * voxel_size,
                             origin[1] + (coords[m].y + 0.5) * voxel_size,
                             origin[2] + (coords[m].z + 0.5) * voxel_size};
        double cam[3];
        for (int i = 0; i < 3; ++i)
            cam[i] = view.P[i * 4 + 0] * X[0] + view.P[i * 4 + 1] * X[1] +
                     view.P[i * 4 + 2] * X[2] + view.P[i * 4 + 3];
        if (cam[2] <= 0) continue;
        const double u = k_scale * (view.K[0] * cam[0] + view.K[1] * cam[1] + view.K[2] * cam[2]) / cam[2];
        const double v = k_scale * (view.K[4] * cam[1] + view.K[5] * cam[2]) / cam[2];
        if (u < 0 || u > fm.w - 1 || v < 0 || v > fm.h - 1) continue;
        out.seen[m] = 1;
        const int x0 = static_cast<int>(std::floor(u));
        const int y0 = static_cast<int>(std::floor(v));
        const int x1 = std::min(x0 + 1, fm.w - 1);
        const int y1 = std::min(y0 + 1, fm.h - 1);
        const double fx = u - x0, fy = v - y0;
        const double* p00 = fm.at(x0, y0);
        const double* p10 = fm.at(x1, y0);
        const double* p01 = fm.at(x0, y1);
        const double* p11 = fm.at(x1, y1);
        double* dst = out.feats.row(m);
        for (int c = 0; c < fm.c; ++c)
            dst[c] = (1 - fy) * ((1 - fx) * p00[c] + fx * p10[c]) +
                     fy * ((1 - fx) * p01[c] + fx * p11[c]);
    }
    return out;
}

// ---- variance-weighted fusion ----

// Per-view scalar gate: 2-layer perceptron over (features || variance).
struct FusionNet {
    static void register_params(ParamStore& ps, int channels, int hidden, uint64_t seed) {
        std::mt19937_64 rng(seed);
        ps.add_linear("fuse.w1", 2 * channels, hidden, rng);
        ps.add_bias("fuse.b1", hidden);
        ps.add_linear("fuse.w2", hidden, 1, rng);
        ps.add_bias("fuse.b2", 1);
    }
};

// Fuses per-view back-projected features into (weighted mean || mean
// variance). Rows seen by zero views come back all zero. When `logits_out`
// is set it receives the pre-softmax view weights, one row per (voxel, view)
// edge in voxel-major order; `edge_view_out`/`edge_voxel_out` describe the
// edge layout for callers that need per-view weights downstream.
template <typename T>
Var fuse_forward(Tape<T>& t, ParamCtx<T>& p, const std::vector<Tensor<double>>& views,
                 const std::vector<std::vector<uint8_t>>& seen, Var* logits_out = nullptr,
                 std::vector<int>* edge_view_out = nullptr,
                 std::vector<int>* edge_voxel_out = nullptr) {
    if (views.empty()) throw std::invalid_argument("fuse: need at least one view");
    if (views.size() != seen.size()) throw StructuralError("fuse: seen mask count mismatch");
    const int m = views[0].rows;
    const int c = views[0].cols;
    for (size_t i = 0; i < views.size(); ++i) {
        if (views[i].rows != m || views[i].cols != c) throw StructuralError("fuse: grid mismatch");
        if (static_cast<int>(seen[i].size()) != m) throw StructuralError("fuse: grid mismatch");
    }

    // voxel-major edge list over (voxel, seeing view) pairs
    std::vector<int> edge_voxel, edge_view;
    SegmentOffsets offsets = {0};
    std::vector<T> inv_n(m, T(0));
    for (int v = 0; v < m; ++v) {
        int count = 0;
        for (size_t i = 0; i < views.size(); ++i)
            if (seen[i][v]) {
                edge_voxel.push_back(v);
                edge_view.push_back(static_cast<int>(i));
                ++count;
            }
        offsets.push_back(static_cast<int>(edge_voxel.size()));
        if (count > 0) inv_n[v] = T(1) / T(count);
    }
    const int e = static_cast<int>(edge_voxel.size());
    if (e == 0) throw DegenerateSceneError(0, "fuse: no voxel is seen by any view");

    // means and variances depend only on the inputs; plain double math
    Tensor<double> mean(m, c);
    for (int k = 0; k < e; ++k)
        for (int j = 0; j < c; ++j) mean.at(edge_voxel[k], j) += views[edge_view[k]].at(edge_voxel[k], j);
    for (int v = 0; v < m; ++v)
        for (int j = 0; j < c; ++j) mean.at(v, j) *= static_cast<double>(inv_n[v]);

    Tensor<T> x_edge(e, c), var_edge(e, c);
    Tensor<double> var_mean(m, c);
    for (int k = 0; k < e; ++k)
        for (int j = 0; j < c; ++j) {
            const double x = views[edge_view[k]].at(edge_voxel[k], j);
            const double d = x - mean.at(edge_voxel[k], j);
            x_edge.at(k, j) = static_cast<T>(x);
            var_edge.at(k, j) = static_cast<T>(d * d);
            var_mean.at(edge_voxel[k], j) += d * d * static_cast<double>(inv_n[edge_voxel[k]]);
        }

    Var xc = t.constant(x_edge);
    Var cat = t.concat_cols(xc, t.constant(var_edge));
    Var h = t.gelu(t.add_rowvec(t.matmul(cat, p["fuse.w1"]), p["fuse.b1"]));
    Var logits = t.add_rowvec(t.matmul(h, p["fuse.w2"]), p["fuse.b2"]);
    if (logits_out) *logits_out = logits;
    if (edge_view_out) *edge_view_out = edge_view;
    if (edge_voxel_out) *edge_voxel_out = edge_voxel;

    Var w = t.segment_softmax(logits, offsets);
    Var weighted = t.head_scale(xc, w);
    Var fused = t.row_scale(t.scatter_rows(weighted, edge_voxel, m), inv_n);
    return t.concat_cols(fused, t.constant(var_mean.template cast<T>()));
}

struct FusedVolume {
    SparseVolume vol;        // channels = 2 * C_2D, unseen voxels dropped
    std::vector<int> hits;   // seeing-view count per kept voxel
};

// Eager wrapper over fuse_forward for inference paths. Voxels seen by zero
// views are left out of the fused volume.
inline FusedVolume fuse(const std::vector<BackProjection>& views, ParamStore& store, int level,
                        double voxel_size, Dims3 dims, const std::vector<VoxelCoord>& coords) {
    if (views.empty()) throw std::invalid_argument("fuse: need at least one view");
    std::vector<Tensor<double>> feats;
    std::vector<std::vector<uint8_t>> seen;
    for (const auto& v : views) {
        feats.push_back(v.feats);
        seen.push_back(v.seen);
    }
    Tape<double> t;
    ParamCtx<double> p(t, store);
    Var out = fuse_forward(t, p, feats, seen);
    const Tensor<double>& o = t.val(out);

    std::vector<int> hits(coords.size(), 0);
    for (const auto& s : seen)
        for (size_t m = 0; m < s.size(); ++m) hits[m] += s[m];

    std::vector<VoxelCoord> kept;
    std::vector<int> kept_hits;
    std::vector<int> rows;
    for (size_t m = 0; m < coords.size(); ++m)
        if (hits[m] > 0) {
            kept.push_back(coords[m]);
            kept_hits.push_back(hits[m]);
            rows.push_back(static_cast<int>(m));
        }
    Tensor<double> f(static_cast<int>(kept.size()), o.cols);
    for (size_t r = 0; r < rows.size(); ++r)
        for (int j = 0; j < o.cols; ++j) f.at(static_cast<int>(r), j) = o.at(rows[r], j);

    FusedVolume fv{SparseVolume(level, voxel_size, dims, o.cols), std::move(kept_hits)};
    fv.vol.assign(std::move(kept), std::move(f));
    return fv;
}

// ---- stand-in 2D backbone ----

// Four stride-2 3x3 convolutions; the last three outputs are the 1/4, 1/8
// and 1/16 resolution pyramid levels.
struct FeatureExtractor {
    int channels = 8;

    void register_params(ParamStore& ps, uint64_t seed) const {
        std::mt19937_64 rng(seed);
        int in = 3;
        for (int k = 1; k <= 4; ++k) {
            ps.add_linear("feat.conv" + std::to_string(k) + "_w", 9 * in, channels, rng);
            ps.add_bias("feat.conv" + std::to_string(k) + "_b", channels);
            in = channels;
        }
    }

    // 3x3 / stride 2 / zero pad 1 convolution via shifted gathers
    template <typename T>
    static Var conv_s2(Tape<T>& t, Var x, int h, int w, Var wt, Var b) {
        const int ho = h / 2, wo = w / 2;
        Var cat;
        bool first = true;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                std::vector<int> idx(ho * wo, 0);
                std::vector<T> mask(ho * wo, T(0));
                for (int yo = 0; yo < ho; ++yo)
                    for (int xo = 0; xo < wo; ++xo) {
                        const int yi = 2 * yo + dy, xi = 2 * xo + dx;
                        if (yi < 0 || yi >= h || xi < 0 || xi >= w) continue;
                        idx[yo * wo + xo] = yi * w + xi;
                        mask[yo * wo + xo] = T(1);
                    }
                Var tap = t.row_scale(t.gather_rows(x, std::move(idx)), std::move(mask));
                cat = first ? tap : t.concat_cols(cat, tap);
                first = false;
            }
        return t.add_rowvec(t.matmul(cat, wt), b);
    }

    // image rows indexed y * w + x, 3 columns; returns 1/4, 1/8, 1/16 maps
    template <typename T>
    std::array<Var, 3> forward(Tape<T>& t, ParamCtx<T>& p, Var image, int h, int w) const {
        if (h % 16 != 0 || w % 16 != 0)
            throw std::invalid_argument("feature extractor: image dims must be divisible by 16");
        if (t.val(image).rows != h * w || t.val(image).cols != 3)
            throw StructuralError("feature extractor: image shape mismatch");
        std::array<Var, 3> out;
        Var x = image;
        int ch = h, cw = w;
        for (int k = 1; k <= 4; ++k) {
            x = t.gelu(conv_s2(t, x, ch, cw, p["feat.conv" + std::to_string(k) + "_w"],
                               p["feat.conv" + std::to_string(k) + "_b"]));
            ch /= 2;
            cw /= 2;
            if (k >= 2) out[k - 2] = x;
        }
        return out;
    }
};

// Eager extractor for view ingestion.
inline std::vector<FeatureMap> toy_feature_extractor(const Tensor<double>& image, int h, int w,
                                                     ParamStore& store, int channels) {
    Tape<double> t;
    ParamCtx<double> p(t, store);
    FeatureExtractor fe{channels};
    auto maps = fe.forward(t, p, t.constant(image), h, w);
    std::vector<FeatureMap> out;
    for (int l = 0; l < 3; ++l) {
        const int s = 4 << l;
        FeatureMap fm(h / s, w / s, channels);
        fm.data = t.val(maps[l]);
        out.push_back(std::move(fm));
    }
    return out;
}

}  // namespace svt
