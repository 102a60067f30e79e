#pragma once

// Coarse-to-fine sparse transformer: per-level down/up flows with
// dilate-attention, a global bottom block, skip connections, and the
// occupancy / TSDF heads.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "svt/attention.hpp"
#include "svt/errors.hpp"
#include "svt/fusion.hpp"
#include "svt/params.hpp"
#include "svt/tape.hpp"
#include "svt/tsdf.hpp"
#include "svt/volume.hpp"

namespace svt {

// A sparse volume whose features live on a tape.
template <typename T>
struct TapeVolume {
    int level = 0;
    double voxel_size = 0.0;
    Dims3 dims;
    std::vector<VoxelCoord> coords;  // sorted
    Var feats;
};

using CoordIndex = std::unordered_map<VoxelCoord, int, VoxelCoordHash>;

inline CoordIndex index_coords(const std::vector<VoxelCoord>& coords) {
    CoordIndex idx;
    idx.reserve(coords.size());
    for (size_t i = 0; i < coords.size(); ++i) idx.emplace(coords[i], static_cast<int>(i));
    return idx;
}

inline SparseVolume structural(int level, double voxel_size, Dims3 dims,
                               const std::vector<VoxelCoord>& coords) {
    SparseVolume sv(level, voxel_size, dims, 1);
    sv.assign_zero(coords);
    return sv;
}

// Gathers the 27-cell neighborhood of each output coordinate from x into
// [N, 27*C], zero where the neighbor is inactive or out of bounds. Tap order
// is fixed (dx, dy, dz lexicographic) to match the conv parameter layout.
template <typename T>
Var gather_k3(Tape<T>& t, Var x, const std::vector<VoxelCoord>& out_coords, const CoordIndex& in_index,
              Dims3 dims) {
    const int n = static_cast<int>(out_coords.size());
    Var cat;
    bool first = true;
    for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dz = -1; dz <= 1; ++dz) {
                std::vector<int> idx(n, 0);
                std::vector<T> mask(n, T(0));
                for (int i = 0; i < n; ++i) {
                    const VoxelCoord c = {out_coords[i].x + dx, out_coords[i].y + dy,
                                          out_coords[i].z + dz};
                    if (!dims.contains(c)) continue;
                    auto it = in_index.find(c);
                    if (it == in_index.end()) continue;
                    idx[i] = it->second;
                    mask[i] = T(1);
                }
                Var tap = t.row_scale(t.gather_rows(x, std::move(idx)), std::move(mask));
                cat = first ? tap : t.concat_cols(cat, tap);
                first = false;
            }
    return cat;
}

// ---- dilate-attention ----

// Grow the active set by one ring, seed the new voxels from a kernel-3
// linear map over their active neighborhood, attend over the dilated set,
// then project (pre || attended) back down to the output width.
template <typename T>
struct DilateAttention {
    std::string prefix;
    int c_in = 0, c_out = 0;
    int heads = 2;
    int window = 3;

    void register_params(ParamStore& ps, std::mt19937_64& rng) const {
        ps.add_linear(prefix + ".k3_w", 27 * c_in, c_in, rng);
        AttentionBlock<T>{prefix + ".attn", c_in, heads}.register_params(ps, rng);
        ps.add_linear(prefix + ".join_w", 2 * c_in, c_out, rng);
        ps.add_bias(prefix + ".join_b", c_out);
    }

    TapeVolume<T> forward(Tape<T>& t, ParamCtx<T>& p, const TapeVolume<T>& v) const {
        if (v.coords.empty())
            return {v.level, v.voxel_size, v.dims, {}, t.constant(Tensor<T>(0, c_out))};

        SparseVolume dv = dilate(structural(v.level, v.voxel_size, v.dims, v.coords));
        const std::vector<VoxelCoord>& dc = dv.coords();
        const int nd = static_cast<int>(dc.size());
        CoordIndex orig = index_coords(v.coords);

        std::vector<int> old_rows, old_pos, new_pos;
        std::vector<VoxelCoord> new_coords;
        for (int i = 0; i < nd; ++i) {
            auto it = orig.find(dc[i]);
            if (it != orig.end()) {
                old_rows.push_back(it->second);
                old_pos.push_back(i);
            } else {
                new_coords.push_back(dc[i]);
                new_pos.push_back(i);
            }
        }

        Var pre = t.scatter_rows(t.gather_rows(v.feats, old_rows), old_pos, nd);
        if (!new_coords.empty()) {
            Var hood = gather_k3(t, v.feats, new_coords, orig, v.dims);
            Var seeded = t.matmul(hood, p[prefix + ".k3_w"]);
            pre = t.add(pre, t.scatter_rows(seeded, new_pos, nd));
        }

        EdgeList el = build_window_edges(dv, window);
        Var attended = AttentionBlock<T>{prefix + ".attn", c_in, heads}.forward(t, p, pre, el);
        Var out = t.add_rowvec(t.matmul(t.concat_cols(pre, attended), p[prefix + ".join_w"]),
                               p[prefix + ".join_b"]);
        return {v.level, v.voxel_size, v.dims, dc, out};
    }
};

// ---- level flows ----

struct LevelConfig {
    int level = 0;
    double voxel_size = 0.04;
    std::vector<int> widths;  // size depth + 1; widths[0] is the entry width
    int depth = 2;
    int window = 3;
    int heads = 2;

    int entry_channels() const { return widths.at(0); }
    void validate() const {
        if (static_cast<int>(widths.size()) != depth + 1)
            throw StructuralError("LevelConfig: widths must have depth + 1 entries");
        for (int w : widths)
            if (w <= 0 || w % heads != 0)
                throw StructuralError("LevelConfig: widths must be positive multiples of heads");
    }
};

template <typename T>
struct LevelFlow {
    std::vector<TapeVolume<T>> skips;
    std::vector<SampleMap> maps;
    TapeVolume<T> bottom;
};

template <typename T>
struct LevelBlock {
    std::string prefix;
    LevelConfig cfg;

    void register_params(ParamStore& ps, std::mt19937_64& rng) const {
        cfg.validate();
        for (int d = 0; d < cfg.depth; ++d) {
            const std::string dp = prefix + ".d" + std::to_string(d);
            DilateAttention<T>{dp + ".da", cfg.widths[d], cfg.widths[d + 1], cfg.heads, cfg.window}
                .register_params(ps, rng);
            AttentionBlock<T>{dp + ".a0", cfg.widths[d + 1], cfg.heads}.register_params(ps, rng);
            AttentionBlock<T>{dp + ".a1", cfg.widths[d + 1], cfg.heads}.register_params(ps, rng);
            ps.add_linear(prefix + ".u" + std::to_string(d) + ".up_w", cfg.widths[d + 1],
                          cfg.widths[d], rng);
            ps.add_bias(prefix + ".u" + std::to_string(d) + ".up_b", cfg.widths[d]);
            AttentionBlock<T>{prefix + ".u" + std::to_string(d) + ".a", cfg.widths[d], cfg.heads}
                .register_params(ps, rng);
        }
        const int cb = cfg.widths[cfg.depth];
        AttentionBlock<T>{prefix + ".bot.attn", cb, cfg.heads}.register_params(ps, rng);
        GlobalContextBlock<T>{prefix + ".bot.gc", cb}.register_params(ps, rng);
        DilateAttention<T>{prefix + ".post", cfg.widths[0], cfg.widths[0], cfg.heads, cfg.window}
            .register_params(ps, rng);
    }

    // downsample -> dilate-attention -> two window attention blocks, per depth
    LevelFlow<T> down_flow(Tape<T>& t, ParamCtx<T>& p, TapeVolume<T> v) const {
        LevelFlow<T> flow;
        for (int d = 0; d < cfg.depth; ++d) {
            flow.skips.push_back(v);
            auto [coarse, map] = downsample(structural(v.level, v.voxel_size, v.dims, v.coords));
            flow.maps.push_back(map);

            // mean-pool children onto parents
            const int n_fine = static_cast<int>(v.coords.size());
            const int n_parents = static_cast<int>(map.parents.size());
            std::vector<int> fine_to_parent(n_fine, 0);
            std::vector<T> inv(n_parents);
            for (int pi = 0; pi < n_parents; ++pi) {
                for (int r : map.children_rows[pi]) fine_to_parent[r] = pi;
                inv[pi] = T(1) / static_cast<T>(map.children_rows[pi].size());
            }
            Var pooled = t.row_scale(t.scatter_rows(v.feats, fine_to_parent, n_parents), inv);
            v = TapeVolume<T>{v.level, v.voxel_size * 2, v.dims.halved(), coarse.coords(), pooled};

            const std::string dp = prefix + ".d" + std::to_string(d);
            v = DilateAttention<T>{dp + ".da", cfg.widths[d], cfg.widths[d + 1], cfg.heads,
                                   cfg.window}
                    .forward(t, p, v);
            SparseVolume sv = structural(v.level, v.voxel_size, v.dims, v.coords);
            EdgeList el = build_window_edges(sv, cfg.window);
            const int cw = cfg.widths[d + 1];
            v.feats = AttentionBlock<T>{dp + ".a0", cw, cfg.heads}.forward(t, p, v.feats, el);
            v.feats = AttentionBlock<T>{dp + ".a1", cw, cfg.heads}.forward(t, p, v.feats, el);
        }
        flow.bottom = v;
        return flow;
    }

    // global attention + global context, both residual
    TapeVolume<T> bottom_block(Tape<T>& t, ParamCtx<T>& p, TapeVolume<T> v) const {
        if (static_cast<int>(v.coords.size()) > kGlobalAttentionCap)
            throw ResourceError("bottom_block: active count exceeds global attention cap");
        SparseVolume sv = structural(v.level, v.voxel_size, v.dims, v.coords);
        const int cb = cfg.widths[cfg.depth];
        v.feats = AttentionBlock<T>{prefix + ".bot.attn", cb, cfg.heads}.forward(
            t, p, v.feats, build_global_edges(sv));
        v.feats = GlobalContextBlock<T>{prefix + ".bot.gc", cb}.forward(t, p, v.feats, v.coords,
                                                                        v.dims);
        return v;
    }

    // upsample with a learned per-child transform, add the skip, one block
    TapeVolume<T> up_flow(Tape<T>& t, ParamCtx<T>& p, TapeVolume<T> v,
                          const LevelFlow<T>& flow) const {
        for (int d = cfg.depth - 1; d >= 0; --d) {
            const SampleMap& map = flow.maps[d];
            const TapeVolume<T>& skip = flow.skips[d];
            if (map.child_coords.size() != skip.coords.size())
                throw StructuralError("up_flow: skip/sample-map size mismatch");
            CoordIndex bot = index_coords(v.coords);
            std::vector<int> parent_row(map.child_coords.size());
            for (size_t pi = 0; pi < map.parents.size(); ++pi) {
                auto it = bot.find(map.parents[pi]);
                if (it == bot.end()) throw StructuralError("up_flow: parent missing from volume");
                for (int r : map.children_rows[pi]) parent_row[r] = it->second;
            }
            for (size_t r = 0; r < map.child_coords.size(); ++r)
                if (!(map.child_coords[r] == skip.coords[r]))
                    throw StructuralError("up_flow: skip coordinates disagree with sample map");

            const std::string up = prefix + ".u" + std::to_string(d);
            Var children = t.gather_rows(v.feats, parent_row);
            Var mapped = t.add_rowvec(t.matmul(children, p[up + ".up_w"]), p[up + ".up_b"]);
            Var added = t.add(mapped, skip.feats);
            SparseVolume sv = structural(skip.level, skip.voxel_size, skip.dims, skip.coords);
            Var out = AttentionBlock<T>{up + ".a", cfg.widths[d], cfg.heads}.forward(
                t, p, added, build_window_edges(sv, cfg.window));
            v = TapeVolume<T>{skip.level, skip.voxel_size, skip.dims, skip.coords, out};
        }
        return v;
    }

    TapeVolume<T> forward(Tape<T>& t, ParamCtx<T>& p, const TapeVolume<T>& v) const {
        LevelFlow<T> flow = down_flow(t, p, v);
        TapeVolume<T> bottom = bottom_block(t, p, flow.bottom);
        TapeVolume<T> up = up_flow(t, p, bottom, flow);
        return DilateAttention<T>{prefix + ".post", cfg.widths[0], cfg.widths[0], cfg.heads,
                                  cfg.window}
            .forward(t, p, up);
    }
};

// ---- heads ----

// Kernel-3 submanifold linear map to one channel; activation applied by the
// named wrappers below.
template <typename T>
struct ConvHead {
    std::string prefix;
    int channels = 0;

    void register_params(ParamStore& ps, std::mt19937_64& rng) const {
        // Zero-init so predictions start at the activation midpoint; with
        // unnormalised trunk features a fan-in of 27*channels otherwise
        // saturates tanh/sigmoid before training begins.
        (void)rng;
        ps.add(prefix + "_w", {27u, static_cast<uint32_t>(channels), 1u}, 27 * channels, 1);
        ps.add_bias(prefix + "_b", 1);
    }

    Var forward(Tape<T>& t, ParamCtx<T>& p, const TapeVolume<T>& v) const {
        CoordIndex idx = index_coords(v.coords);
        Var hood = gather_k3(t, v.feats, v.coords, idx, v.dims);
        return t.add_rowvec(t.matmul(hood, p[prefix + "_w"]), p[prefix + "_b"]);
    }
};

template <typename T>
Var occupancy_head(Tape<T>& t, ParamCtx<T>& p, const ConvHead<T>& head, const TapeVolume<T>& v) {
    return t.sigmoid_op(head.forward(t, p, v));
}

template <typename T>
Var tsdf_head(Tape<T>& t, ParamCtx<T>& p, const ConvHead<T>& head, const TapeVolume<T>& v) {
    return t.tanh_op(head.forward(t, p, v));
}

// ---- full coarse-to-fine pipeline ----

struct PipelineConfig {
    int feat_channels = 8;   // C per 2D pyramid level
    int fusion_hidden = 8;
    std::array<LevelConfig, 3> levels;  // [0] fine ... [2] coarse
    double occ_threshold = 0.5;
    std::array<double, 3> bounds_min = {0, 0, 0};
    std::array<double, 3> bounds_max = {1, 1, 1};

    PipelineConfig() {
        levels[0] = {0, 0.04, {8, 8, 8, 8, 8}, 4, 10, 2};
        levels[1] = {1, 0.08, {8, 8, 8, 8}, 3, 10, 2};
        levels[2] = {2, 0.16, {8, 8, 8}, 2, 10, 2};
    }
};

template <typename T>
struct LevelReport {
    int level = 0;
    double voxel_size = 0;
    Dims3 dims;
    std::vector<VoxelCoord> coords;  // voxels the head scored
    Var values;                      // occupancy probability, or TSDF at the fine level
    // per-(voxel, view) weight logits from fusion, for the projection loss
    Var view_logits;
    std::vector<int> edge_view, edge_voxel;
    std::vector<VoxelCoord> fused_coords;  // voxels entering the level (post view-drop)
};

template <typename T>
struct ForwardResult {
    LevelReport<T> coarse, medium, fine;
};

// Optional teacher forcing: when a gate is set, the next level's candidates
// come from ground-truth occupancy instead of the predicted one, keeping
// active sets fixed during training steps and gradient checks.
struct ForwardGates {
    const OccupancyVolume* coarse = nullptr;  // gates coarse -> medium
    const OccupancyVolume* medium = nullptr;  // gates medium -> fine
};

template <typename T>
class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
        for (const auto& l : cfg_.levels) l.validate();
    }

    const PipelineConfig& config() const { return cfg_; }

    void register_params(ParamStore& ps, uint64_t seed) const {
        std::mt19937_64 rng(seed);
        // +1: each view contributes its features plus a truncated depth cue
        FusionNet::register_params(ps, cfg_.feat_channels + 1, cfg_.fusion_hidden, rng());
        for (int l = 0; l < 3; ++l) {
            ps.add_linear("in" + std::to_string(l) + "_w", 2 * (cfg_.feat_channels + 1),
                          cfg_.levels[l].entry_channels(), rng);
            ps.add_bias("in" + std::to_string(l) + "_b", cfg_.levels[l].entry_channels());
            LevelBlock<T>{"lvl" + std::to_string(l), cfg_.levels[l]}.register_params(ps, rng);
        }
        ConvHead<T>{"occ2", cfg_.levels[2].entry_channels()}.register_params(ps, rng);
        ConvHead<T>{"occ1", cfg_.levels[1].entry_channels()}.register_params(ps, rng);
        ConvHead<T>{"tsdf0", cfg_.levels[0].entry_channels()}.register_params(ps, rng);
    }

    Dims3 coarse_dims() const {
        const auto& lo = cfg_.bounds_min;
        const auto& hi = cfg_.bounds_max;
        const double vs = cfg_.levels[2].voxel_size;
        Dims3 d = {static_cast<int>(std::floor((hi[0] - lo[0]) / vs)),
                   static_cast<int>(std::floor((hi[1] - lo[1]) / vs)),
                   static_cast<int>(std::floor((hi[2] - lo[2]) / vs))};
        if (d.x < 1 || d.y < 1 || d.z < 1)
            throw DegenerateSceneError(2, "scene bounds smaller than one coarse voxel");
        return d;
    }

    ForwardResult<T> forward(Tape<T>& t, ParamCtx<T>& p, const std::vector<CameraView>& views,
                             const ForwardGates& gates = {}) const {
        if (views.empty()) throw std::invalid_argument("pipeline: need at least one view");
        ForwardResult<T> res;

        Dims3 cd = coarse_dims();
        std::vector<VoxelCoord> candidates;
        for (int x = 0; x < cd.x; ++x)
            for (int y = 0; y < cd.y; ++y)
                for (int z = 0; z < cd.z; ++z) candidates.push_back({x, y, z});

        res.coarse = run_level(t, p, views, 2, cd, std::move(candidates));
        candidates = next_candidates(res.coarse, t, gates.coarse, 2);
        res.medium = run_level(t, p, views, 1, {cd.x * 2, cd.y * 2, cd.z * 2}, std::move(candidates));
        candidates = next_candidates(res.medium, t, gates.medium, 1);
        res.fine = run_level(t, p, views, 0, {cd.x * 4, cd.y * 4, cd.z * 4}, std::move(candidates));
        return res;
    }

    // Densify the fine-level TSDF onto its grid; untouched voxels stay +1.
    TsdfVolume densify(const Tape<T>& t, const LevelReport<T>& fine) const {
        // centre-anchored: each node holds the value at its voxel centre
        TsdfVolume out(fine.dims, fine.voxel_size,
                       {cfg_.bounds_min[0] + 0.5 * fine.voxel_size,
                        cfg_.bounds_min[1] + 0.5 * fine.voxel_size,
                        cfg_.bounds_min[2] + 0.5 * fine.voxel_size});
        const Tensor<T>& v = t.val(fine.values);
        for (size_t i = 0; i < fine.coords.size(); ++i) {
            const VoxelCoord c = fine.coords[i];
            out.set(c.x, c.y, c.z, static_cast<double>(v.at(static_cast<int>(i), 0)));
        }
        return out;
    }

private:
    LevelReport<T> run_level(Tape<T>& t, ParamCtx<T>& p, const std::vector<CameraView>& views,
                             int level, Dims3 dims, std::vector<VoxelCoord> candidates) const {
        const LevelConfig& lc = cfg_.levels[level];
        if (candidates.empty()) throw DegenerateSceneError(level, "no candidate voxels at level");

        // back-project every view onto the candidate set; the fine voxel
        // level reads the finest 2D map (pyramid index 0 = 1/4 resolution)
        const int pyramid = level;
        std::vector<Tensor<double>> feats;
        std::vector<std::vector<uint8_t>> seen;
        for (const auto& view : views) {
            const FeatureMap& fm = view.feats.at(pyramid);
            const double k_scale = 1.0 / static_cast<double>(4 << pyramid);
            BackProjection bp = back_project(view, fm, k_scale, candidates, lc.voxel_size,
                                             cfg_.bounds_min);
            feats.push_back(std::move(bp.feats));
            seen.push_back(std::move(bp.seen));
        }

        // drop voxels no view sees
        std::vector<int> keep;
        for (size_t m = 0; m < candidates.size(); ++m)
            for (const auto& s : seen)
                if (s[m]) {
                    keep.push_back(static_cast<int>(m));
                    break;
                }
        if (keep.empty()) throw DegenerateSceneError(level, "no voxel visible in any view");
        std::vector<VoxelCoord> coords;
        std::vector<Tensor<double>> kf(views.size(), Tensor<double>(static_cast<int>(keep.size()),
                                                                    cfg_.feat_channels + 1));
        std::vector<std::vector<uint8_t>> ks(views.size(),
                                             std::vector<uint8_t>(keep.size(), 0));
        for (size_t r = 0; r < keep.size(); ++r) {
            coords.push_back(candidates[keep[r]]);
            for (size_t i = 0; i < views.size(); ++i) {
                ks[i][r] = seen[i][keep[r]];
                for (int c = 0; c < cfg_.feat_channels; ++c)
                    kf[i].at(static_cast<int>(r), c) = feats[i].at(keep[r], c);
                // last channel: rendered depth at the projected pixel minus the
                // voxel's camera-space z, truncated -- the in-front/behind cue
                // the image features alone cannot express
                kf[i].at(static_cast<int>(r), cfg_.feat_channels) =
                    depth_cue(views[i], candidates[keep[r]], lc.voxel_size);
            }
        }

        LevelReport<T> rep;
        rep.level = level;
        rep.voxel_size = lc.voxel_size;
        rep.dims = dims;
        rep.fused_coords = coords;

        Var fused = fuse_forward(t, p, kf, ks, &rep.view_logits, &rep.edge_view, &rep.edge_voxel);
        const std::string in = "in" + std::to_string(level);
        Var x = t.add_rowvec(t.matmul(fused, p[in + "_w"]), p[in + "_b"]);

        TapeVolume<T> v{level, lc.voxel_size, dims, coords, x};
        TapeVolume<T> out = LevelBlock<T>{"lvl" + std::to_string(level), lc}.forward(t, p, v);

        rep.coords = out.coords;
        if (level == 0) {
            rep.values = tsdf_head(t, p, ConvHead<T>{"tsdf0", lc.entry_channels()}, out);
        } else {
            rep.values = occupancy_head(
                t, p, ConvHead<T>{"occ" + std::to_string(level), lc.entry_channels()}, out);
        }
        return rep;
    }

    // Truncated signed distance along the view ray: depth map sample at the
    // voxel's full-resolution pixel minus the voxel's camera-space z, clamped
    // to [-1, 1] at three voxels. Zero when the view has no depth or the
    // voxel projects off-image.
    double depth_cue(const CameraView& view, const VoxelCoord& c, double voxel_size) const {
        const FeatureMap& dm = view.depth;
        if (dm.data.v.empty()) return 0.0;
        const double X[3] = {cfg_.bounds_min[0] + (c.x + 0.5) * voxel_size,
                             cfg_.bounds_min[1] + (c.y + 0.5) * voxel_size,
                             cfg_.bounds_min[2] + (c.z + 0.5) * voxel_size};
        double cam[3];
        for (int i = 0; i < 3; ++i)
            cam[i] = view.P[i * 4 + 0] * X[0] + view.P[i * 4 + 1] * X[1] +
                     view.P[i * 4 + 2] * X[2] + view.P[i * 4 + 3];
        if (cam[2] <= 0) return 0.0;
        const double u = (view.K[0] * cam[0] + view.K[1] * cam[1] + view.K[2] * cam[2]) / cam[2];
        const double v = (view.K[4] * cam[1] + view.K[5] * cam[2]) / cam[2];
        if (u < 0 || u > dm.w - 1 || v < 0 || v > dm.h - 1) return 0.0;
        // nearest pixel: interpolating across the invalid (zero) sentinel or a
        // depth discontinuity would fabricate surfaces
        const int px = static_cast<int>(std::lround(u));
        const int py = static_cast<int>(std::lround(v));
        const double d = *dm.at(px, py);
        if (d <= 0.0) return 1.0;  // ray miss: observed free space past the voxel
        return std::clamp((d - cam[2]) / (3.0 * voxel_size), -1.0, 1.0);
    }

    std::vector<VoxelCoord> next_candidates(const LevelReport<T>& rep, const Tape<T>& t,
                                            const OccupancyVolume* gate, int level) const {
        std::vector<VoxelCoord> parents;
        if (gate) {
            for (const VoxelCoord& c : rep.coords)
                if (gate->value_at(c) >= cfg_.occ_threshold) parents.push_back(c);
        } else {
            const Tensor<T>& v = t.val(rep.values);
            for (size_t i = 0; i < rep.coords.size(); ++i)
                if (static_cast<double>(v.at(static_cast<int>(i), 0)) >= cfg_.occ_threshold)
                    parents.push_back(rep.coords[i]);
        }
        if (parents.empty())
            throw DegenerateSceneError(level - 1, "no occupied parent voxels to refine");
        std::vector<VoxelCoord> children;
        children.reserve(parents.size() * 8);
        for (const VoxelCoord& c : parents)
            for (int dx = 0; dx < 2; ++dx)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dz = 0; dz < 2; ++dz)
                        children.push_back({2 * c.x + dx, 2 * c.y + dy, 2 * c.z + dz});
        std::sort(children.begin(), children.end());
        return children;
    }

    PipelineConfig cfg_;
};

}  // namespace svt
