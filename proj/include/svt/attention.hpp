#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>

#include "svt/params.hpp"
#include "svt/tape.hpp"
#include "svt/volume.hpp"

namespace svt {

// Flattened neighbor structure for one attention pass. Edge e connects query
// row src[e] to neighbor row dst[e]; edges are grouped contiguously per query
// in lexicographic coordinate order, so seg has one range per query row.
struct EdgeList {
    std::vector<int> src, dst;
    std::vector<std::array<int, 3>> offsets;  // v_j - v_i per edge
    SegmentOffsets seg;                       // size N+1

    size_t edge_count() const { return src.size(); }
};

// All active voxels within the n-window of each active voxel. Every query
// includes itself (offset 0).
inline EdgeList build_window_edges(const SparseVolume& vol, int n) {
    const WindowSpan w(n);
    EdgeList el;
    el.seg.reserve(vol.count() + 1);
    el.seg.push_back(0);
    for (int i = 0; i < vol.count(); ++i) {
        const VoxelCoord c = vol.coords()[i];
        for (int dx = w.lo; dx <= w.hi; ++dx)
            for (int dy = w.lo; dy <= w.hi; ++dy)
                for (int dz = w.lo; dz <= w.hi; ++dz) {
                    const int j = vol.row_of({c.x + dx, c.y + dy, c.z + dz});
                    if (j < 0) continue;
                    el.src.push_back(i);
                    el.dst.push_back(j);
                    el.offsets.push_back({dx, dy, dz});
                }
        el.seg.push_back(static_cast<int>(el.src.size()));
    }
    return el;
}

inline EdgeList build_global_edges(const SparseVolume& vol) {
    EdgeList el;
    const int n = vol.count();
    el.seg.reserve(n + 1);
    el.seg.push_back(0);
    for (int i = 0; i < n; ++i) {
        const VoxelCoord ci = vol.coords()[i];
        for (int j = 0; j < n; ++j) {
            const VoxelCoord cj = vol.coords()[j];
            el.src.push_back(i);
            el.dst.push_back(j);
            el.offsets.push_back({cj.x - ci.x, cj.y - ci.y, cj.z - ci.z});
        }
        el.seg.push_back(static_cast<int>(el.src.size()));
    }
    return el;
}

// Pre-norm transformer block around the windowed attention:
//   x + W_o(MHA(LN(x)))  followed by  x + FFN(LN(x)), FFN expansion 2x.
// Scores use Q_i . (K_j + P_j) / sqrt(head_dim) and values (V_j + P_j), with
// P_j a linear embedding of the integer offset v_j - v_i shared across heads.
template <typename T>
struct AttentionBlock {
    std::string prefix;
    int channels = 0;
    int heads = 4;

    void register_params(ParamStore& ps, std::mt19937_64& rng) const {
        ps.add_linear(prefix + ".wq", channels, channels, rng);
        ps.add_bias(prefix + ".bq", channels);
        // no key bias: a constant added to every key cancels in the softmax
        ps.add_linear(prefix + ".wk", channels, channels, rng);
        ps.add_linear(prefix + ".wv", channels, channels, rng);
        ps.add_bias(prefix + ".bv", channels);
        ps.add_linear(prefix + ".wp", 3, channels, rng);
        ps.add_bias(prefix + ".bp", channels);
        ps.add_linear(prefix + ".wo", channels, channels, rng);
        ps.add_bias(prefix + ".bo", channels);
        ps.add_ones(prefix + ".ln1_g", channels);
        ps.add_bias(prefix + ".ln1_b", channels);
        ps.add_ones(prefix + ".ln2_g", channels);
        ps.add_bias(prefix + ".ln2_b", channels);
        ps.add_linear(prefix + ".ff1_w", channels, 2 * channels, rng);
        ps.add_bias(prefix + ".ff1_b", 2 * channels);
        ps.add_linear(prefix + ".ff2_w", 2 * channels, channels, rng);
        ps.add_bias(prefix + ".ff2_b", channels);
    }

    // When `weights_out` is non-null the post-softmax edge weights [E, H] are
    // reported for invariant checks.
    Var forward(Tape<T>& t, ParamCtx<T>& p, Var x, const EdgeList& el, Var* weights_out = nullptr) const {
        if (t.val(x).cols != channels) throw StructuralError("attention: channel mismatch");
        const int n_rows = t.val(x).rows;
        const int d = channels / heads;

        Var h = t.layer_norm(x, p[prefix + ".ln1_g"], p[prefix + ".ln1_b"]);
        Var q = t.add_rowvec(t.matmul(h, p[prefix + ".wq"]), p[prefix + ".bq"]);
        Var k = t.matmul(h, p[prefix + ".wk"]);
        Var v = t.add_rowvec(t.matmul(h, p[prefix + ".wv"]), p[prefix + ".bv"]);

        Tensor<T> offs(static_cast<int>(el.edge_count()), 3);
        for (size_t e = 0; e < el.edge_count(); ++e)
            for (int a = 0; a < 3; ++a) offs.at(static_cast<int>(e), a) = static_cast<T>(el.offsets[e][a]);
        Var pe = t.add_rowvec(t.matmul(t.constant(std::move(offs)), p[prefix + ".wp"]), p[prefix + ".bp"]);

        Var qe = t.gather_rows(q, el.src);
        Var ke = t.add(t.gather_rows(k, el.dst), pe);
        Var ve = t.add(t.gather_rows(v, el.dst), pe);

        Var scores = t.scale(t.head_dot(qe, ke, heads), T(1) / std::sqrt(static_cast<T>(d)));
        Var w = t.segment_softmax(scores, el.seg);
        if (weights_out) *weights_out = w;
        Var mixed = t.scatter_rows(t.head_scale(ve, w), el.src, n_rows);
        Var attn = t.add_rowvec(t.matmul(mixed, p[prefix + ".wo"]), p[prefix + ".bo"]);
        Var x1 = t.add(x, attn);

        Var h2 = t.layer_norm(x1, p[prefix + ".ln2_g"], p[prefix + ".ln2_b"]);
        Var f1 = t.gelu(t.add_rowvec(t.matmul(h2, p[prefix + ".ff1_w"]), p[prefix + ".ff1_b"]));
        Var f2 = t.add_rowvec(t.matmul(f1, p[prefix + ".ff2_w"]), p[prefix + ".ff2_b"]);
        return t.add(x1, f2);
    }
};

// Multi-scale global average pooling (scales 1, 2, 3): per-cell means are
// linearly mapped, the covering cells' codes are fused back to C channels and
// added residually onto every voxel.
template <typename T>
struct GlobalContextBlock {
    std::string prefix;
    int channels = 0;
    static constexpr int kScales[3] = {1, 2, 3};

    void register_params(ParamStore& ps, std::mt19937_64& rng) const {
        for (int s : kScales) {
            ps.add_linear(prefix + ".pool" + std::to_string(s) + "_w", channels, channels, rng);
            ps.add_bias(prefix + ".pool" + std::to_string(s) + "_b", channels);
        }
        ps.add_linear(prefix + ".fuse_w", 3 * channels, channels, rng);
        ps.add_bias(prefix + ".fuse_b", channels);
    }

    Var forward(Tape<T>& t, ParamCtx<T>& p, Var x, const std::vector<VoxelCoord>& coords,
                Dims3 dims) const {
        const int n = static_cast<int>(coords.size());
        Var ctx;  // concat over scales of per-voxel pooled codes
        for (int s : kScales) {
            std::vector<int> cell(n);
            std::vector<int> counts(s * s * s, 0);
            for (int i = 0; i < n; ++i) {
                const int cx = std::min(s - 1, static_cast<int>(int64_t(coords[i].x) * s / std::max(1, dims.x)));
                const int cy = std::min(s - 1, static_cast<int>(int64_t(coords[i].y) * s / std::max(1, dims.y)));
                const int cz = std::min(s - 1, static_cast<int>(int64_t(coords[i].z) * s / std::max(1, dims.z)));
                cell[i] = (cx * s + cy) * s + cz;
                ++counts[cell[i]];
            }
            std::vector<T> inv(counts.size());
            for (size_t c = 0; c < counts.size(); ++c)
                inv[c] = counts[c] > 0 ? T(1) / static_cast<T>(counts[c]) : T(0);
            Var pooled = t.row_scale(t.scatter_rows(x, cell, s * s * s), inv);
            Var code = t.add_rowvec(t.matmul(pooled, p[prefix + ".pool" + std::to_string(s) + "_w"]),
                                    p[prefix + ".pool" + std::to_string(s) + "_b"]);
            Var per_voxel = t.gather_rows(code, cell);
            ctx = ctx.valid() ? t.concat_cols(ctx, per_voxel) : per_voxel;
        }
        Var fused = t.add_rowvec(t.matmul(ctx, p[prefix + ".fuse_w"]), p[prefix + ".fuse_b"]);
        return t.add(x, fused);
    }
};

// ---- eager single-op entry points ----

struct AttentionParams {
    ParamStore store;
    int channels = 0;
    int heads = 4;

    static AttentionParams make(int channels, int heads, uint64_t seed) {
        AttentionParams p;
        p.channels = channels;
        p.heads = heads;
        std::mt19937_64 rng(seed);
        AttentionBlock<double>{"attn", channels, heads}.register_params(p.store, rng);
        return p;
    }
};

inline SparseVolume run_attention_block(const SparseVolume& vol, AttentionParams& params,
                                        const EdgeList& el) {
    if (vol.channels != params.channels) throw StructuralError("attention: channel mismatch");
    Tape<double> t;
    ParamCtx<double> p(t, params.store);
    Var x = t.leaf(vol.features(), false);
    AttentionBlock<double> block{"attn", params.channels, params.heads};
    Var y = block.forward(t, p, x, el);
    SparseVolume out(vol.level, vol.voxel_size, vol.dims, vol.channels);
    out.assign(vol.coords(), t.val(y));
    return out;
}

inline SparseVolume sparse_window_attention(const SparseVolume& vol, AttentionParams& params, int n) {
    if (n < 1) throw std::invalid_argument("sparse_window_attention: n must be >= 1");
    return run_attention_block(vol, params, build_window_edges(vol, n));
}

inline constexpr int kGlobalAttentionCap = 4096;

inline SparseVolume global_attention(const SparseVolume& vol, AttentionParams& params,
                                     int cap = kGlobalAttentionCap) {
    if (vol.count() > cap)
        throw ResourceError("global_attention: active count " + std::to_string(vol.count()) +
                            " exceeds cap " + std::to_string(cap));
    return run_attention_block(vol, params, build_global_edges(vol));
}

struct GlobalContextParams {
    ParamStore store;
    int channels = 0;

    static GlobalContextParams make(int channels, uint64_t seed) {
        GlobalContextParams p;
        p.channels = channels;
        std::mt19937_64 rng(seed);
        GlobalContextBlock<double>{"gc", channels}.register_params(p.store, rng);
        return p;
    }
};

inline SparseVolume global_context(const SparseVolume& vol, GlobalContextParams& params) {
    Tape<double> t;
    ParamCtx<double> p(t, params.store);
    Var x = t.leaf(vol.features(), false);
    GlobalContextBlock<double> block{"gc", params.channels};
    Var y = block.forward(t, p, x, vol.coords(), vol.dims);
    SparseVolume out(vol.level, vol.voxel_size, vol.dims, vol.channels);
    out.assign(vol.coords(), t.val(y));
    return out;
}

// Attention pair counts: dense is the all-voxel quadratic count, sparse is the
// exact sum of per-query window neighbor counts.
struct PairCount {
    uint64_t sparse_pairs = 0;
    uint64_t dense_pairs = 0;
};

inline PairCount pair_count(const SparseVolume& vol, int n) {
    PairCount pc;
    const uint64_t total = static_cast<uint64_t>(vol.dims.total());
    pc.dense_pairs = total * total;
    const WindowSpan w(n);
    for (int i = 0; i < vol.count(); ++i) {
        const VoxelCoord c = vol.coords()[i];
        for (int dx = w.lo; dx <= w.hi; ++dx)
            for (int dy = w.lo; dy <= w.hi; ++dy)
                for (int dz = w.lo; dz <= w.hi; ++dz)
                    if (vol.active({c.x + dx, c.y + dy, c.z + dz})) ++pc.sparse_pairs;
    }
    return pc;
}

}  // namespace svt
