#pragma once

// Ground-truth occupancy, training losses, and mesh/depth evaluation metrics.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "svt/errors.hpp"
#include "svt/fusion.hpp"
#include "svt/mesh.hpp"
#include "svt/tape.hpp"
#include "svt/tsdf.hpp"
#include "svt/volume.hpp"

namespace svt {

struct MetricsReport {
    // 3D, meters / ratios
    double acc = 0, comp = 0, chamfer = 0, prec = 0, recall = 0, fscore = 0;
    // 2D depth
    double abs_rel = 0, abs_diff = 0, sq_rel = 0, rmse = 0;
    double delta1 = 0, delta2 = 0, delta3 = 0;

    std::string to_text() const {
        std::ostringstream os;
        os.precision(6);
        os << "acc: " << acc << "\ncomp: " << comp << "\nchamfer: " << chamfer
           << "\nprec: " << prec << "\nrecall: " << recall << "\nfscore: " << fscore
           << "\nabs_rel: " << abs_rel << "\nabs_diff: " << abs_diff << "\nsq_rel: " << sq_rel
           << "\nrmse: " << rmse << "\ndelta1: " << delta1 << "\ndelta2: " << delta2
           << "\ndelta3: " << delta3 << "\n";
        return os.str();
    }
};

// ---- ground truth ----

// A voxel is occupied when its TSDF fell inside the truncation band; voxels
// the GT generator marked as untruncated free space stay unoccupied even
// though they store +1.
inline OccupancyVolume occupancy_gt(const TsdfVolume& tsdf, int level = 0) {
    std::vector<VoxelCoord> coords;
    std::vector<double> values;
    for (int x = 0; x < tsdf.dims.x; ++x)
        for (int y = 0; y < tsdf.dims.y; ++y)
            for (int z = 0; z < tsdf.dims.z; ++z) {
                const double v = tsdf.at(x, y, z);
                const bool occ = std::fabs(v) <= 1.0 && !tsdf.free_space[tsdf.index(x, y, z)];
                coords.push_back({x, y, z});
                values.push_back(occ ? 1.0 : 0.0);
            }
    OccupancyVolume occ;
    occ.level = level;
    occ.voxel_size = tsdf.voxel_size;
    occ.dims = tsdf.dims;
    occ.assign(std::move(coords), std::move(values));
    return occ;
}

// Coarser GT level: a parent is occupied when any child is (max-pool).
inline OccupancyVolume coarsen_occupancy(const OccupancyVolume& fine) {
    std::map<VoxelCoord, double> parents;
    for (size_t i = 0; i < fine.coords().size(); ++i) {
        VoxelCoord p = parent_of(fine.coords()[i]);
        auto [it, inserted] = parents.emplace(p, fine.values()[i]);
        if (!inserted) it->second = std::max(it->second, fine.values()[i]);
    }
    std::vector<VoxelCoord> coords;
    std::vector<double> values;
    for (const auto& [c, v] : parents) {
        coords.push_back(c);
        values.push_back(v);
    }
    OccupancyVolume out;
    out.level = fine.level + 1;
    out.voxel_size = fine.voxel_size * 2.0;
    out.dims = fine.dims.halved();
    out.assign(std::move(coords), std::move(values));
    return out;
}

// ---- losses (tape-resident, single-column inputs) ----

constexpr double kLogLossEps = 1e-4;

// log-L1 on TSDF magnitudes plus an L1 penalty where the signs disagree.
// When the signs disagree the log distance is measured through zero
// (|s| -> eps, then eps -> |gt|): comparing raw magnitudes there puts a
// 1/eps gradient wall at zero that traps predictions on the wrong side.
template <typename T>
Var tsdf_loss(Tape<T>& t, Var pred, const std::vector<double>& gt) {
    const Tensor<T>& p = t.val(pred);
    if (p.cols != 1 || static_cast<size_t>(p.rows) != gt.size())
        throw StructuralError("tsdf_loss: shape mismatch");
    if (gt.empty()) throw StructuralError("tsdf_loss: empty");
    const int n = p.rows;
    const double log_eps = std::log(kLogLossEps);
    Tensor<T> log_gt(n, 1), gt_col(n, 1), through_zero(n, 1);
    std::vector<T> agree(n), disagree(n);
    for (int i = 0; i < n; ++i) {
        log_gt.at(i, 0) = static_cast<T>(std::log(std::fabs(gt[i]) + kLogLossEps));
        gt_col.at(i, 0) = static_cast<T>(gt[i]);
        const bool mismatch = (p.at(i, 0) < 0) != (gt[i] < 0);
        agree[i] = mismatch ? T(0) : T(1);
        disagree[i] = mismatch ? T(1) : T(0);
        through_zero.at(i, 0) = static_cast<T>(
            mismatch ? std::log(std::fabs(gt[i]) + kLogLossEps) - 2.0 * log_eps : 0.0);
    }
    Var mag = t.log_op(t.add_scalar(t.abs_op(pred), T(kLogLossEps)));
    Var log_agree = t.row_scale(t.abs_op(t.sub(mag, t.constant(log_gt))), std::move(agree));
    // (log(|s|+eps) - log eps) + (log(|gt|+eps) - log eps), descending toward 0
    Var log_disagree = t.row_scale(t.add(mag, t.constant(through_zero)), disagree);
    Var sign_term = t.row_scale(t.abs_op(t.sub(pred, t.constant(gt_col))), std::move(disagree));
    return t.mean_all(t.add(t.add(log_agree, log_disagree), sign_term));
}

constexpr double kBceClamp = 1e-6;

// Two-sided binary cross-entropy over probabilities (already in [0,1]),
// clamped away from the log singularities.
template <typename T>
Var bce_loss(Tape<T>& t, Var prob, const std::vector<double>& gt) {
    const Tensor<T>& q = t.val(prob);
    if (q.cols != 1 || static_cast<size_t>(q.rows) != gt.size())
        throw StructuralError("bce: shape mismatch");
    if (gt.empty()) throw StructuralError("bce: empty");
    const int n = q.rows;
    std::vector<T> pos(n), neg(n);
    for (int i = 0; i < n; ++i) {
        if (gt[i] != 0.0 && gt[i] != 1.0) throw StructuralError("bce: labels must be 0/1");
        pos[i] = static_cast<T>(gt[i]);
        neg[i] = static_cast<T>(1.0 - gt[i]);
    }
    Var p = t.clamp_op(prob, T(kBceClamp), T(1.0 - kBceClamp));
    Var one = t.constant(Tensor<T>(n, 1, T(1)));
    Var lp = t.log_op(p);
    Var lq = t.log_op(t.sub(one, p));
    Var per_row = t.add(t.row_scale(lp, std::move(pos)), t.row_scale(lq, std::move(neg)));
    return t.scale(t.mean_all(per_row), T(-1));
}

template <typename T>
Var occupancy_loss(Tape<T>& t, Var pred_occ, const std::vector<double>& gt) {
    return bce_loss(t, pred_occ, gt);
}

// Per-view projective occupancy label: 1 when the voxel center projects to a
// valid depth pixel within the truncation distance of the observed surface,
// 0 when it is visibly off the surface, -1 when the view cannot label it.
inline std::vector<int> projection_occupancy_labels(const CameraView& view,
                                                    const std::vector<VoxelCoord>& coords,
                                                    double voxel_size,
                                                    const std::array<double, 3>& origin,
                                                    double delta) {
    if (view.depth.c != 1 || view.depth.h == 0) throw StructuralError("projection labels: view has no depth map");
    view.validate();
    std::vector<int> labels(coords.size(), -1);
    for (size_t m = 0; m < coords.size(); ++m) {
        const double X[3] = {origin[0] + (coords[m].x + 0.5) * voxel_size,
                             origin[1] + (coords[m].y + 0.5) * voxel_size,
                             origin[2] + (coords[m].z + 0.5) * voxel_size};
        double cam[3];
        for (int i = 0; i < 3; ++i)
            cam[i] = view.P[i * 4 + 0] * X[0] + view.P[i * 4 + 1] * X[1] +
                     view.P[i * 4 + 2] * X[2] + view.P[i * 4 + 3];
        if (cam[2] <= 0) continue;
        const double u = (view.K[0] * cam[0] + view.K[1] * cam[1] + view.K[2] * cam[2]) / cam[2];
        const double v = (view.K[4] * cam[1] + view.K[5] * cam[2]) / cam[2];
        if (u < 0 || u > view.depth.w - 1 || v < 0 || v > view.depth.h - 1) continue;
        const int px = static_cast<int>(std::lround(u));
        const int py = static_cast<int>(std::lround(v));
        const double d = view.depth.at(px, py)[0];
        if (d <= 0) continue;  // invalid depth pixel
        labels[m] = std::fabs(cam[2] - d) < delta ? 1 : 0;
    }
    return labels;
}

// BCE between sigmoid(view weight logits) and the projective labels, over
// voxels the view can label.
template <typename T>
Var projection_weight_loss(Tape<T>& t, Var logits, const std::vector<int>& labels) {
    const Tensor<T>& l = t.val(logits);
    if (l.cols != 1 || static_cast<size_t>(l.rows) != labels.size())
        throw StructuralError("projection_weight_loss: shape mismatch");
    std::vector<int> rows;
    std::vector<double> gt;
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0) {
            rows.push_back(static_cast<int>(i));
            gt.push_back(labels[i]);
        }
    if (rows.empty()) throw DegenerateSceneError(0, "projection_weight_loss: no labellable voxel");
    Var visible = t.gather_rows(logits, std::move(rows));
    return bce_loss(t, t.sigmoid_op(visible), gt);
}

struct LossWeights {
    double tsdf = 1.0;
    double occupancy = 1.0;
    double projection = 1.0;
};

// L = w_t * L0 + w_o * sum_l L^l + w_p * sum L_w^l
template <typename T>
Var total_loss(Tape<T>& t, Var tsdf_term, const std::vector<Var>& occ_terms,
               const std::vector<Var>& proj_terms, const LossWeights& w = {}) {
    Var total = t.scale(tsdf_term, T(w.tsdf));
    for (Var o : occ_terms) total = t.add(total, t.scale(o, T(w.occupancy)));
    for (Var p : proj_terms) total = t.add(total, t.scale(p, T(w.projection)));
    return total;
}

// ---- mesh metrics ----

namespace detail {

// Area-weighted uniform surface samples.
inline std::vector<std::array<double, 3>> sample_surface(const TriangleMesh& mesh, int samples,
                                                         std::mt19937_64& rng) {
    std::vector<double> cum;
    cum.reserve(mesh.triangles.size());
    double total = 0;
    for (const auto& t : mesh.triangles) {
        const auto& a = mesh.vertices[t[0]];
        const auto& b = mesh.vertices[t[1]];
        const auto& c = mesh.vertices[t[2]];
        const double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
        const double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
        const double cx = uy * vz - uz * vy, cy = uz * vx - ux * vz, cz = ux * vy - uy * vx;
        total += 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
        cum.push_back(total);
    }
    if (total <= 0) throw StructuralError("mesh_metrics: zero surface area");
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<std::array<double, 3>> pts;
    pts.reserve(samples);
    for (int s = 0; s < samples; ++s) {
        const double r = uni(rng) * total;
        const size_t ti = std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
        const auto& t = mesh.triangles[std::min(ti, mesh.triangles.size() - 1)];
        const auto& a = mesh.vertices[t[0]];
        const auto& b = mesh.vertices[t[1]];
        const auto& c = mesh.vertices[t[2]];
        double r1 = std::sqrt(uni(rng)), r2 = uni(rng);
        // p = a + u*(b-a) + v*(c-a): keeps coordinates constant across the
        // triangle exactly constant, so threshold-boundary cases stay exact
        const double u = r1 * (1 - r2), v = r1 * r2;
        pts.push_back({a[0] + u * (b[0] - a[0]) + v * (c[0] - a[0]),
                       a[1] + u * (b[1] - a[1]) + v * (c[1] - a[1]),
                       a[2] + u * (b[2] - a[2]) + v * (c[2] - a[2])});
    }
    return pts;
}

// Uniform-cell hash grid for nearest-neighbor queries with expanding shells.
class PointGrid {
public:
    PointGrid(const std::vector<std::array<double, 3>>& pts, double cell)
        : pts_(pts), cell_(cell) {
        for (size_t i = 0; i < pts.size(); ++i) cells_[key(pts[i])].push_back(static_cast<int>(i));
    }

    double nearest_dist(const std::array<double, 3>& q) const {
        double best = std::numeric_limits<double>::infinity();
        const VoxelCoord qc = key(q);
        for (int ring = 0;; ++ring) {
            // once a candidate exists, rings beyond best/cell cannot improve
            if (std::isfinite(best) && (ring - 1) * cell_ > best) return best;
            bool any_cell = scan_ring(q, qc, ring, best);
            if (!any_cell && ring > 0 && !cells_.empty() && ring > max_ring_) return best;
        }
    }

private:
    VoxelCoord key(const std::array<double, 3>& p) const {
        return {static_cast<int32_t>(std::floor(p[0] / cell_)),
                static_cast<int32_t>(std::floor(p[1] / cell_)),
                static_cast<int32_t>(std::floor(p[2] / cell_))};
    }

    bool scan_ring(const std::array<double, 3>& q, VoxelCoord qc, int ring, double& best) const {
        bool touched = false;
        for (int dx = -ring; dx <= ring; ++dx)
            for (int dy = -ring; dy <= ring; ++dy)
                for (int dz = -ring; dz <= ring; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
                    auto it = cells_.find({qc.x + dx, qc.y + dy, qc.z + dz});
                    if (it == cells_.end()) continue;
                    touched = true;
                    for (int i : it->second) {
                        const auto& p = pts_[i];
                        const double d = std::sqrt((p[0] - q[0]) * (p[0] - q[0]) +
                                                   (p[1] - q[1]) * (p[1] - q[1]) +
                                                   (p[2] - q[2]) * (p[2] - q[2]));
                        best = std::min(best, d);
                    }
                }
        return touched;
    }

    const std::vector<std::array<double, 3>>& pts_;
    double cell_;
    std::unordered_map<VoxelCoord, std::vector<int>, VoxelCoordHash> cells_;
    // crude bail-out bound: grid diameter in cells
    static constexpr int max_ring_ = 1 << 20;
};

}  // namespace detail

// Squared distance from p to triangle abc (closest-point case analysis).
inline double point_triangle_dist2(const std::array<double, 3>& p, const std::array<double, 3>& a,
                                   const std::array<double, 3>& b, const std::array<double, 3>& c) {
    const auto sub3 = [](const std::array<double, 3>& u, const std::array<double, 3>& v) {
        return std::array<double, 3>{u[0] - v[0], u[1] - v[1], u[2] - v[2]};
    };
    const auto dot3 = [](const std::array<double, 3>& u, const std::array<double, 3>& v) {
        return u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    };
    const auto ab = sub3(b, a), ac = sub3(c, a), ap = sub3(p, a);
    const double d1 = dot3(ab, ap), d2 = dot3(ac, ap);
    if (d1 <= 0 && d2 <= 0) return dot3(ap, ap);
    const auto bp = sub3(p, b);
    const double d3 = dot3(ab, bp), d4 = dot3(ac, bp);
    if (d3 >= 0 && d4 <= d3) return dot3(bp, bp);
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        const double v = d1 / (d1 - d3);
        const std::array<double, 3> q = {a[0] + v * ab[0], a[1] + v * ab[1], a[2] + v * ab[2]};
        const auto pq = sub3(p, q);
        return dot3(pq, pq);
    }
    const auto cp = sub3(p, c);
    const double d5 = dot3(ab, cp), d6 = dot3(ac, cp);
    if (d6 >= 0 && d5 <= d6) return dot3(cp, cp);
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
        const double w = d2 / (d2 - d6);
        const std::array<double, 3> q = {a[0] + w * ac[0], a[1] + w * ac[1], a[2] + w * ac[2]};
        const auto pq = sub3(p, q);
        return dot3(pq, pq);
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        const std::array<double, 3> q = {b[0] + w * (c[0] - b[0]), b[1] + w * (c[1] - b[1]),
                                         b[2] + w * (c[2] - b[2])};
        const auto pq = sub3(p, q);
        return dot3(pq, pq);
    }
    // interior: a point exactly in the triangle plane is exactly at distance 0;
    // the barycentric reconstruction below would leave ~1e-17 of residue
    const std::array<double, 3> n = {ab[1] * ac[2] - ab[2] * ac[1], ab[2] * ac[0] - ab[0] * ac[2],
                                     ab[0] * ac[1] - ab[1] * ac[0]};
    if (dot3(ap, n) == 0.0) return 0.0;
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    const std::array<double, 3> q = {a[0] + ab[0] * v + ac[0] * w, a[1] + ab[1] * v + ac[1] * w,
                                     a[2] + ab[2] * v + ac[2] * w};
    const auto pq = sub3(p, q);
    return dot3(pq, pq);
}

namespace detail {

// Hash-grid over triangles; each triangle is registered in every cell its
// bounding box overlaps, so an expanding-shell search stays exact.
class MeshDistance {
public:
    MeshDistance(const TriangleMesh& mesh, double cell) : mesh_(mesh), cell_(cell) {
        for (size_t ti = 0; ti < mesh.triangles.size(); ++ti) {
            const auto& t = mesh.triangles[ti];
            std::array<double, 3> lo = mesh.vertices[t[0]], hi = lo;
            for (int k = 1; k < 3; ++k)
                for (int j = 0; j < 3; ++j) {
                    lo[j] = std::min(lo[j], mesh.vertices[t[k]][j]);
                    hi[j] = std::max(hi[j], mesh.vertices[t[k]][j]);
                }
            const VoxelCoord clo = key(lo), chi = key(hi);
            for (int x = clo.x; x <= chi.x; ++x)
                for (int y = clo.y; y <= chi.y; ++y)
                    for (int z = clo.z; z <= chi.z; ++z)
                        cells_[{x, y, z}].push_back(static_cast<int>(ti));
        }
        stamps_.assign(mesh.triangles.size(), -1);
    }

    double distance(const std::array<double, 3>& q) const {
        ++query_;
        double best2 = std::numeric_limits<double>::infinity();
        const VoxelCoord qc = key(q);
        for (int ring = 0;; ++ring) {
            if (std::isfinite(best2)) {
                const double bound = (ring - 1) * cell_;
                if (bound > 0 && bound * bound > best2) break;
            }
            for (int dx = -ring; dx <= ring; ++dx)
                for (int dy = -ring; dy <= ring; ++dy)
                    for (int dz = -ring; dz <= ring; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
                        auto it = cells_.find({qc.x + dx, qc.y + dy, qc.z + dz});
                        if (it == cells_.end()) continue;
                        for (int ti : it->second) {
                            if (stamps_[ti] == query_) continue;
                            stamps_[ti] = query_;
                            const auto& t = mesh_.triangles[ti];
                            best2 = std::min(best2, point_triangle_dist2(q, mesh_.vertices[t[0]],
                                                                         mesh_.vertices[t[1]],
                                                                         mesh_.vertices[t[2]]));
                        }
                    }
        }
        return std::sqrt(best2);
    }

private:
    VoxelCoord key(const std::array<double, 3>& p) const {
        return {static_cast<int32_t>(std::floor(p[0] / cell_)),
                static_cast<int32_t>(std::floor(p[1] / cell_)),
                static_cast<int32_t>(std::floor(p[2] / cell_))};
    }

    const TriangleMesh& mesh_;
    double cell_;
    std::unordered_map<VoxelCoord, std::vector<int>, VoxelCoordHash> cells_;
    mutable std::vector<int> stamps_;
    mutable int query_ = 0;
};

}  // namespace detail

inline MetricsReport point_set_metrics(const std::vector<std::array<double, 3>>& pred,
                                       const std::vector<std::array<double, 3>>& gt,
                                       double tau = 0.05) {
    if (pred.empty() || gt.empty()) throw StructuralError("metrics: empty point set");
    detail::PointGrid gt_grid(gt, tau);
    detail::PointGrid pred_grid(pred, tau);
    MetricsReport r;
    int prec_hits = 0;
    for (const auto& p : pred) {
        const double d = gt_grid.nearest_dist(p);
        r.acc += d;
        if (d < tau) ++prec_hits;  // strict
    }
    r.acc /= static_cast<double>(pred.size());
    r.prec = static_cast<double>(prec_hits) / static_cast<double>(pred.size());
    int rec_hits = 0;
    for (const auto& g : gt) {
        const double d = pred_grid.nearest_dist(g);
        r.comp += d;
        if (d < tau) ++rec_hits;
    }
    r.comp /= static_cast<double>(gt.size());
    r.recall = static_cast<double>(rec_hits) / static_cast<double>(gt.size());
    r.chamfer = 0.5 * (r.acc + r.comp);
    r.fscore = (r.prec + r.recall) > 0 ? 2.0 * r.prec * r.recall / (r.prec + r.recall) : 0.0;
    return r;
}

// Acc/Prec from pred samples against the gt surface, Comp/Recall from gt
// samples against the pred surface (exact point-to-triangle distances).
inline MetricsReport mesh_metrics(const TriangleMesh& pred, const TriangleMesh& gt,
                                  double tau = 0.05, int samples = 10000, uint64_t seed = 7) {
    if (pred.empty() || gt.empty()) throw StructuralError("mesh_metrics: empty mesh");
    std::mt19937_64 rng(seed);
    auto ps = detail::sample_surface(pred, samples, rng);
    auto gs = detail::sample_surface(gt, samples, rng);
    detail::MeshDistance gt_surf(gt, tau);
    detail::MeshDistance pred_surf(pred, tau);
    MetricsReport r;
    int prec_hits = 0, rec_hits = 0;
    for (const auto& p : ps) {
        const double d = gt_surf.distance(p);
        r.acc += d;
        if (d < tau) ++prec_hits;  // strict, per the metric definition
    }
    for (const auto& g : gs) {
        const double d = pred_surf.distance(g);
        r.comp += d;
        if (d < tau) ++rec_hits;
    }
    r.acc /= static_cast<double>(ps.size());
    r.comp /= static_cast<double>(gs.size());
    r.chamfer = 0.5 * (r.acc + r.comp);
    r.prec = static_cast<double>(prec_hits) / static_cast<double>(ps.size());
    r.recall = static_cast<double>(rec_hits) / static_cast<double>(gs.size());
    r.fscore = (r.prec + r.recall) > 0 ? 2.0 * r.prec * r.recall / (r.prec + r.recall) : 0.0;
    return r;
}

// ---- depth metrics ----

// Pixels are valid when both maps are positive; reported over that set.
inline MetricsReport depth_metrics(const FeatureMap& pred, const FeatureMap& gt) {
    if (pred.h != gt.h || pred.w != gt.w || pred.c != 1 || gt.c != 1)
        throw StructuralError("depth_metrics: shape mismatch");
    MetricsReport r;
    int n = 0;
    for (int i = 0; i < pred.h * pred.w; ++i) {
        const double d = pred.data.at(i, 0);
        const double g = gt.data.at(i, 0);
        if (d <= 0 || g <= 0) continue;
        ++n;
        const double diff = std::fabs(d - g);
        r.abs_rel += diff / g;
        r.abs_diff += diff;
        r.sq_rel += diff * diff / g;
        r.rmse += diff * diff;
        const double ratio = std::max(d / g, g / d);
        if (ratio < 1.25) ++r.delta1;
        if (ratio < 1.25 * 1.25) ++r.delta2;
        if (ratio < 1.25 * 1.25 * 1.25) ++r.delta3;
    }
    if (n == 0) throw DegenerateSceneError(0, "depth_metrics: no mutually valid pixel");
    r.abs_rel /= n;
    r.abs_diff /= n;
    r.sq_rel /= n;
    r.rmse = std::sqrt(r.rmse / n);
    r.delta1 /= n;
    r.delta2 /= n;
    r.delta3 /= n;
    return r;
}

}  // namespace svt
