#include "svt/runner.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "svt/config.hpp"
#include "svt/mesh.hpp"
#include "svt/pipeline.hpp"
#include "svt/scene.hpp"
#include "svt/supervision.hpp"

namespace svt {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Config load_config(const RunOptions& opts) {
    return opts.config_path.empty() ? Config{} : Config::parse_file(opts.config_path);
}

PipelineConfig make_pipeline_config(const Config& cfg, const SceneSpec& spec) {
    PipelineConfig pc;
    pc.feat_channels = cfg.get_int("feat_channels", 8);
    pc.fusion_hidden = cfg.get_int("fusion_hidden", 16);
    pc.occ_threshold = cfg.get_double("occ_threshold", 0.5);
    pc.bounds_min = spec.bounds_min;
    pc.bounds_max = spec.bounds_max;
    const int defaults[3] = {4, 3, 2};
    for (int l = 0; l < 3; ++l) {
        LevelConfig& lc = pc.levels[l];
        lc.level = l;
        lc.voxel_size = spec.voxel_size * (1 << l);
        lc.depth = cfg.get_int("depth" + std::to_string(l), defaults[l]);
        lc.heads = cfg.get_int("heads", 2);
        lc.window = cfg.get_int("window", 10);
        const int width = cfg.get_int("width", 8);
        lc.widths.assign(lc.depth + 1, width);
        lc.validate();
    }
    return pc;
}

// Runs the 2D backbone once per view and stores the pyramid as plain maps
// (finest first); the 3D pipeline consumes them as constants.
void fill_pyramids(std::vector<CameraView>& views, ParamStore& store, int channels) {
    FeatureExtractor fx{channels};
    for (auto& v : views) {
        const FeatureMap& img = v.feats.at(0);
        Tape<double> t;
        ParamCtx<double> p(t, store);
        auto maps = fx.forward(t, p, t.constant(img.data), img.h, img.w);
        std::vector<FeatureMap> pyr;
        for (int l = 0; l < 3; ++l) {
            FeatureMap fm(img.h >> (2 + l), img.w >> (2 + l), channels);
            fm.data = t.val(maps[l]);
            pyr.push_back(std::move(fm));
        }
        v.feats = std::move(pyr);
    }
}

// Trilinear TSDF lookup at a world point; outside the grid reads +1.
double sample_tsdf(const TsdfVolume& v, double wx, double wy, double wz) {
    const double gx = (wx - v.origin[0]) / v.voxel_size;
    const double gy = (wy - v.origin[1]) / v.voxel_size;
    const double gz = (wz - v.origin[2]) / v.voxel_size;
    const int x0 = static_cast<int>(std::floor(gx));
    const int y0 = static_cast<int>(std::floor(gy));
    const int z0 = static_cast<int>(std::floor(gz));
    const double fx = gx - x0, fy = gy - y0, fz = gz - z0;
    double acc = 0;
    for (int dx = 0; dx < 2; ++dx)
        for (int dy = 0; dy < 2; ++dy)
            for (int dz = 0; dz < 2; ++dz) {
                const int x = x0 + dx, y = y0 + dy, z = z0 + dz;
                const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                const double val = (x < 0 || y < 0 || z < 0 || x >= v.dims.x || y >= v.dims.y ||
                                    z >= v.dims.z)
                                       ? 1.0
                                       : v.at(x, y, z);
                acc += w * val;
            }
    return acc;
}

// Ray-marches the reconstructed TSDF to produce a camera depth map for the
// 2D error metrics; 0 marks a miss.
FeatureMap raycast_depth(const TsdfVolume& tsdf, const CameraView& view, int size) {
    FeatureMap out(size, size, 1);
    const double fx = view.K[0], fy = view.K[4], cx = view.K[2], cy = view.K[5];
    const auto eye = camera_center(view.P);
    const double step = 0.5 * tsdf.voxel_size;
    const double diag = tsdf.voxel_size * std::sqrt(double(tsdf.dims.x) * tsdf.dims.x +
                                                    double(tsdf.dims.y) * tsdf.dims.y +
                                                    double(tsdf.dims.z) * tsdf.dims.z);
    const double t_max = 4.0 * (1.0 + diag);
    for (int py = 0; py < size; ++py)
        for (int px = 0; px < size; ++px) {
            const double dc[3] = {(px - cx) / fx, (py - cy) / fy, 1.0};
            double dir[3] = {0, 0, 0};
            for (int a = 0; a < 3; ++a)
                for (int r = 0; r < 3; ++r) dir[a] += view.P[r * 4 + a] * dc[r];
            const double dn = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
            for (double& d : dir) d /= dn;
            const double z_per_t = dc[2] / dn;  // camera z advanced per unit ray length

            double prev = 1.0, t_prev = 0.0;
            for (double t = step; t < t_max; t += step) {
                const double cur = sample_tsdf(tsdf, eye[0] + t * dir[0], eye[1] + t * dir[1],
                                               eye[2] + t * dir[2]);
                if (prev > 0 && cur <= 0) {
                    const double th = t_prev + step * prev / (prev - cur);
                    out.at(px, py)[0] = th * z_per_t;
                    break;
                }
                prev = cur;
                t_prev = t;
            }
        }
    return out;
}

template <typename T>
TsdfVolume run_forward(const PipelineConfig& pc, ParamStore& store,
                       const std::vector<CameraView>& views, ForwardResult<T>* result_out) {
    Pipeline<T> pipe(pc);
    Tape<T> t;
    ParamCtx<T> p(t, store);
    ForwardResult<T> res = pipe.forward(t, p, views);
    TsdfVolume dense = pipe.densify(t, res.fine);
    if (result_out) *result_out = std::move(res);
    return dense;
}

struct Adam {
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double clip = 1.0;  // per-element gradient clip; <= 0 disables
    int step_count = 0;
    std::map<std::string, Tensor<double>> m, v;

    void step(ParamStore& store) {
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, step_count);
        const double bc2 = 1.0 - std::pow(beta2, step_count);
        for (auto& [name, e] : store.entries_mut()) {
            if (e.grad.size() != e.value.size()) continue;
            auto& mi = m.try_emplace(name, Tensor<double>(e.value.rows, e.value.cols)).first->second;
            auto& vi = v.try_emplace(name, Tensor<double>(e.value.rows, e.value.cols)).first->second;
            for (size_t i = 0; i < e.value.v.size(); ++i) {
                const double g =
                    clip > 0 ? std::clamp(e.grad.v[i], -clip, clip) : e.grad.v[i];
                mi.v[i] = beta1 * mi.v[i] + (1 - beta1) * g;
                vi.v[i] = beta2 * vi.v[i] + (1 - beta2) * g * g;
                e.value.v[i] -= lr * (mi.v[i] / bc1) / (std::sqrt(vi.v[i] / bc2) + eps);
            }
        }
    }
};

struct TrainTargets {
    OccupancyVolume fine_occ, med_occ, coarse_occ;
};

TrainTargets make_targets(const TsdfVolume& gt) {
    TrainTargets t;
    t.fine_occ = occupancy_gt(gt);
    t.med_occ = coarsen_occupancy(t.fine_occ);
    t.coarse_occ = coarsen_occupancy(t.med_occ);
    return t;
}

template <typename T>
Var step_loss(Tape<T>& t, ParamCtx<T>& p, const Pipeline<T>& pipe,
              const std::vector<CameraView>& views, const ForwardGates& gates,
              const TsdfVolume& gt_tsdf, const TrainTargets& tg, const LossWeights& w,
              double proj_delta) {
    ForwardResult<T> res = pipe.forward(t, p, views, gates);

    // soften the clamped +-1 targets: exact +-1 drives the tanh head into
    // saturation where its gradient dies and the surface band can't pull back
    std::vector<double> gt_sdf(res.fine.coords.size(), 0.95);
    for (size_t i = 0; i < res.fine.coords.size(); ++i) {
        const VoxelCoord c = res.fine.coords[i];
        if (gt_tsdf.dims.contains(c))
            gt_sdf[i] = std::clamp(gt_tsdf.at(c.x, c.y, c.z), -0.95, 0.95);
    }
    Var lt = tsdf_loss(t, res.fine.values, gt_sdf);

    auto occ_term = [&](const LevelReport<T>& rep, const OccupancyVolume& occ) {
        std::vector<double> gt(rep.coords.size());
        for (size_t i = 0; i < rep.coords.size(); ++i) gt[i] = occ.value_at(rep.coords[i]);
        return occupancy_loss(t, rep.values, gt);
    };
    std::vector<Var> occ_terms = {occ_term(res.coarse, tg.coarse_occ),
                                  occ_term(res.medium, tg.med_occ)};

    std::vector<Var> proj_terms;
    for (size_t vi = 0; vi < views.size(); ++vi) {
        // labelling wants the corner origin (centres at origin + (c+0.5)*vs); the
        // gt grid is centre-anchored, so shift back half a voxel
        const std::array<double, 3> corner = {gt_tsdf.origin[0] - 0.5 * res.fine.voxel_size,
                                              gt_tsdf.origin[1] - 0.5 * res.fine.voxel_size,
                                              gt_tsdf.origin[2] - 0.5 * res.fine.voxel_size};
        auto labels_all = projection_occupancy_labels(views[vi], res.fine.fused_coords,
                                                      res.fine.voxel_size, corner, proj_delta);
        std::vector<int> rows, labels;
        for (size_t e = 0; e < res.fine.edge_view.size(); ++e)
            if (res.fine.edge_view[e] == static_cast<int>(vi)) {
                rows.push_back(static_cast<int>(e));
                labels.push_back(labels_all[res.fine.edge_voxel[e]]);
            }
        bool any = false;
        for (int l : labels) any |= (l >= 0);
        if (!any) continue;  // view labels nothing at this level
        proj_terms.push_back(
            projection_weight_loss(t, t.gather_rows(res.fine.view_logits, rows), labels));
    }
    return total_loss(t, lt, occ_terms, proj_terms, w);
}

template <typename T>
int run_train(const RunOptions& opts, const Config& cfg, SceneData& scene) {
    const PipelineConfig pc = make_pipeline_config(cfg, scene.spec);
    ParamStore store;
    Pipeline<T> pipe(pc);
    pipe.register_params(store, opts.seed);
    FeatureExtractor{pc.feat_channels}.register_params(store, opts.seed ^ 0x9e3779b9u);
    fill_pyramids(scene.views, store, pc.feat_channels);

    const TrainTargets tg = make_targets(scene.gt_tsdf);
    ForwardGates gates;
    gates.coarse = &tg.coarse_occ;
    gates.medium = &tg.med_occ;

    LossWeights w;
    w.tsdf = cfg.get_double("w_tsdf", 1.0);
    w.occupancy = cfg.get_double("w_occupancy", 1.0);
    w.projection = cfg.get_double("w_projection", 1.0);
    const double proj_delta = cfg.get_double("proj_delta", 3.0 * scene.spec.voxel_size);

    Adam adam;
    adam.lr = cfg.get_double("lr", 1e-4);
    adam.clip = cfg.get_double("clip", 1.0);
    const int steps = opts.steps > 0 ? opts.steps : cfg.get_int("steps", 2000);

    fs::create_directories(opts.out_dir);
    std::ofstream log(opts.out_dir + "/loss.txt");
    if (!log) throw IoError("cannot open for writing: " + opts.out_dir + "/loss.txt");

    const auto t0 = Clock::now();
    std::vector<double> losses;
    for (int s = 0; s < steps; ++s) {
        Tape<T> t;
        ParamCtx<T> p(t, store);
        Var loss = step_loss(t, p, pipe, scene.views, gates, scene.gt_tsdf, tg, w, proj_delta);
        const double lv = static_cast<double>(t.val(loss).at(0, 0));
        t.backward(loss);
        p.harvest();
        adam.step(store);
        losses.push_back(lv);
        log << s << " " << lv << "\n";
        if ((s + 1) % 100 == 0) log.flush();
    }
    const double train_s = seconds_since(t0);

    // trend over 100-step windows: training must end below where it started
    bool trend_ok = true;
    if (losses.size() >= 200) {
        const size_t win = 100;
        double first = 0, last = 0;
        for (size_t i = 0; i < win; ++i) {
            first += losses[i];
            last += losses[losses.size() - win + i];
        }
        trend_ok = last < first;
        log << "# window_first " << first / win << " window_last " << last / win
            << " trend " << (trend_ok ? "ok" : "violated") << "\n";
    }
    log << "# train_seconds " << train_s << "\n";

    const std::string ckpt =
        opts.checkpoint.empty() ? opts.out_dir + "/model.vfck" : opts.checkpoint;
    store.save_file(ckpt);
    std::cout << "trained " << steps << " steps in " << train_s << " s, final loss "
              << losses.back() << ", checkpoint " << ckpt << "\n";
    return trend_ok ? 0 : 1;
}

template <typename T>
int run_reconstruct(const RunOptions& opts, const Config& cfg, SceneData& scene) {
    const PipelineConfig pc = make_pipeline_config(cfg, scene.spec);
    ParamStore store;
    Pipeline<T> pipe(pc);
    pipe.register_params(store, opts.seed);
    FeatureExtractor{pc.feat_channels}.register_params(store, opts.seed ^ 0x9e3779b9u);
    if (!opts.checkpoint.empty()) store.load_file(opts.checkpoint);

    const auto t0 = Clock::now();
    fill_pyramids(scene.views, store, pc.feat_channels);
    const double feat_s = seconds_since(t0);

    const auto t1 = Clock::now();
    ForwardResult<T> res;
    TsdfVolume dense = run_forward<T>(pc, store, scene.views, &res);
    const double forward_s = seconds_since(t1);

    const auto t2 = Clock::now();
    TriangleMesh mesh = weld_vertices(marching_cubes(dense), 1e-7);
    const double mesh_s = seconds_since(t2);

    fs::create_directories(opts.out_dir);
    save_ply_file(opts.out_dir + "/mesh.ply", mesh);

    MetricsReport mr;
    if (!mesh.triangles.empty() && !scene.gt_mesh.triangles.empty())
        mr = mesh_metrics(mesh, scene.gt_mesh, cfg.get_double("tau", 0.05),
                          cfg.get_int("metric_samples", 10000), opts.seed);

    // depth errors: raycast the reconstruction from each pose
    MetricsReport dr;
    int depth_views = 0;
    for (const auto& v : scene.views) {
        FeatureMap pred = raycast_depth(dense, v, scene.spec.image_size);
        try {
            const MetricsReport one = depth_metrics(pred, v.depth);
            dr.abs_rel += one.abs_rel;
            dr.abs_diff += one.abs_diff;
            dr.sq_rel += one.sq_rel;
            dr.rmse += one.rmse;
            dr.delta1 += one.delta1;
            dr.delta2 += one.delta2;
            dr.delta3 += one.delta3;
            ++depth_views;
        } catch (const DegenerateSceneError&) {
            // no overlapping valid pixels for this view
        }
    }
    if (depth_views > 0) {
        dr.abs_rel /= depth_views;
        dr.abs_diff /= depth_views;
        dr.sq_rel /= depth_views;
        dr.rmse /= depth_views;
        dr.delta1 /= depth_views;
        dr.delta2 /= depth_views;
        dr.delta3 /= depth_views;
    }

    nlohmann::json rep;
    rep["mesh"] = {{"vertices", mesh.vertices.size()},
                   {"faces", mesh.triangles.size()},
                   {"acc", mr.acc},
                   {"comp", mr.comp},
                   {"chamfer", mr.chamfer},
                   {"prec", mr.prec},
                   {"recall", mr.recall},
                   {"fscore", mr.fscore}};
    rep["depth"] = {{"views", depth_views}, {"abs_rel", dr.abs_rel}, {"abs_diff", dr.abs_diff},
                    {"sq_rel", dr.sq_rel},  {"rmse", dr.rmse},       {"delta1", dr.delta1},
                    {"delta2", dr.delta2},  {"delta3", dr.delta3}};
    rep["voxels"] = {{"coarse", res.coarse.coords.size()},
                     {"medium", res.medium.coords.size()},
                     {"fine", res.fine.coords.size()}};
    rep["timing_seconds"] = {{"features", feat_s}, {"forward", forward_s}, {"meshing", mesh_s}};
    rep["precision"] = opts.precision;
    rep["seed"] = opts.seed;
    {
        std::ofstream os(opts.out_dir + "/report.json");
        if (!os) throw IoError("cannot open for writing: " + opts.out_dir + "/report.json");
        os << rep.dump(2) << "\n";
    }
    std::cout << rep.dump(2) << "\n";
    return 0;
}

}  // namespace

int cmd_gen_scene(const RunOptions& opts) {
    if (opts.scene_dir.empty()) throw std::invalid_argument("gen-scene: --scene required");
    const Config cfg = load_config(opts);
    SceneSpec spec = three_primitive_scene(opts.seed);
    spec.n_views = cfg.get_int("n_views", spec.n_views);
    spec.image_size = cfg.get_int("image_size", spec.image_size);
    spec.voxel_size = cfg.get_double("voxel_size", spec.voxel_size);
    const double half = cfg.get_double("bound", 0.32);
    spec.bounds_min = {-half, -half, -half};
    spec.bounds_max = {half, half, half};
    save_scene(opts.scene_dir, spec);
    std::cout << "scene written to " << opts.scene_dir << "\n";
    return 0;
}

int cmd_reconstruct(const RunOptions& opts) {
    if (opts.scene_dir.empty()) throw std::invalid_argument("reconstruct: --scene required");
    const Config cfg = load_config(opts);
    SceneData scene = load_scene(opts.scene_dir);
    if (opts.precision == "f32") return run_reconstruct<float>(opts, cfg, scene);
    if (opts.precision == "f64") return run_reconstruct<double>(opts, cfg, scene);
    throw std::invalid_argument("precision must be f32 or f64");
}

int cmd_train_tiny(const RunOptions& opts) {
    if (opts.scene_dir.empty()) throw std::invalid_argument("train-tiny: --scene required");
    const Config cfg = load_config(opts);
    SceneData scene = load_scene(opts.scene_dir);
    if (opts.precision == "f32") return run_train<float>(opts, cfg, scene);
    if (opts.precision == "f64") return run_train<double>(opts, cfg, scene);
    throw std::invalid_argument("precision must be f32 or f64");
}

int cmd_bench(const RunOptions& opts) {
    if (opts.dims < 1 || opts.dims > 1024) throw std::invalid_argument("bench: bad dims");
    if (opts.occupancy < 0 || opts.occupancy > 1)
        throw std::invalid_argument("bench: occupancy must be in [0,1]");

    const Dims3 dims = {opts.dims, opts.dims, opts.dims};
    std::mt19937_64 rng(opts.seed);
    std::bernoulli_distribution coin(opts.occupancy);
    std::vector<VoxelCoord> coords;
    for (int x = 0; x < dims.x; ++x)
        for (int y = 0; y < dims.y; ++y)
            for (int z = 0; z < dims.z; ++z)
                if (coin(rng)) coords.push_back({x, y, z});

    const int channels = 8, heads = 2;
    SparseVolume vol(0, 0.04, dims, channels);
    {
        Tensor<double> f(static_cast<int>(coords.size()), channels);
        std::uniform_real_distribution<double> d(-1, 1);
        for (auto& x : f.v) x = d(rng);
        vol.assign(std::move(coords), std::move(f));
    }

    const auto t0 = Clock::now();
    const PairCount pcnt = pair_count(vol, opts.window);
    const double count_s = seconds_since(t0);

    double attn_s = -1;
    if (opts.trials > 0) {
        AttentionParams params = AttentionParams::make(channels, heads, opts.seed);
        const auto t1 = Clock::now();
        for (int i = 0; i < opts.trials; ++i) sparse_window_attention(vol, params, opts.window);
        attn_s = seconds_since(t1) / opts.trials;
    }

    nlohmann::json rep;
    rep["dims"] = opts.dims;
    rep["occupancy"] = opts.occupancy;
    rep["window"] = opts.window;
    rep["active_voxels"] = vol.count();
    rep["sparse_pairs"] = pcnt.sparse_pairs;
    rep["dense_pairs"] = pcnt.dense_pairs;
    rep["ratio"] = pcnt.dense_pairs ? double(pcnt.sparse_pairs) / double(pcnt.dense_pairs) : 0.0;
    rep["count_seconds"] = count_s;
    if (attn_s >= 0) rep["attention_seconds_per_op"] = attn_s;
    if (!opts.out_dir.empty()) {
        fs::create_directories(opts.out_dir);
        std::ofstream os(opts.out_dir + "/bench.json");
        if (!os) throw IoError("cannot open for writing: " + opts.out_dir + "/bench.json");
        os << rep.dump(2) << "\n";
    }
    std::cout << rep.dump(2) << "\n";
    return 0;
}

int cmd_verify(const RunOptions&) {
    const int failures = run_verify(std::cout);
    return failures == 0 ? 0 : 1;
}

}  // namespace svt
