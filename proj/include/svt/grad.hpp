#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "svt/params.hpp"

namespace svt {

struct GradCheckReport {
    struct Item {
        std::string name;
        double max_rel_err = 0.0;
        int checked = 0;
    };
    double tolerance = 1e-4;
    bool pass = true;
    std::vector<Item> items;
};

inline double rel_err(double a, double f) {
    return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-8});
}

// Central finite differences against the analytic gradients already stored in
// the ParamStore (run backward before calling). For large tensors a seeded
// subset of at least `min_samples` entries is probed.
inline GradCheckReport finite_diff_check(ParamStore& store,
                                         const std::function<double(ParamStore&)>& loss_fn,
                                         double step, double tolerance, uint64_t seed = 7,
                                         int min_samples = 64) {
    GradCheckReport report;
    report.tolerance = tolerance;
    std::mt19937_64 rng(seed);
    for (auto& [name, e] : store.entries_mut()) {
        GradCheckReport::Item item;
        item.name = name;
        const size_t n = e.value.size();
        std::vector<size_t> probe;
        if (static_cast<int>(n) <= min_samples) {
            probe.resize(n);
            for (size_t i = 0; i < n; ++i) probe[i] = i;
        } else {
            std::uniform_int_distribution<size_t> dist(0, n - 1);
            for (int i = 0; i < min_samples; ++i) probe.push_back(dist(rng));
        }
        for (size_t idx : probe) {
            const double x0 = e.value.v[idx];
            const double h = step * std::max(1.0, std::abs(x0));
            e.value.v[idx] = x0 + h;
            const double lp = loss_fn(store);
            e.value.v[idx] = x0 - h;
            const double lm = loss_fn(store);
            e.value.v[idx] = x0;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = e.grad.v[idx];
            item.max_rel_err = std::max(item.max_rel_err, rel_err(an, fd));
            ++item.checked;
        }
        if (item.max_rel_err > tolerance) report.pass = false;
        report.items.push_back(std::move(item));
    }
    return report;
}

struct SgdConfig {
    double lr = 1e-2;
};

inline void sgd_step(ParamStore& store, const SgdConfig& cfg) {
    for (auto& [name, e] : store.entries_mut())
        for (size_t i = 0; i < e.value.v.size(); ++i) e.value.v[i] -= cfg.lr * e.grad.v[i];
}

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam; per-parameter moment state lives in the optimizer.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore& store) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (auto& [name, e] : store.entries_mut()) {
            auto& m = m_[name];
            auto& v = v_[name];
            if (m.size() != e.value.size()) {
                m.assign(e.value.size(), 0.0);
                v.assign(e.value.size(), 0.0);
            }
            for (size_t i = 0; i < e.value.v.size(); ++i) {
                const double g = e.grad.v[i];
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                e.value.v[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
            }
        }
    }

    int steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    int t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace svt
