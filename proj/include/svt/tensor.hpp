#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace svt {

// Row-major matrix. Scalars are [1,1], row vectors [1,C].
template <typename T>
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int r, int c, T fill = T(0)) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    static Tensor scalar(T x) {
        Tensor t(1, 1);
        t.v[0] = x;
        return t;
    }

    size_t size() const { return v.size(); }
    T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    T* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const T* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(rows, cols);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

// Xavier-uniform fill: bound = sqrt(6 / (fan_in + fan_out)).
template <typename T>
void xavier_fill(Tensor<T>& t, int fan_in, int fan_out, std::mt19937_64& rng) {
    double bound = std::sqrt(6.0 / (static_cast<double>(fan_in) + static_cast<double>(fan_out)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& x : t.v) x = static_cast<T>(dist(rng));
}

}  // namespace svt
