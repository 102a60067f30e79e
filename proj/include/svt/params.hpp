#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "svt/errors.hpp"
#include "svt/tape.hpp"
#include "svt/tensor.hpp"

namespace svt {

// Named trainable tensors. Master copies are f64; tape instantiations cast to
// the working precision and gradients are harvested back as f64. Iteration is
// name-ordered everywhere so optimizer updates are deterministic.
class ParamStore {
public:
    struct Entry {
        std::vector<uint32_t> dims;  // logical dims, e.g. {27, Cin, Cout}
        Tensor<double> value;        // flattened to [rows, cols]
        Tensor<double> grad;
    };

    Tensor<double>& add(const std::string& name, std::vector<uint32_t> dims, int rows, int cols) {
        auto [it, fresh] = entries_.emplace(name, Entry{std::move(dims), Tensor<double>(rows, cols), {}});
        if (!fresh) throw StructuralError("ParamStore: duplicate parameter " + name);
        return it->second.value;
    }

    // Xavier-uniform weight [fan_in, fan_out].
    Tensor<double>& add_linear(const std::string& name, int in, int out, std::mt19937_64& rng) {
        auto& t = add(name, {static_cast<uint32_t>(in), static_cast<uint32_t>(out)}, in, out);
        xavier_fill(t, in, out, rng);
        return t;
    }

    Tensor<double>& add_bias(const std::string& name, int c) {
        return add(name, {static_cast<uint32_t>(c)}, 1, c);
    }

    Tensor<double>& add_ones(const std::string& name, int c) {
        auto& t = add(name, {static_cast<uint32_t>(c)}, 1, c);
        for (auto& x : t.v) x = 1.0;
        return t;
    }

    // Kernel-3 conv weights flattened to [27 * in, out].
    Tensor<double>& add_conv3(const std::string& name, int in, int out, std::mt19937_64& rng) {
        auto& t = add(name, {27u, static_cast<uint32_t>(in), static_cast<uint32_t>(out)}, 27 * in, out);
        xavier_fill(t, 27 * in, out, rng);
        return t;
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    Entry& entry(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw StructuralError("ParamStore: unknown parameter " + name);
        return it->second;
    }
    const Entry& entry(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw StructuralError("ParamStore: unknown parameter " + name);
        return it->second;
    }
    Tensor<double>& value(const std::string& name) { return entry(name).value; }

    const std::map<std::string, Entry>& entries() const { return entries_; }
    std::map<std::string, Entry>& entries_mut() { return entries_; }

    size_t total_scalars() const {
        size_t n = 0;
        for (const auto& [k, e] : entries_) n += e.value.size();
        return n;
    }

    // ---- "VFCK" checkpoint container ----
    void save(std::ostream& os) const {
        os.write("VFCK", 4);
        const uint32_t version = 1, count = static_cast<uint32_t>(entries_.size());
        os.write(reinterpret_cast<const char*>(&version), 4);
        os.write(reinterpret_cast<const char*>(&count), 4);
        for (const auto& [name, e] : entries_) {
            const uint16_t len = static_cast<uint16_t>(name.size());
            os.write(reinterpret_cast<const char*>(&len), 2);
            os.write(name.data(), len);
            const uint8_t rank = static_cast<uint8_t>(e.dims.size());
            os.write(reinterpret_cast<const char*>(&rank), 1);
            for (uint32_t d : e.dims) os.write(reinterpret_cast<const char*>(&d), 4);
            for (double x : e.value.v) {
                const float f = static_cast<float>(x);
                os.write(reinterpret_cast<const char*>(&f), 4);
            }
        }
    }

    // Loads values into already-registered parameters; shapes must match.
    void load(std::istream& is) {
        char magic[4];
        is.read(magic, 4);
        if (!is || std::memcmp(magic, "VFCK", 4) != 0) throw IoError("not a VFCK stream");
        uint32_t version = 0, count = 0;
        is.read(reinterpret_cast<char*>(&version), 4);
        is.read(reinterpret_cast<char*>(&count), 4);
        if (version != 1) throw IoError("unsupported VFCK version");
        for (uint32_t t = 0; t < count; ++t) {
            uint16_t len = 0;
            is.read(reinterpret_cast<char*>(&len), 2);
            std::string name(len, '\0');
            is.read(name.data(), len);
            uint8_t rank = 0;
            is.read(reinterpret_cast<char*>(&rank), 1);
            std::vector<uint32_t> dims(rank);
            uint64_t n = 1;
            for (auto& d : dims) {
                is.read(reinterpret_cast<char*>(&d), 4);
                n *= d;
            }
            if (!is) throw IoError("truncated VFCK stream");
            auto it = entries_.find(name);
            if (it == entries_.end()) throw IoError("VFCK: unknown parameter " + name);
            Entry& e = it->second;
            if (e.dims != dims || e.value.size() != n) throw IoError("VFCK: shape mismatch for " + name);
            for (uint64_t i = 0; i < n; ++i) {
                float f = 0;
                is.read(reinterpret_cast<char*>(&f), 4);
                e.value.v[i] = f;
            }
            if (!is) throw IoError("truncated VFCK stream");
        }
    }

    void save_file(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot open for writing: " + path);
        save(os);
    }
    void load_file(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IoError("cannot open: " + path);
        load(is);
    }

private:
    std::map<std::string, Entry> entries_;
};

// Binds store parameters to tape leaves for one forward/backward pass.
template <typename T>
class ParamCtx {
public:
    ParamCtx(Tape<T>& tape, ParamStore& store) : tape_(&tape), store_(&store) {}

    Var operator[](const std::string& name) {
        auto it = vars_.find(name);
        if (it != vars_.end()) return it->second;
        const auto& e = store_->entry(name);
        Var v = tape_->leaf(e.value.template cast<T>(), true);
        vars_.emplace(name, v);
        return v;
    }

    // Copy tape gradients back to the store (overwrites previous grads).
    void harvest() {
        for (auto& [name, e] : store_->entries_mut()) e.grad = Tensor<double>(e.value.rows, e.value.cols);
        for (const auto& [name, v] : vars_) {
            const Tensor<T>& g = tape_->grad(v);
            auto& e = store_->entry(name);
            if (g.size() == e.value.size())
                for (size_t i = 0; i < g.v.size(); ++i) e.grad.v[i] = static_cast<double>(g.v[i]);
        }
    }

private:
    Tape<T>* tape_;
    ParamStore* store_;
    std::map<std::string, Var> vars_;
};

}  // namespace svt
