#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowcast {

// Dense row-major array of doubles. Autodiff ops work on rank-2 arrays
// (rows x cols); rank-1 data travels as a 1 x n or n x 1 matrix.
struct Array {
    std::vector<int> shape;
    std::vector<double> data;

    Array() = default;
    Array(int rows, int cols) : shape{rows, cols}, data(static_cast<size_t>(rows) * cols, 0.0) {
        if (rows < 0 || cols < 0) throw std::runtime_error("array: negative dimension");
    }

    static Array zeros(int rows, int cols) { return Array(rows, cols); }
    static Array full(int rows, int cols, double v) {
        Array a(rows, cols);
        std::fill(a.data.begin(), a.data.end(), v);
        return a;
    }
    static Array scalar(double v) { return full(1, 1, v); }
    static Array row(std::span<const double> vals) {
        Array a(1, static_cast<int>(vals.size()));
        std::copy(vals.begin(), vals.end(), a.data.begin());
        return a;
    }
    static Array column(std::span<const double> vals) {
        Array a(static_cast<int>(vals.size()), 1);
        std::copy(vals.begin(), vals.end(), a.data.begin());
        return a;
    }

    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }
    size_t size() const { return data.size(); }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    bool same_shape(const Array& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Deterministic random source. All stochastic behaviour in the library is
// threaded through one of these, so a run is reproducible from its seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (implementation-independent, unlike
    // std::normal_distribution).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::runtime_error("rng: uniform_int(0)");
        std::uint64_t v = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
        return v >= n ? n - 1 : v;
    }

    std::uint64_t next_seed() { return eng_(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), in selection order.
    std::vector<int> sample_without_replacement(int n, int k) {
        if (k > n) throw std::runtime_error("rng: sample k > n");
        std::vector<int> pool(static_cast<size_t>(n));
        std::iota(pool.begin(), pool.end(), 0);
        std::vector<int> out;
        out.reserve(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) {
            size_t j = static_cast<size_t>(i) + static_cast<size_t>(uniform_int(n - i));
            std::swap(pool[static_cast<size_t>(i)], pool[j]);
            out.push_back(pool[static_cast<size_t>(i)]);
        }
        return out;
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace flowcast
