#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace asem {

// Dense row-major tensor. Shapes are small (rank <= 4 in practice), data is
// contiguous. All math lives in graph.hpp; this is just storage.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(checked_numel(shape)) {}
    Tensor(std::vector<int> s, T fill) : shape(std::move(s)), data(checked_numel(shape), fill) {}

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, T v) { return Tensor(std::move(s), v); }
    static Tensor scalar(T v) { return Tensor({1}, v); }

    static Tensor from(std::vector<int> s, std::vector<T> d) {
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(d);
        if ((size_t)checked_numel(t.shape) != t.data.size())
            throw std::invalid_argument("tensor: data size does not match shape");
        return t;
    }

    int numel() const { return (int)data.size(); }
    int rank() const { return (int)shape.size(); }
    int dim(int i) const { return shape[(size_t)i]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& at(std::initializer_list<int> idx) { return data[(size_t)offset(idx)]; }
    const T& at(std::initializer_list<int> idx) const { return data[(size_t)offset(idx)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite((double)v)) return false;
        return true;
    }

    static int checked_numel(const std::vector<int>& s) {
        long long n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
            n *= d;
            if (n > (1ll << 31)) throw std::invalid_argument("tensor: too large");
        }
        return (int)n;
    }

  private:
    int offset(std::initializer_list<int> idx) const {
        assert((int)idx.size() == rank());
        int off = 0, i = 0;
        for (int v : idx) {
            assert(v >= 0 && v < shape[(size_t)i]);
            off = off * shape[(size_t)i] + v;
            ++i;
        }
        return off;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

}  // namespace asem
