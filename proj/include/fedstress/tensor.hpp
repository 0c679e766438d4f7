#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "fedstress/errors.hpp"

namespace fedstress {

inline size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape");
        n *= static_cast<size_t>(d);
    }
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major tensor. `grad` is empty unless requires_grad is set, in
// which case it always matches `data` in size.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}

    Tensor(std::vector<int> s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != shape_numel(shape))
            throw ShapeError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    size_t numel() const { return data.size(); }

    int dim(size_t i) const { return shape[i]; }

    void enable_grad() {
        requires_grad = true;
        grad.assign(data.size(), T(0));
    }

    void zero_grad() {
        if (requires_grad) grad.assign(data.size(), T(0));
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    // Convenience indexers for tests and small paths; hot loops index manually.
    T& at(int i) { return data[static_cast<size_t>(i)]; }
    const T& at(int i) const { return data[static_cast<size_t>(i)]; }
    T& at(int n, int c, int h, int w) {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    const T& at(int n, int c, int h, int w) const {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
}

template <typename To, typename From>
Tensor<To> cast_tensor(const Tensor<From>& t) {
    Tensor<To> out(t.shape);
    for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<To>(t.data[i]);
    return out;
}

}  // namespace fedstress
