// Dense row-major tensor value type. Computation lives in graph.hpp.
#pragma once

#include <cmath>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "common.hpp"

namespace swinlet {

using Dims = std::vector<i64>;

inline i64 numel_of(const Dims& dims) {
    i64 n = 1;
    for (i64 d : dims) n *= d;
    return n;
}

inline std::string dims_str(const Dims& dims) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
    os << ']';
    return os.str();
}

template <typename T>
struct Tensor {
    static_assert(std::is_floating_point_v<T>);

    Dims dims;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Dims d) : dims(std::move(d)) {
        for (i64 e : dims) check(e > 0, "Tensor: extents must be positive, got " + dims_str(dims));
        data.assign(size_t(numel_of(dims)), T(0));
    }
    Tensor(Dims d, std::vector<T> values) : dims(std::move(d)), data(std::move(values)) {
        check(i64(data.size()) == numel_of(dims),
              "Tensor: " + std::to_string(data.size()) + " values for shape " + dims_str(dims));
    }

    static Tensor full(Dims d, T v) {
        Tensor t(std::move(d));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    i64 numel() const { return i64(data.size()); }
    int rank() const { return int(dims.size()); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](i64 i) { return data[size_t(i)]; }
    const T& operator[](i64 i) const { return data[size_t(i)]; }

    // Row-major strides.
    Dims strides() const {
        Dims s(dims.size());
        i64 acc = 1;
        for (int i = rank() - 1; i >= 0; --i) {
            s[size_t(i)] = acc;
            acc *= dims[size_t(i)];
        }
        return s;
    }

    T& at(std::initializer_list<i64> idx) {
        return data[size_t(offset_of(idx))];
    }
    const T& at(std::initializer_list<i64> idx) const {
        return data[size_t(offset_of(idx))];
    }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor<T> reshaped(Dims d) const {
        check(numel_of(d) == numel(), "reshape: element count mismatch " + dims_str(dims) + " -> " + dims_str(d));
        return Tensor<T>(std::move(d), data);
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.dims = dims;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
        return out;
    }

private:
    i64 offset_of(std::initializer_list<i64> idx) const {
        check(i64(idx.size()) == rank(), "Tensor::at: index rank mismatch");
        const Dims st = strides();
        i64 off = 0;
        int k = 0;
        for (i64 i : idx) off += i * st[size_t(k++)];
        return off;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace swinlet
