#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace aacn {

// Dense row-major tensor. Values are kept in double; the on-disk format is
// f32 little-endian (see tensor_io).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(count(shape)), fill);
    }

    static Tensor from(std::vector<int> s, std::vector<double> values) {
        Tensor t;
        t.shape = std::move(s);
        if (count(t.shape) != static_cast<long long>(values.size()))
            throw std::invalid_argument("Tensor::from: data length " + std::to_string(values.size()) +
                                        " does not match shape");
        t.data = std::move(values);
        return t;
    }

    static long long count(const std::vector<int>& s) {
        long long n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    int size() const { return static_cast<int>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    int dim(int i) const {
        if (i < 0 || i >= rank()) throw std::out_of_range("Tensor::dim");
        return shape[static_cast<size_t>(i)];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Flat index for a 3-D (c, y, x) tensor.
    double& at3(int c, int y, int x) {
        return data[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }
    double at3(int c, int y, int x) const {
        return data[static_cast<size_t>((c * shape[1] + y) * shape[2] + x)];
    }

    void fill(double v) { data.assign(data.size(), v); }
};

} // namespace aacn
