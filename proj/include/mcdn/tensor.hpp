#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "mcdn/errors.hpp"
#include "mcdn/rng.hpp"

namespace mcdn {

// Dense N-d array of 32-bit reals, row-major. Batched image tensors use the
// [N, H, W, C] layout so the innermost stride runs over channels.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (int extent : shape_) {
            if (extent <= 0)
                throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
            n *= static_cast<std::size_t>(extent);
        }
        data_.assign(n, 0.0f);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, float value) {
        Tensor t(std::move(shape));
        for (float& v : t.data_)
            v = value;
        return t;
    }

    static Tensor gaussian(std::vector<int> shape, float stddev, Rng& rng) {
        Tensor t(std::move(shape));
        for (float& v : t.data_)
            v = static_cast<float>(rng.next_gaussian() * stddev);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& at(int a) { return data_[static_cast<std::size_t>(a)]; }
    float at(int a) const { return data_[static_cast<std::size_t>(a)]; }
    float& at(int a, int b) { return data_[index2(a, b)]; }
    float at(int a, int b) const { return data_[index2(a, b)]; }
    float& at(int a, int b, int c) { return data_[index3(a, b, c)]; }
    float at(int a, int b, int c) const { return data_[index3(a, b, c)]; }
    float& at(int a, int b, int c, int d) { return data_[index4(a, b, c, d)]; }
    float at(int a, int b, int c, int d) const { return data_[index4(a, b, c, d)]; }

    std::size_t index2(int a, int b) const {
        return static_cast<std::size_t>(a) * shape_[1] + b;
    }
    std::size_t index3(int a, int b, int c) const {
        return (static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c;
    }
    std::size_t index4(int a, int b, int c, int d) const {
        return ((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v))
                return false;
        return true;
    }

    void fill(float value) {
        for (float& v : data_)
            v = value;
    }

    std::string shape_string() const { return shape_string(shape_); }

    static std::string shape_string(const std::vector<int>& shape) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i)
            os << (i ? "," : "") << shape[i];
        os << ']';
        return os.str();
    }

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

inline void require_shape(const Tensor& t, const std::vector<int>& shape, const char* what) {
    if (t.shape() != shape)
        throw ShapeError(std::string(what) + ": expected shape " + Tensor::shape_string(shape) +
                         ", got " + t.shape_string());
}

inline void require_rank(const Tensor& t, int rank, const char* what) {
    if (t.rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         " tensor, got shape " + t.shape_string());
}

} // namespace mcdn
