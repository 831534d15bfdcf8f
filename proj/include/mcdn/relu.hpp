#pragma once

#include "mcdn/tensor.hpp"

namespace mcdn {

// Elementwise max(0, x). The gradient at exactly 0 is defined as 0.

inline Tensor relu_forward(const Tensor& input) {
    Tensor out(input.shape());
    const float* p = input.data();
    float* q = out.data();
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i)
        q[i] = p[i] > 0.0f ? p[i] : 0.0f;
    return out;
}

inline Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    if (!input.same_shape(grad_out))
        throw ShapeError("relu grad_out shape " + grad_out.shape_string() +
                         " does not match input shape " + input.shape_string());
    Tensor g(input.shape());
    const float* p = input.data();
    const float* go = grad_out.data();
    float* q = g.data();
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i)
        q[i] = p[i] > 0.0f ? go[i] : 0.0f;
    return g;
}

} // namespace mcdn
