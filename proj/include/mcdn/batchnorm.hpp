#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "mcdn/parallel.hpp"
#include "mcdn/tensor.hpp"

// Per-channel batch normalization over the (N, H, W) axes of an [N, H, W, C]
// tensor. Train mode normalizes by batch statistics (population variance) and
// updates running statistics with an exponential moving average; infer mode
// normalizes by the running statistics. Channel sums are accumulated in
// double per sample and merged in sample order, so results are independent of
// the thread count.

namespace mcdn {

enum class Mode { train, infer };

struct BatchNormParams {
    Tensor gamma;        // [C]
    Tensor beta;         // [C]
    Tensor running_mean; // [C]
    Tensor running_var;  // [C]
    float eps = 1e-5f;
    float momentum = 0.1f;

    int channels() const { return gamma.dim(0); }
};

inline BatchNormParams make_batchnorm(int channels, float eps = 1e-5f, float momentum = 0.1f) {
    if (eps <= 0.0f)
        throw ValueError("batchnorm eps must be positive");
    if (momentum <= 0.0f || momentum >= 1.0f)
        throw ValueError("batchnorm momentum must lie in (0,1)");
    BatchNormParams p;
    p.gamma = Tensor::full({channels}, 1.0f);
    p.beta = Tensor({channels});
    p.running_mean = Tensor({channels});
    p.running_var = Tensor::full({channels}, 1.0f);
    p.eps = eps;
    p.momentum = momentum;
    return p;
}

struct BnCache {
    bool valid = false; // only train-mode forward produces a usable cache
    Tensor input;
    std::vector<double> mean;    // per channel
    std::vector<double> inv_std; // 1/sqrt(var + eps), per channel
};

namespace detail {

inline void check_bn_args(const Tensor& input, const BatchNormParams& params) {
    require_rank(input, 4, "batchnorm input");
    if (input.dim(3) != params.channels())
        throw ShapeError("batchnorm channel mismatch: input has " +
                         std::to_string(input.dim(3)) + " channels, params expect " +
                         std::to_string(params.channels()));
}

// per-channel sums of (x, x^2) with per-sample partials merged in order
inline void bn_channel_moments(const Tensor& input, std::vector<double>& mean,
                               std::vector<double>& var) {
    const int N = input.dim(0), H = input.dim(1), W = input.dim(2), C = input.dim(3);
    const std::size_t plane = static_cast<std::size_t>(H) * W * C;
    std::vector<double> parts(static_cast<std::size_t>(N) * C * 2, 0.0);
    const float* in = input.data();
    parallel_for(N, [&](std::int64_t n) {
        double* s1 = parts.data() + static_cast<std::size_t>(n) * C * 2;
        double* s2 = s1 + C;
        const float* p = in + static_cast<std::size_t>(n) * plane;
        for (std::size_t i = 0; i < plane; i += C)
            for (int c = 0; c < C; ++c) {
                const double v = p[i + c];
                s1[c] += v;
                s2[c] += v * v;
            }
    });
    mean.assign(C, 0.0);
    var.assign(C, 0.0);
    for (int n = 0; n < N; ++n) {
        const double* s1 = parts.data() + static_cast<std::size_t>(n) * C * 2;
        const double* s2 = s1 + C;
        for (int c = 0; c < C; ++c) {
            mean[c] += s1[c];
            var[c] += s2[c];
        }
    }
    const double m = static_cast<double>(N) * H * W;
    for (int c = 0; c < C; ++c) {
        mean[c] /= m;
        var[c] = var[c] / m - mean[c] * mean[c];
        if (var[c] < 0.0)
            var[c] = 0.0; // clamp rounding residue
    }
}

} // namespace detail

inline Tensor batchnorm_forward(const Tensor& input, BatchNormParams& params, Mode mode,
                                BnCache* cache = nullptr) {
    detail::check_bn_args(input, params);
    const int N = input.dim(0), H = input.dim(1), W = input.dim(2), C = input.dim(3);
    if (cache)
        cache->valid = false;

    std::vector<double> mean(C), inv_std(C);
    if (mode == Mode::train) {
        if (static_cast<std::int64_t>(N) * H * W < 2)
            throw ValueError("batchnorm train mode needs at least 2 elements per channel, got " +
                             std::to_string(static_cast<std::int64_t>(N) * H * W));
        std::vector<double> var;
        detail::bn_channel_moments(input, mean, var);
        for (int c = 0; c < C; ++c)
            inv_std[c] = 1.0 / std::sqrt(var[c] + static_cast<double>(params.eps));
        const float mom = params.momentum;
        for (int c = 0; c < C; ++c) {
            params.running_mean[c] =
                (1.0f - mom) * params.running_mean[c] + mom * static_cast<float>(mean[c]);
            params.running_var[c] =
                (1.0f - mom) * params.running_var[c] + mom * static_cast<float>(var[c]);
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = params.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(static_cast<double>(params.running_var[c]) +
                                         static_cast<double>(params.eps));
        }
    }

    Tensor out({N, H, W, C});
    const std::size_t plane = static_cast<std::size_t>(H) * W * C;
    const float* in = input.data();
    float* dst = out.data();
    std::vector<float> scale(C), shift(C);
    for (int c = 0; c < C; ++c) {
        scale[c] = static_cast<float>(params.gamma[c] * inv_std[c]);
        shift[c] = static_cast<float>(params.beta[c] - mean[c] * scale[c]);
    }
    parallel_for(N, [&](std::int64_t n) {
        const float* p = in + static_cast<std::size_t>(n) * plane;
        float* q = dst + static_cast<std::size_t>(n) * plane;
        for (std::size_t i = 0; i < plane; i += C)
            for (int c = 0; c < C; ++c)
                q[i + c] = p[i + c] * scale[c] + shift[c];
    });

    if (cache && mode == Mode::train) {
        cache->valid = true;
        cache->input = input;
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

// move-in overload: avoids holding two copies of the layer input in caches
inline Tensor batchnorm_forward(Tensor&& input, BatchNormParams& params, Mode mode,
                                BnCache* cache = nullptr) {
    Tensor out = batchnorm_forward(static_cast<const Tensor&>(input), params, mode, cache);
    if (cache && cache->valid)
        cache->input = std::move(input);
    return out;
}

struct BnGrads {
    Tensor input; // same shape as forward input
    Tensor gamma; // [C]
    Tensor beta;  // [C]
};

inline BnGrads batchnorm_backward(const BatchNormParams& params, const BnCache& cache,
                                  const Tensor& grad_out) {
    if (!cache.valid)
        throw ValueError("batchnorm_backward requires a cache from a train-mode forward pass");
    if (!grad_out.same_shape(cache.input))
        throw ShapeError("batchnorm grad_out shape " + grad_out.shape_string() +
                         " does not match cached input shape " + cache.input.shape_string());

    const Tensor& x = cache.input;
    const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(H) * W * C;
    const double m = static_cast<double>(N) * H * W;
    const float* xp = x.data();
    const float* gp = grad_out.data();

    // per-channel sum(dy) and sum(dy * xhat), per-sample partials in order
    std::vector<double> parts(static_cast<std::size_t>(N) * C * 2, 0.0);
    parallel_for(N, [&](std::int64_t n) {
        double* s1 = parts.data() + static_cast<std::size_t>(n) * C * 2;
        double* s2 = s1 + C;
        const float* xn = xp + static_cast<std::size_t>(n) * plane;
        const float* gn = gp + static_cast<std::size_t>(n) * plane;
        for (std::size_t i = 0; i < plane; i += C)
            for (int c = 0; c < C; ++c) {
                const double dy = gn[i + c];
                const double xhat = (xn[i + c] - cache.mean[c]) * cache.inv_std[c];
                s1[c] += dy;
                s2[c] += dy * xhat;
            }
    });
    std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
    for (int n = 0; n < N; ++n) {
        const double* s1 = parts.data() + static_cast<std::size_t>(n) * C * 2;
        const double* s2 = s1 + C;
        for (int c = 0; c < C; ++c) {
            sum_dy[c] += s1[c];
            sum_dy_xhat[c] += s2[c];
        }
    }

    BnGrads g;
    g.input = Tensor({N, H, W, C});
    g.gamma = Tensor({C});
    g.beta = Tensor({C});
    for (int c = 0; c < C; ++c) {
        g.gamma[static_cast<std::size_t>(c)] = static_cast<float>(sum_dy_xhat[c]);
        g.beta[static_cast<std::size_t>(c)] = static_cast<float>(sum_dy[c]);
    }

    // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))
    std::vector<double> k1(C), k2(C);
    for (int c = 0; c < C; ++c) {
        k1[c] = sum_dy[c] / m;
        k2[c] = sum_dy_xhat[c] / m;
    }
    float* gi = g.input.data();
    parallel_for(N, [&](std::int64_t n) {
        const float* xn = xp + static_cast<std::size_t>(n) * plane;
        const float* gn = gp + static_cast<std::size_t>(n) * plane;
        float* dn = gi + static_cast<std::size_t>(n) * plane;
        for (std::size_t i = 0; i < plane; i += C)
            for (int c = 0; c < C; ++c) {
                const double xhat = (xn[i + c] - cache.mean[c]) * cache.inv_std[c];
                const double v = (gn[i + c] - k1[c] - xhat * k2[c]) * cache.inv_std[c] *
                                 static_cast<double>(params.gamma[c]);
                dn[i + c] = static_cast<float>(v);
            }
    });
    return g;
}

} // namespace mcdn
