#pragma once

#include <cstring>
#include <vector>

#include "mcdn/parallel.hpp"
#include "mcdn/tensor.hpp"

// Multi-channel 2D convolution with 3x3 spatial kernels, zero padding of 1 so
// output spatial size equals input spatial size. Orientation is
// cross-correlation (no kernel flip). Tensors are [N, H, W, C]; kernels are
// [K, 3, 3, Cin].
//
// The row kernels are templated on the channel count of their innermost loop
// (dispatched for the widths the network actually uses) so the accumulator
// stays in vector registers; a plain dynamic fallback covers other widths.

namespace mcdn {

struct ConvParams {
    Tensor kernels; // [K, 3, 3, Cin]
    Tensor bias;    // [K]

    int out_channels() const { return kernels.dim(0); }
    int in_channels() const { return kernels.dim(3); }
};

inline ConvParams make_conv(int in_channels, int out_channels) {
    ConvParams p;
    p.kernels = Tensor({out_channels, 3, 3, in_channels});
    p.bias = Tensor({out_channels});
    return p;
}

struct ConvGrads {
    Tensor input;   // same shape as forward input
    Tensor kernels; // [K, 3, 3, Cin]
    Tensor bias;    // [K]
};

namespace detail {

// explicit 8-lane float vectors; gcc's auto-vectorizer picks shuffle-heavy
// layouts for these kernels, so the FMA axis is spelled out by hand
#if defined(__GNUC__) || defined(__clang__)
#define MCDN_HAVE_VEC 1
typedef float vf8 __attribute__((vector_size(32), aligned(4), may_alias));

inline vf8 vload8(const float* p) { return *reinterpret_cast<const vf8*>(p); }
inline void vstore8(float* p, vf8 v) { *reinterpret_cast<vf8*>(p) = v; }
inline vf8 vzero8() { return vf8{0, 0, 0, 0, 0, 0, 0, 0}; }

// fixed-order horizontal sum so results do not depend on call context
inline float vsum8(vf8 v) {
    const float s01 = v[0] + v[1];
    const float s23 = v[2] + v[3];
    const float s45 = v[4] + v[5];
    const float s67 = v[6] + v[7];
    return (s01 + s23) + (s45 + s67);
}
#endif

inline void check_conv_args(const Tensor& input, const ConvParams& params) {
    require_rank(input, 4, "conv2d input");
    require_rank(params.kernels, 4, "conv2d kernels");
    if (params.kernels.dim(1) != 3 || params.kernels.dim(2) != 3)
        throw ShapeError("conv2d kernels must have 3x3 spatial extent, got " +
                         params.kernels.shape_string());
    if (params.kernels.dim(3) != input.dim(3))
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(input.dim(3)) +
                         " channels, kernels expect " + std::to_string(params.kernels.dim(3)));
    require_shape(params.bias, {params.kernels.dim(0)}, "conv2d bias");
}

// kernels [K,3,3,Cin] -> [3,3,Cin,K]; inner axis K for forward accumulation
inline std::vector<float> kernels_tap_cin_k(const Tensor& kernels) {
    const int K = kernels.dim(0), C = kernels.dim(3);
    std::vector<float> w(static_cast<std::size_t>(9) * C * K);
    for (int k = 0; k < K; ++k)
        for (int tap = 0; tap < 9; ++tap)
            for (int c = 0; c < C; ++c)
                w[(static_cast<std::size_t>(tap) * C + c) * K + k] =
                    kernels[(static_cast<std::size_t>(k) * 9 + tap) * C + c];
    return w;
}

// kernels [K,3,3,Cin] -> [3,3,K,Cin]; inner axis Cin for input gradients
inline std::vector<float> kernels_tap_k_cin(const Tensor& kernels) {
    const int K = kernels.dim(0), C = kernels.dim(3);
    std::vector<float> w(static_cast<std::size_t>(9) * C * K);
    for (int k = 0; k < K; ++k)
        for (int tap = 0; tap < 9; ++tap)
            for (int c = 0; c < C; ++c)
                w[(static_cast<std::size_t>(tap) * K + k) * C + c] =
                    kernels[(static_cast<std::size_t>(k) * 9 + tap) * C + c];
    return w;
}

template <int KT>
void conv_fwd_row(const float* in, const float* wt, const float* bias, float* dst, int H, int W,
                  int C, int n, int y) {
#if MCDN_HAVE_VEC
    if constexpr (KT % 8 == 0) {
        constexpr int NV = KT / 8;
        vf8 acc[NV];
        for (int x = 0; x < W; ++x) {
            for (int i = 0; i < NV; ++i)
                acc[i] = vload8(bias + 8 * i);
            for (int dy = -1; dy <= 1; ++dy) {
                const int iy = y + dy;
                if (static_cast<unsigned>(iy) >= static_cast<unsigned>(H))
                    continue;
                const float* inrow = in + (static_cast<std::size_t>(n) * H + iy) * W * C;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ix = x + dx;
                    if (static_cast<unsigned>(ix) >= static_cast<unsigned>(W))
                        continue;
                    const float* ip = inrow + static_cast<std::size_t>(ix) * C;
                    const float* wr =
                        wt + static_cast<std::size_t>((dy + 1) * 3 + (dx + 1)) * C * KT;
                    for (int c = 0; c < C; ++c) {
                        const float v = ip[c];
                        for (int i = 0; i < NV; ++i)
                            acc[i] += vload8(wr + 8 * i) * v;
                        wr += KT;
                    }
                }
            }
            float* o =
                dst + ((static_cast<std::size_t>(n) * H + y) * W + x) * static_cast<std::size_t>(KT);
            for (int i = 0; i < NV; ++i)
                vstore8(o + 8 * i, acc[i]);
        }
        return;
    }
#endif
    float acc[KT];
    for (int x = 0; x < W; ++x) {
        for (int k = 0; k < KT; ++k)
            acc[k] = bias[k];
        for (int dy = -1; dy <= 1; ++dy) {
            const int iy = y + dy;
            if (static_cast<unsigned>(iy) >= static_cast<unsigned>(H))
                continue;
            const float* inrow = in + (static_cast<std::size_t>(n) * H + iy) * W * C;
            for (int dx = -1; dx <= 1; ++dx) {
                const int ix = x + dx;
                if (static_cast<unsigned>(ix) >= static_cast<unsigned>(W))
                    continue;
                const float* ip = inrow + static_cast<std::size_t>(ix) * C;
                const float* wtap =
                    wt + static_cast<std::size_t>((dy + 1) * 3 + (dx + 1)) * C * KT;
                for (int c = 0; c < C; ++c) {
                    const float v = ip[c];
                    const float* wr = wtap + static_cast<std::size_t>(c) * KT;
                    for (int k = 0; k < KT; ++k)
                        acc[k] += v * wr[k];
                }
            }
        }
        float* o = dst + ((static_cast<std::size_t>(n) * H + y) * W + x) * static_cast<std::size_t>(KT);
        for (int k = 0; k < KT; ++k)
            o[k] = acc[k];
    }
}

inline void conv_fwd_row_dyn(const float* in, const float* wt, const float* bias, float* dst,
                             int H, int W, int C, int K, int n, int y) {
    std::vector<float> acc(static_cast<std::size_t>(K));
    for (int x = 0; x < W; ++x) {
        std::memcpy(acc.data(), bias, sizeof(float) * static_cast<std::size_t>(K));
        for (int dy = -1; dy <= 1; ++dy) {
            const int iy = y + dy;
            if (static_cast<unsigned>(iy) >= static_cast<unsigned>(H))
                continue;
            const float* inrow = in + (static_cast<std::size_t>(n) * H + iy) * W * C;
            for (int dx = -1; dx <= 1; ++dx) {
                const int ix = x + dx;
                if (static_cast<unsigned>(ix) >= static_cast<unsigned>(W))
                    continue;
                const float* ip = inrow + static_cast<std::size_t>(ix) * C;
                const float* wtap = wt + static_cast<std::size_t>((dy + 1) * 3 + (dx + 1)) * C * K;
                for (int c = 0; c < C; ++c) {
                    const float v = ip[c];
                    const float* wr = wtap + static_cast<std::size_t>(c) * K;
                    float* a = acc.data();
                    for (int k = 0; k < K; ++k)
                        a[k] += v * wr[k];
                }
            }
        }
        std::memcpy(dst + ((static_cast<std::size_t>(n) * H + y) * W + x) * K, acc.data(),
                    sizeof(float) * static_cast<std::size_t>(K));
    }
}

// grad wrt input: input position (y,x) was consumed by output (y+dy,x+dx)
// through kernel offset (1-dy, 1-dx); CT templates the input channel count
template <int CT>
void conv_bwd_input_row(const float* go, const float* wt, float* gi, int H, int W, int K, int n,
                        int y) {
#if MCDN_HAVE_VEC
    if constexpr (CT % 8 == 0) {
        constexpr int NV = CT / 8;
        vf8 acc[NV];
        for (int x = 0; x < W; ++x) {
            for (int i = 0; i < NV; ++i)
                acc[i] = vzero8();
            for (int dy = -1; dy <= 1; ++dy) {
                const int oy = y + dy;
                if (static_cast<unsigned>(oy) >= static_cast<unsigned>(H))
                    continue;
                const float* gorow = go + (static_cast<std::size_t>(n) * H + oy) * W * K;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ox = x + dx;
                    if (static_cast<unsigned>(ox) >= static_cast<unsigned>(W))
                        continue;
                    const float* gp = gorow + static_cast<std::size_t>(ox) * K;
                    const float* wr =
                        wt + static_cast<std::size_t>((1 - dy) * 3 + (1 - dx)) * K * CT;
                    for (int k = 0; k < K; ++k) {
                        const float v = gp[k];
                        for (int i = 0; i < NV; ++i)
                            acc[i] += vload8(wr + 8 * i) * v;
                        wr += CT;
                    }
                }
            }
            float* o =
                gi + ((static_cast<std::size_t>(n) * H + y) * W + x) * static_cast<std::size_t>(CT);
            for (int i = 0; i < NV; ++i)
                vstore8(o + 8 * i, acc[i]);
        }
        return;
    }
#endif
    float acc[CT];
    for (int x = 0; x < W; ++x) {
        for (int c = 0; c < CT; ++c)
            acc[c] = 0.0f;
        for (int dy = -1; dy <= 1; ++dy) {
            const int oy = y + dy;
            if (static_cast<unsigned>(oy) >= static_cast<unsigned>(H))
                continue;
            const float* gorow = go + (static_cast<std::size_t>(n) * H + oy) * W * K;
            for (int dx = -1; dx <= 1; ++dx) {
                const int ox = x + dx;
                if (static_cast<unsigned>(ox) >= static_cast<unsigned>(W))
                    continue;
                const float* gp = gorow + static_cast<std::size_t>(ox) * K;
                const float* wtap =
                    wt + static_cast<std::size_t>((1 - dy) * 3 + (1 - dx)) * K * CT;
                for (int k = 0; k < K; ++k) {
                    const float v = gp[k];
                    const float* wr = wtap + static_cast<std::size_t>(k) * CT;
                    for (int c = 0; c < CT; ++c)
                        acc[c] += v * wr[c];
                }
            }
        }
        float* o = gi + ((static_cast<std::size_t>(n) * H + y) * W + x) * static_cast<std::size_t>(CT);
        for (int c = 0; c < CT; ++c)
            o[c] = acc[c];
    }
}

inline void conv_bwd_input_row_dyn(const float* go, const float* wt, float* gi, int H, int W,
                                   int C, int K, int n, int y) {
    std::vector<float> acc(static_cast<std::size_t>(C));
    for (int x = 0; x < W; ++x) {
        std::memset(acc.data(), 0, sizeof(float) * static_cast<std::size_t>(C));
        for (int dy = -1; dy <= 1; ++dy) {
            const int oy = y + dy;
            if (static_cast<unsigned>(oy) >= static_cast<unsigned>(H))
                continue;
            const float* gorow = go + (static_cast<std::size_t>(n) * H + oy) * W * K;
            for (int dx = -1; dx <= 1; ++dx) {
                const int ox = x + dx;
                if (static_cast<unsigned>(ox) >= static_cast<unsigned>(W))
                    continue;
                const float* gp = gorow + static_cast<std::size_t>(ox) * K;
                const float* wtap = wt + static_cast<std::size_t>((1 - dy) * 3 + (1 - dx)) * K * C;
                for (int k = 0; k < K; ++k) {
                    const float v = gp[k];
                    const float* wr = wtap + static_cast<std::size_t>(k) * C;
                    float* a = acc.data();
                    for (int c = 0; c < C; ++c)
                        a[c] += v * wr[c];
                }
            }
        }
        std::memcpy(gi + ((static_cast<std::size_t>(n) * H + y) * W + x) * C, acc.data(),
                    sizeof(float) * static_cast<std::size_t>(C));
    }
}

// grad wrt kernels for one sample, accumulated into part[tap, K, Cin]; the
// x loop keeps a per-row register accumulator for each (tap, k) pair
template <int CT>
void conv_bwd_kernels_sample(const float* in, const float* go, float* part, double* bias_part,
                             int H, int W, int K, int n) {
    const float* in_n = in + static_cast<std::size_t>(n) * H * W * CT;
    const float* go_n = go + static_cast<std::size_t>(n) * H * W * K;
    for (int y = 0; y < H; ++y) {
        const float* gorow = go_n + static_cast<std::size_t>(y) * W * K;
        for (int x = 0; x < W; ++x)
            for (int k = 0; k < K; ++k)
                bias_part[k] += gorow[static_cast<std::size_t>(x) * K + k];
        for (int dy = -1; dy <= 1; ++dy) {
            const int iy = y + dy;
            if (static_cast<unsigned>(iy) >= static_cast<unsigned>(H))
                continue;
            const float* inrow = in_n + static_cast<std::size_t>(iy) * W * CT;
            for (int dx = -1; dx <= 1; ++dx) {
                const int x0 = dx < 0 ? 1 : 0;
                const int x1 = dx > 0 ? W - 1 : W;
                float* ptap = part + static_cast<std::size_t>((dy + 1) * 3 + (dx + 1)) * K * CT;
                for (int k = 0; k < K; ++k) {
                    const float* ip = inrow + static_cast<std::size_t>(x0 + dx) * CT;
                    const float* gp = gorow + static_cast<std::size_t>(x0) * K + k;
                    float* pr = ptap + static_cast<std::size_t>(k) * CT;
#if MCDN_HAVE_VEC
                    if constexpr (CT % 8 == 0) {
                        constexpr int NV = CT / 8;
                        vf8 acc[NV];
                        for (int i = 0; i < NV; ++i)
                            acc[i] = vzero8();
                        for (int x = x0; x < x1; ++x) {
                            const float g = *gp;
                            for (int i = 0; i < NV; ++i)
                                acc[i] += vload8(ip + 8 * i) * g;
                            ip += CT;
                            gp += K;
                        }
                        for (int i = 0; i < NV; ++i)
                            vstore8(pr + 8 * i, vload8(pr + 8 * i) + acc[i]);
                        continue;
                    }
#endif
                    float acc[CT];
                    for (int c = 0; c < CT; ++c)
                        acc[c] = 0.0f;
                    for (int x = x0; x < x1; ++x) {
                        const float g = *gp;
                        for (int c = 0; c < CT; ++c)
                            acc[c] += g * ip[c];
                        ip += CT;
                        gp += K;
                    }
                    for (int c = 0; c < CT; ++c)
                        pr[c] += acc[c];
                }
            }
        }
    }
}

inline void conv_bwd_kernels_sample_dyn(const float* in, const float* go, float* part,
                                        double* bias_part, int H, int W, int C, int K, int n) {
    const float* in_n = in + static_cast<std::size_t>(n) * H * W * C;
    const float* go_n = go + static_cast<std::size_t>(n) * H * W * K;
    std::vector<float> acc(static_cast<std::size_t>(C));
    for (int y = 0; y < H; ++y) {
        const float* gorow = go_n + static_cast<std::size_t>(y) * W * K;
        for (int x = 0; x < W; ++x)
            for (int k = 0; k < K; ++k)
                bias_part[k] += gorow[static_cast<std::size_t>(x) * K + k];
        for (int dy = -1; dy <= 1; ++dy) {
            const int iy = y + dy;
            if (static_cast<unsigned>(iy) >= static_cast<unsigned>(H))
                continue;
            const float* inrow = in_n + static_cast<std::size_t>(iy) * W * C;
            for (int dx = -1; dx <= 1; ++dx) {
                const int x0 = dx < 0 ? 1 : 0;
                const int x1 = dx > 0 ? W - 1 : W;
                float* ptap = part + static_cast<std::size_t>((dy + 1) * 3 + (dx + 1)) * K * C;
                for (int k = 0; k < K; ++k) {
                    std::memset(acc.data(), 0, sizeof(float) * static_cast<std::size_t>(C));
                    const float* ip = inrow + static_cast<std::size_t>(x0 + dx) * C;
                    const float* gp = gorow + static_cast<std::size_t>(x0) * K + k;
                    float* a = acc.data();
                    for (int x = x0; x < x1; ++x) {
                        const float g = *gp;
                        for (int c = 0; c < C; ++c)
                            a[c] += g * ip[c];
                        ip += C;
                        gp += K;
                    }
                    float* pr = ptap + static_cast<std::size_t>(k) * C;
                    for (int c = 0; c < C; ++c)
                        pr[c] += a[c];
                }
            }
        }
    }
}

// true when a specialized row kernel exists for this channel count
template <class Fn>
bool dispatch_channels(int ch, Fn&& fn) {
    switch (ch) {
    case 1: fn.template operator()<1>(); return true;
    case 2: fn.template operator()<2>(); return true;
    case 4: fn.template operator()<4>(); return true;
    case 5: fn.template operator()<5>(); return true;
    case 8: fn.template operator()<8>(); return true;
    case 16: fn.template operator()<16>(); return true;
    case 32: fn.template operator()<32>(); return true;
    case 64: fn.template operator()<64>(); return true;
    default: return false;
    }
}

} // namespace detail

inline Tensor conv2d_mc_forward(const Tensor& input, const ConvParams& params) {
    detail::check_conv_args(input, params);
    const int N = input.dim(0), H = input.dim(1), W = input.dim(2), C = input.dim(3);
    const int K = params.out_channels();

    Tensor out({N, H, W, K});
    const std::vector<float> wt = detail::kernels_tap_cin_k(params.kernels);
    const float* in = input.data();
    const float* bias = params.bias.data();
    float* dst = out.data();

    const bool specialized = detail::dispatch_channels(K, [&]<int KT>() {
        parallel_for(static_cast<std::int64_t>(N) * H, [&](std::int64_t row) {
            detail::conv_fwd_row<KT>(in, wt.data(), bias, dst, H, W, C,
                                     static_cast<int>(row / H), static_cast<int>(row % H));
        });
    });
    if (!specialized)
        parallel_for(static_cast<std::int64_t>(N) * H, [&](std::int64_t row) {
            detail::conv_fwd_row_dyn(in, wt.data(), bias, dst, H, W, C, K,
                                     static_cast<int>(row / H), static_cast<int>(row % H));
        });
    return out;
}

// need_input_grad=false skips the grad-wrt-input pass (the first network
// layer never consumes it); grads.input is then an empty tensor
inline ConvGrads conv2d_mc_backward(const Tensor& input, const ConvParams& params,
                                    const Tensor& grad_out, bool need_input_grad = true) {
    detail::check_conv_args(input, params);
    const int N = input.dim(0), H = input.dim(1), W = input.dim(2), C = input.dim(3);
    const int K = params.out_channels();
    require_shape(grad_out, {N, H, W, K}, "conv2d grad_out");

    ConvGrads g;
    if (need_input_grad)
        g.input = Tensor({N, H, W, C});
    g.kernels = Tensor({K, 3, 3, C});
    g.bias = Tensor({K});

    const float* in = input.data();
    const float* go = grad_out.data();

    if (need_input_grad) {
        const std::vector<float> wt = detail::kernels_tap_k_cin(params.kernels);
        float* gi = g.input.data();
        const bool specialized = detail::dispatch_channels(C, [&]<int CT>() {
            parallel_for(static_cast<std::int64_t>(N) * H, [&](std::int64_t row) {
                detail::conv_bwd_input_row<CT>(go, wt.data(), gi, H, W, K,
                                               static_cast<int>(row / H),
                                               static_cast<int>(row % H));
            });
        });
        if (!specialized)
            parallel_for(static_cast<std::int64_t>(N) * H, [&](std::int64_t row) {
                detail::conv_bwd_input_row_dyn(go, wt.data(), gi, H, W, C, K,
                                               static_cast<int>(row / H),
                                               static_cast<int>(row % H));
            });
    }

    // per-sample partials in [tap, K, Cin] layout, merged in sample order so
    // results do not depend on thread count
    {
        const std::size_t part_len = static_cast<std::size_t>(9) * K * C;
        std::vector<float> parts(static_cast<std::size_t>(N) * part_len, 0.0f);
        std::vector<double> bias_parts(static_cast<std::size_t>(N) * K, 0.0);
        const bool specialized = detail::dispatch_channels(C, [&]<int CT>() {
            parallel_for(N, [&](std::int64_t n) {
                detail::conv_bwd_kernels_sample<CT>(
                    in, go, parts.data() + static_cast<std::size_t>(n) * part_len,
                    bias_parts.data() + static_cast<std::size_t>(n) * K, H, W, K,
                    static_cast<int>(n));
            });
        });
        if (!specialized)
            parallel_for(N, [&](std::int64_t n) {
                detail::conv_bwd_kernels_sample_dyn(
                    in, go, parts.data() + static_cast<std::size_t>(n) * part_len,
                    bias_parts.data() + static_cast<std::size_t>(n) * K, H, W, C, K,
                    static_cast<int>(n));
            });
        float* gk = g.kernels.data();
        for (int n = 0; n < N; ++n) {
            const float* part = parts.data() + static_cast<std::size_t>(n) * part_len;
            for (int tap = 0; tap < 9; ++tap)
                for (int k = 0; k < K; ++k) {
                    const float* pr = part + (static_cast<std::size_t>(tap) * K + k) * C;
                    float* gr = gk + (static_cast<std::size_t>(k) * 9 + tap) * C;
                    for (int c = 0; c < C; ++c)
                        gr[c] += pr[c];
                }
        }
        for (int k = 0; k < K; ++k) {
            double sum = 0.0;
            for (int n = 0; n < N; ++n)
                sum += bias_parts[static_cast<std::size_t>(n) * K + k];
            g.bias[static_cast<std::size_t>(k)] = static_cast<float>(sum);
        }
    }
    return g;
}

} // namespace mcdn
