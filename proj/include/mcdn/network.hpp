#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcdn/batchnorm.hpp"
#include "mcdn/bytesio.hpp"
#include "mcdn/conv.hpp"
#include "mcdn/relu.hpp"
#include "mcdn/tensor.hpp"

// Residual denoising network: a stack of 3x3 convolutions where the first
// layer is conv+ReLU, the middle layers are conv+BN+ReLU and the last layer
// is a bare convolution. The network consumes a stack of adjacent slices as
// input channels and predicts the noise map of the center slice; the clean
// slice estimate is center minus prediction.

namespace mcdn {

struct Layer {
    ConvParams conv;
    std::optional<BatchNormParams> bn;
    bool relu = false;
};

struct Model {
    int in_channels = 5;
    int out_channels = 1;
    int width = 64;
    int depth = 10;
    // raw intensities are divided by this before the first layer and the
    // prediction is scaled back, so the layers see unit-range values while
    // callers work in volume units
    float intensity_scale = 255.0f;
    std::vector<Layer> layers;

    // trainable tensors in serialization order (per layer: kernels, bias,
    // then gamma, beta where present)
    std::vector<Tensor*> trainable() {
        std::vector<Tensor*> out;
        for (Layer& l : layers) {
            out.push_back(&l.conv.kernels);
            out.push_back(&l.conv.bias);
            if (l.bn) {
                out.push_back(&l.bn->gamma);
                out.push_back(&l.bn->beta);
            }
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Layer& l : layers) {
            n += l.conv.kernels.size() + l.conv.bias.size();
            if (l.bn)
                n += l.bn->gamma.size() + l.bn->beta.size();
        }
        return n;
    }
};

// Kernels are drawn from a zero-mean normal with stddev sqrt(2 / fan_in),
// fan_in = 3*3*Cin of the layer; biases start at zero, BN at identity.
inline Model build_model(int in_channels = 5, int width = 64, int depth = 10,
                         int out_channels = 1, std::uint64_t seed = 0) {
    if (depth < 3)
        throw ValueError("model depth must be at least 3 (input, middle, output layers), got " +
                         std::to_string(depth));
    if (width < 1 || in_channels < 1 || out_channels < 1)
        throw ValueError("model width and channel counts must be positive");

    Model m;
    m.in_channels = in_channels;
    m.out_channels = out_channels;
    m.width = width;
    m.depth = depth;
    Rng rng(seed);
    for (int i = 0; i < depth; ++i) {
        const int cin = i == 0 ? in_channels : width;
        const int cout = i == depth - 1 ? out_channels : width;
        Layer l;
        l.conv = make_conv(cin, cout);
        const float stddev = std::sqrt(2.0f / (9.0f * static_cast<float>(cin)));
        l.conv.kernels = Tensor::gaussian({cout, 3, 3, cin}, stddev, rng);
        if (i > 0 && i < depth - 1)
            l.bn = make_batchnorm(cout);
        l.relu = i < depth - 1;
        m.layers.push_back(std::move(l));
    }
    return m;
}

struct ForwardCache {
    bool train_mode = false;
    // inputs[i] is what layer i's convolution consumed (inputs[0] is the
    // scaled network input); conv outputs live inside the BN caches
    std::vector<Tensor> inputs;
    std::vector<BnCache> bn;
};

namespace detail {

inline void check_batch(const Model& m, const Tensor& batch) {
    require_rank(batch, 4, "network input");
    if (batch.dim(3) != m.in_channels)
        throw ShapeError("network input has " + std::to_string(batch.dim(3)) +
                         " channels but the model expects " + std::to_string(m.in_channels));
}

inline Tensor scale_tensor(const Tensor& t, float factor) {
    Tensor out(t.shape());
    const float* p = t.data();
    float* q = out.data();
    for (std::size_t i = 0; i < t.size(); ++i)
        q[i] = p[i] * factor;
    return out;
}

template <bool Train>
Tensor run_forward(Model& m, const Tensor& batch, ForwardCache* cache) {
    check_batch(m, batch);
    if (cache) {
        cache->train_mode = Train;
        cache->inputs.clear();
        cache->bn.assign(m.layers.size(), {});
    }

    Tensor act = scale_tensor(batch, 1.0f / m.intensity_scale);
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        Layer& l = m.layers[i];
        if (cache)
            cache->inputs.push_back(act); // copy: backward needs the conv input
        Tensor z = conv2d_mc_forward(act, l.conv);
        if (l.bn)
            z = batchnorm_forward(std::move(z), *l.bn, Train ? Mode::train : Mode::infer,
                                  cache ? &cache->bn[i] : nullptr);
        act = l.relu ? relu_forward(z) : std::move(z);
    }
    return scale_tensor(act, m.intensity_scale);
}

} // namespace detail

// Train-mode forward: updates BN running statistics and fills the cache for
// backward.
inline Tensor forward_train(Model& m, const Tensor& batch, ForwardCache& cache) {
    return detail::run_forward<true>(m, batch, &cache);
}

// Infer-mode forward: deterministic and side-effect-free.
inline Tensor forward_infer(const Model& m, const Tensor& batch) {
    return detail::run_forward<false>(const_cast<Model&>(m), batch, nullptr);
}

// Cache-filling infer overload; the resulting cache is marked infer-mode and
// is rejected by backward.
inline Tensor forward_infer(const Model& m, const Tensor& batch, ForwardCache& cache) {
    return detail::run_forward<false>(const_cast<Model&>(m), batch, &cache);
}

struct LossValue {
    double value = 0.0;
    Tensor gradient; // d(loss)/d(prediction)
};

// l = (1/2N) sum over the batch of ||prediction - (noisy - clean)||^2
inline LossValue loss_residual(const Tensor& prediction, const Tensor& noisy_center,
                               const Tensor& clean_center) {
    if (!prediction.same_shape(noisy_center) || !prediction.same_shape(clean_center))
        throw ShapeError("loss_residual: shapes differ: prediction " + prediction.shape_string() +
                         ", noisy " + noisy_center.shape_string() + ", clean " +
                         clean_center.shape_string());
    const int N = prediction.dim(0);
    LossValue out;
    out.gradient = Tensor(prediction.shape());
    const float* p = prediction.data();
    const float* yn = noisy_center.data();
    const float* xc = clean_center.data();
    float* g = out.gradient.data();
    const float inv_n = 1.0f / static_cast<float>(N);
    double acc = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const float d = p[i] - (yn[i] - xc[i]);
        acc += static_cast<double>(d) * d;
        g[i] = d * inv_n;
    }
    out.value = acc / (2.0 * N);
    return out;
}

struct Gradients {
    struct LayerGrads {
        Tensor kernels, bias;
        Tensor gamma, beta; // empty for layers without BN
    };
    std::vector<LayerGrads> layers;

    // flattened view matching Model::trainable() order
    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        for (const LayerGrads& l : layers) {
            out.push_back(&l.kernels);
            out.push_back(&l.bias);
            if (l.gamma.size() > 0) {
                out.push_back(&l.gamma);
                out.push_back(&l.beta);
            }
        }
        return out;
    }
};

// Backpropagate d(loss)/d(prediction) through the whole stack. The gradient
// of the raw-unit prediction is scaled once by intensity_scale on the way in
// (the chain rule term of the output rescale); the input rescale only affects
// the input gradient, which is not needed.
inline Gradients backward(const Model& m, const ForwardCache& cache, const Tensor& loss_gradient) {
    if (!cache.train_mode)
        throw ValueError("backward requires a cache from a train-mode forward pass");
    if (cache.inputs.size() != m.layers.size())
        throw ShapeError("forward cache does not match model depth");

    Gradients g;
    g.layers.resize(m.layers.size());
    Tensor grad = detail::scale_tensor(loss_gradient, m.intensity_scale);
    for (int i = static_cast<int>(m.layers.size()) - 1; i >= 0; --i) {
        const Layer& l = m.layers[static_cast<std::size_t>(i)];
        const Tensor& conv_in = cache.inputs[static_cast<std::size_t>(i)];
        if (l.relu) {
            // the ReLU input is recoverable from the next layer's conv input
            // (its output); mask by output > 0
            const Tensor& relu_out = static_cast<std::size_t>(i + 1) < cache.inputs.size()
                                         ? cache.inputs[static_cast<std::size_t>(i + 1)]
                                         : conv_in; // unreachable: last layer has no relu
            grad = relu_backward(relu_out, grad);
        }
        if (l.bn) {
            BnGrads bg = batchnorm_backward(*l.bn, cache.bn[static_cast<std::size_t>(i)], grad);
            g.layers[static_cast<std::size_t>(i)].gamma = std::move(bg.gamma);
            g.layers[static_cast<std::size_t>(i)].beta = std::move(bg.beta);
            grad = std::move(bg.input);
        }
        ConvGrads cg = conv2d_mc_backward(conv_in, l.conv, grad, i > 0);
        g.layers[static_cast<std::size_t>(i)].kernels = std::move(cg.kernels);
        g.layers[static_cast<std::size_t>(i)].bias = std::move(cg.bias);
        grad = std::move(cg.input);
    }
    return g;
}

// The center slice of a [1, H, W, C] stack (channel C/2).
inline Tensor center_slice(const Tensor& stack) {
    require_rank(stack, 4, "stack");
    const int N = stack.dim(0), H = stack.dim(1), W = stack.dim(2), C = stack.dim(3);
    const int mid = C / 2;
    Tensor out({N, H, W, 1});
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                out.at(n, y, x, 0) = stack.at(n, y, x, mid);
    return out;
}

// center - predicted noise; the identity denoised + prediction == center
// holds exactly because the same prediction values are subtracted
inline Tensor denoise_stack(const Model& m, const Tensor& stack) {
    detail::check_batch(m, stack);
    if (m.out_channels != 1)
        throw ValueError("denoise_stack requires a single-channel residual model");
    Tensor pred = forward_infer(m, stack);
    Tensor out = center_slice(stack);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] -= pred[i];
    return out;
}

// ---- model file format ----
// magic "MCDN" | version u32 | depth u32 | width u32 | in_ch u32 | out_ch u32
// | intensity_scale f32 | bn_eps f32 | bn_momentum f32 | per-layer blobs of
// little-endian f32: kernels, bias, then gamma, beta, running_mean,
// running_var for BN layers. All counts follow from the metadata.

namespace detail {

constexpr std::uint32_t kModelVersion = 1;

inline void put_tensor(std::vector<std::uint8_t>& buf, const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        put_f32_le(buf, t[i]);
}

struct ByteReader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;
    std::string path;

    void need(std::size_t n, const char* what) const {
        if (pos + n > bytes.size())
            throw IoError("model file " + path + " truncated at offset " + std::to_string(pos) +
                          " while reading " + what);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        const std::uint32_t v = get_u32_le(bytes.data() + pos);
        pos += 4;
        return v;
    }
    float f32(const char* what) {
        need(4, what);
        const float v = get_f32_le(bytes.data() + pos);
        pos += 4;
        return v;
    }
    void tensor(Tensor& t, const char* what) {
        need(4 * t.size(), what);
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = get_f32_le(bytes.data() + pos);
            pos += 4;
        }
    }
};

} // namespace detail

inline void save_model(const Model& m, const std::string& path) {
    std::vector<std::uint8_t> buf;
    buf.push_back('M');
    buf.push_back('C');
    buf.push_back('D');
    buf.push_back('N');
    put_u32_le(buf, detail::kModelVersion);
    put_u32_le(buf, static_cast<std::uint32_t>(m.depth));
    put_u32_le(buf, static_cast<std::uint32_t>(m.width));
    put_u32_le(buf, static_cast<std::uint32_t>(m.in_channels));
    put_u32_le(buf, static_cast<std::uint32_t>(m.out_channels));
    put_f32_le(buf, m.intensity_scale);
    const BatchNormParams* bn0 = nullptr;
    for (const Layer& l : m.layers)
        if (l.bn) {
            bn0 = &*l.bn;
            break;
        }
    put_f32_le(buf, bn0 ? bn0->eps : 1e-5f);
    put_f32_le(buf, bn0 ? bn0->momentum : 0.1f);
    for (const Layer& l : m.layers) {
        detail::put_tensor(buf, l.conv.kernels);
        detail::put_tensor(buf, l.conv.bias);
        if (l.bn) {
            detail::put_tensor(buf, l.bn->gamma);
            detail::put_tensor(buf, l.bn->beta);
            detail::put_tensor(buf, l.bn->running_mean);
            detail::put_tensor(buf, l.bn->running_var);
        }
    }
    write_file_bytes(path, buf);
}

inline Model load_model(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    detail::ByteReader r{bytes, 0, path};
    r.need(4, "magic");
    if (bytes[0] != 'M' || bytes[1] != 'C' || bytes[2] != 'D' || bytes[3] != 'N')
        throw IoError("model file " + path + ": bad magic (expected \"MCDN\")");
    r.pos = 4;
    const std::uint32_t version = r.u32("version");
    if (version != detail::kModelVersion)
        throw IoError("model file " + path + ": unsupported format version " +
                      std::to_string(version));
    const int depth = static_cast<int>(r.u32("depth"));
    const int width = static_cast<int>(r.u32("width"));
    const int in_ch = static_cast<int>(r.u32("in_channels"));
    const int out_ch = static_cast<int>(r.u32("out_channels"));
    if (depth < 3 || width < 1 || in_ch < 1 || out_ch < 1)
        throw IoError("model file " + path + ": invalid metadata (depth " + std::to_string(depth) +
                      ", width " + std::to_string(width) + ")");
    const float scale = r.f32("intensity_scale");
    const float eps = r.f32("bn_eps");
    const float momentum = r.f32("bn_momentum");

    Model m = build_model(in_ch, width, depth, out_ch, 0);
    m.intensity_scale = scale;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        Layer& l = m.layers[i];
        r.tensor(l.conv.kernels, "kernels");
        r.tensor(l.conv.bias, "bias");
        if (l.bn) {
            l.bn->eps = eps;
            l.bn->momentum = momentum;
            r.tensor(l.bn->gamma, "gamma");
            r.tensor(l.bn->beta, "beta");
            r.tensor(l.bn->running_mean, "running_mean");
            r.tensor(l.bn->running_var, "running_var");
        }
    }
    if (r.pos != bytes.size())
        throw IoError("model file " + path + ": " + std::to_string(bytes.size() - r.pos) +
                      " unexpected trailing bytes at offset " + std::to_string(r.pos));
    return m;
}

} // namespace mcdn
