#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mcdn/datapipe.hpp"
#include "mcdn/network.hpp"
#include "mcdn/rng.hpp"

// Adam optimization with the exponential learning-rate schedule and the
// epoch/mini-batch training loop. Runs are reproducible: batch order comes
// from a seeded shuffle and all reductions are merge-ordered, so a fixed seed
// gives a bit-identical loss history at any thread count.

namespace mcdn {

struct TrainConfig {
    int batch_size = 64;
    int epochs = 50;
    double lr_start = 1e-1;
    double lr_end = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1 || epochs < 1)
            throw ValueError("batch size and epoch count must be positive");
        if (!(lr_end > 0.0) || !(lr_end <= lr_start))
            throw ValueError("learning rates must satisfy 0 < lr_end <= lr_start");
        if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
            throw ValueError("adam betas must lie in (0, 1)");
    }
};

// lr(e) = lr_start * (lr_end / lr_start)^(e / (epochs - 1)); constant when
// epochs == 1. Endpoints are returned exactly.
inline double lr_at_epoch(const TrainConfig& config, int epoch) {
    if (epoch < 0 || epoch >= config.epochs)
        throw ValueError("epoch " + std::to_string(epoch) + " out of range [0, " +
                         std::to_string(config.epochs) + ")");
    if (epoch == 0)
        return config.lr_start;
    if (epoch == config.epochs - 1)
        return config.lr_end;
    const double t = static_cast<double>(epoch) / (config.epochs - 1);
    return config.lr_start * std::pow(config.lr_end / config.lr_start, t);
}

struct AdamState {
    std::vector<Tensor> m; // first moments, aligned with the parameter list
    std::vector<Tensor> v; // second moments
    std::int64_t t = 0;    // completed steps
};

inline AdamState init_adam(const std::vector<Tensor*>& params) {
    AdamState s;
    for (const Tensor* p : params) {
        s.m.emplace_back(p->shape());
        s.v.emplace_back(p->shape());
    }
    return s;
}

// One Adam update with bias correction:
//   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2,
//   p <- p - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
inline void adam_step(const std::vector<Tensor*>& params,
                      const std::vector<const Tensor*>& grads, AdamState& state, double lr,
                      const TrainConfig& config) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: parameter, gradient and state lists differ in length");
    state.t += 1;
    const double b1 = config.beta1, b2 = config.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        if (!p.same_shape(g) || !p.same_shape(m))
            throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i) +
                             ": param " + p.shape_string() + ", grad " + g.shape_string());
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j];
            const double mj = b1 * m[j] + (1.0 - b1) * gj;
            const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            p[j] = static_cast<float>(p[j] - lr * mhat / (std::sqrt(vhat) + config.adam_eps));
        }
    }
}

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

namespace detail {

struct Batch {
    Tensor input;        // [B, P, P, 5]
    Tensor noisy_center; // [B, P, P, 1]
    Tensor clean_center; // [B, P, P, 1]
};

inline Batch gather_batch(const PatchDataset& data, const std::vector<std::size_t>& order,
                          std::size_t begin, std::size_t end) {
    const int b = static_cast<int>(end - begin);
    const PatchSample first = data.get(order[begin]);
    const int p = first.clean_center.dim(0);
    Batch batch;
    batch.input = Tensor({b, p, p, kStackSlices});
    batch.noisy_center = Tensor({b, p, p, 1});
    batch.clean_center = Tensor({b, p, p, 1});
    const std::size_t stack_len = first.noisy_stack.size();
    const std::size_t center_len = first.clean_center.size();
    for (std::size_t i = begin; i < end; ++i) {
        const PatchSample s = i == begin ? first : data.get(order[i]);
        const std::size_t bi = i - begin;
        std::copy(s.noisy_stack.data(), s.noisy_stack.data() + stack_len,
                  batch.input.data() + bi * stack_len);
        std::copy(s.noisy_center.data(), s.noisy_center.data() + center_len,
                  batch.noisy_center.data() + bi * center_len);
        std::copy(s.clean_center.data(), s.clean_center.data() + center_len,
                  batch.clean_center.data() + bi * center_len);
    }
    return batch;
}

} // namespace detail

// Epoch/mini-batch training loop: shuffles per epoch with the seeded
// generator, allows a short final batch, applies forward/loss/backward/adam
// and records the mean batch loss per epoch.
inline std::vector<EpochStats> train(Model& model, const PatchDataset& data,
                                     const TrainConfig& config,
                                     const EpochCallback& on_epoch = {}) {
    config.validate();
    if (data.size() == 0)
        throw ValueError("train: dataset is empty");

    const std::vector<Tensor*> params = model.trainable();
    AdamState adam = init_adam(params);
    Rng shuffle_rng(mix64(config.seed, 0x7261696e));

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<EpochStats> history;
    history.reserve(static_cast<std::size_t>(config.epochs));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle(order, shuffle_rng);
        const double lr = lr_at_epoch(config, epoch);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            detail::Batch batch = detail::gather_batch(data, order, begin, end);

            ForwardCache cache;
            Tensor pred = forward_train(model, batch.input, cache);
            LossValue loss = loss_residual(pred, batch.noisy_center, batch.clean_center);
            Gradients grads = backward(model, cache, loss.gradient);
            adam_step(params, grads.tensors(), adam, lr, config);

            loss_sum += loss.value;
            ++batches;
        }
        EpochStats stats{epoch, lr, loss_sum / static_cast<double>(batches)};
        history.push_back(stats);
        if (on_epoch)
            on_epoch(stats);
    }
    return history;
}

// Loss log rows in the format the CLI writes: epoch, lr, mean_loss.
inline void write_loss_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write loss log: " + path);
    out << "epoch,lr,mean_loss\n";
    for (const EpochStats& e : history) {
        char line[96];
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", e.epoch, e.lr, e.mean_loss);
        out << line;
    }
    if (!out)
        throw IoError("failed writing loss log: " + path);
}

} // namespace mcdn
