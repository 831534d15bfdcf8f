#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "mcdn/metrics.hpp"
#include "mcdn/network.hpp"
#include "mcdn/noise.hpp"
#include "mcdn/optim.hpp"

// Built-in smoke suite: finite-difference checks of every differentiable
// primitive plus closed-form metric and schedule oracles. Runs in seconds and
// reports one named result per check; intended for `selfcheck` in the CLI and
// for installation sanity.

namespace mcdn {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace selfcheck_detail {

// central finite differences of a scalar probe through the library's own
// forward paths, evaluated at fixed seeds
template <typename Eval>
double fd_slot(float& slot, double h, Eval&& eval) {
    const float saved = slot;
    const float wp = static_cast<float>(static_cast<double>(saved) + h);
    const float wm = static_cast<float>(static_cast<double>(saved) - h);
    slot = wp;
    const double fp = eval();
    slot = wm;
    const double fm = eval();
    slot = saved;
    return (fp - fm) / (static_cast<double>(wp) - static_cast<double>(wm));
}

inline double probe_dot(const Tensor& probe, const Tensor& value) {
    double acc = 0.0;
    for (std::size_t i = 0; i < value.size(); ++i)
        acc += static_cast<double>(probe[i]) * value[i];
    return acc;
}

struct GradStats {
    double max_rel = 0.0;
    bool ok = true;

    void feed(double analytic, double fd, double rtol, double atol) {
        const double err = std::abs(analytic - fd);
        const double denom = std::max(std::abs(analytic), std::abs(fd));
        const double rel = err / std::max(denom, atol / rtol);
        max_rel = std::max(max_rel, rel);
        if (err > atol && err > rtol * denom)
            ok = false;
    }
};

} // namespace selfcheck_detail

// fault_injection perturbs one conv gradient entry before comparison; used to
// verify that the checker itself can fail
inline std::vector<CheckResult> run_selfcheck(bool fault_injection = false) {
    using namespace selfcheck_detail;
    std::vector<CheckResult> results;
    const double rtol = 1e-2, atol = 1e-3, h = 1e-2;

    {
        Rng rng(101);
        Tensor in = Tensor::gaussian({2, 6, 6, 3}, 1.0f, rng);
        ConvParams p = make_conv(3, 4);
        p.kernels = Tensor::gaussian({4, 3, 3, 3}, 0.4f, rng);
        p.bias = Tensor::gaussian({4}, 0.4f, rng);
        Tensor probe = Tensor::gaussian({2, 6, 6, 4}, 1.0f, rng);
        ConvGrads g = conv2d_mc_backward(in, p, probe);
        if (fault_injection)
            g.kernels[0] = -g.kernels[0] - 25.0f;
        auto eval = [&]() { return probe_dot(probe, conv2d_mc_forward(in, p)); };
        GradStats stats;
        for (std::size_t i = 0; i < p.kernels.size(); ++i)
            stats.feed(g.kernels[i], fd_slot(p.kernels[i], h, eval), rtol, atol);
        for (std::size_t i = 0; i < p.bias.size(); ++i)
            stats.feed(g.bias[i], fd_slot(p.bias[i], h, eval), rtol, atol);
        for (std::size_t i = 0; i < in.size(); ++i)
            stats.feed(g.input[i], fd_slot(in[i], h, eval), rtol, atol);
        results.push_back({"conv2d gradients vs finite differences", stats.ok,
                           "max rel err " + std::to_string(stats.max_rel)});
    }

    {
        Rng rng(102);
        Tensor in = Tensor::gaussian({2, 5, 5, 3}, 1.0f, rng);
        BatchNormParams p = make_batchnorm(3);
        p.gamma = Tensor::gaussian({3}, 1.0f, rng);
        p.beta = Tensor::gaussian({3}, 1.0f, rng);
        Tensor probe = Tensor::gaussian({2, 5, 5, 3}, 1.0f, rng);
        BnCache cache;
        batchnorm_forward(in, p, Mode::train, &cache);
        BnGrads g = batchnorm_backward(p, cache, probe);
        auto eval = [&]() {
            BatchNormParams local = p; // running stats must not drift
            return probe_dot(probe, batchnorm_forward(in, local, Mode::train));
        };
        GradStats stats;
        for (std::size_t i = 0; i < in.size(); ++i)
            stats.feed(g.input[i], fd_slot(in[i], h, eval), rtol, atol);
        for (std::size_t i = 0; i < p.gamma.size(); ++i)
            stats.feed(g.gamma[i], fd_slot(p.gamma[i], h, eval), rtol, atol);
        for (std::size_t i = 0; i < p.beta.size(); ++i)
            stats.feed(g.beta[i], fd_slot(p.beta[i], h, eval), rtol, atol);
        results.push_back({"batchnorm gradients vs finite differences", stats.ok,
                           "max rel err " + std::to_string(stats.max_rel)});
    }

    {
        Rng rng(103);
        Tensor in = Tensor::gaussian({40}, 1.0f, rng);
        Tensor probe = Tensor::gaussian({40}, 1.0f, rng);
        Tensor g = relu_backward(in, probe);
        bool ok = true;
        for (std::size_t i = 0; i < in.size(); ++i) {
            const float expect = in[i] > 0.0f ? probe[i] : 0.0f;
            ok = ok && g[i] == expect;
        }
        results.push_back({"relu subgradient", ok, ""});
    }

    {
        // composite check: per-entry FD through the f32 stack is noise-limited,
        // so the end-to-end pass is validated by directional derivatives (one
        // random direction per parameter tensor)
        Rng rng(104);
        Model m = build_model(5, 2, 3, 1, 79);
        m.intensity_scale = 1.0f;
        Tensor batch = Tensor::gaussian({1, 5, 5, 5}, 1.0f, rng);
        Tensor noisy = Tensor::gaussian({1, 5, 5, 1}, 1.0f, rng);
        Tensor clean = Tensor::gaussian({1, 5, 5, 1}, 1.0f, rng);
        ForwardCache cache;
        Tensor pred = forward_train(m, batch, cache);
        LossValue loss = loss_residual(pred, noisy, clean);
        Gradients grads = backward(m, cache, loss.gradient);
        auto eval = [&]() {
            Model local = m;
            ForwardCache c;
            Tensor p = forward_train(local, batch, c);
            return loss_residual(p, noisy, clean).value;
        };
        GradStats stats;
        auto directional = [&](Tensor& param, const Tensor& grad) {
            Tensor dir = Tensor::gaussian(param.shape(), 1.0f, rng);
            double analytic = 0.0;
            for (std::size_t i = 0; i < grad.size(); ++i)
                analytic += static_cast<double>(grad[i]) * dir[i];
            const Tensor saved = param;
            double fd = 0.0;
            // retry at a smaller step if the difference straddles a ReLU kink
            for (const double hs : {1e-3, 1e-4}) {
                for (std::size_t i = 0; i < param.size(); ++i)
                    param[i] = static_cast<float>(saved[i] + hs * dir[i]);
                const double fp = eval();
                for (std::size_t i = 0; i < param.size(); ++i)
                    param[i] = static_cast<float>(saved[i] - hs * dir[i]);
                const double fm = eval();
                param = saved;
                fd = (fp - fm) / (2.0 * hs);
                const double err = std::abs(analytic - fd);
                if (err <= 1e-2 || err <= rtol * std::max(std::abs(analytic), std::abs(fd)))
                    break;
            }
            stats.feed(analytic, fd, rtol, 1e-2);
        };
        for (std::size_t li = 0; li < m.layers.size(); ++li) {
            Layer& l = m.layers[li];
            directional(l.conv.kernels, grads.layers[li].kernels);
            directional(l.conv.bias, grads.layers[li].bias);
            if (l.bn) {
                directional(l.bn->gamma, grads.layers[li].gamma);
                directional(l.bn->beta, grads.layers[li].beta);
            }
        }
        results.push_back({"end-to-end model gradients vs finite differences", stats.ok,
                           "max rel err " + std::to_string(stats.max_rel)});
    }

    {
        Volume zeros(6, 6, 6);
        Volume flat = zeros;
        for (float& v : flat.voxels)
            v = 2.55f;
        const double p = psnr(zeros, flat);
        const bool ok = std::abs(p - 40.0) < 1e-5 && std::isinf(psnr(zeros, zeros));
        results.push_back({"psnr closed forms (2.55 -> 40 dB, identical -> inf)", ok,
                           "got " + std::to_string(p)});
    }

    {
        Rng rng(105);
        Volume a(5, 5, 5), b(5, 5, 5);
        for (float& v : a.voxels)
            v = static_cast<float>(rng.next_unit() * 255.0);
        for (float& v : b.voxels)
            v = static_cast<float>(rng.next_unit() * 255.0);
        const double self = ssim_global(a, a);
        const double sym = std::abs(ssim_global(a, b) - ssim_global(b, a));
        const bool ok = std::abs(self - 1.0) < 1e-9 && sym < 1e-12;
        results.push_back({"ssim identity and symmetry", ok,
                           "self " + std::to_string(self)});
    }

    {
        TrainConfig cfg;
        const bool ok = lr_at_epoch(cfg, 0) == 0.1 && lr_at_epoch(cfg, 49) == 1e-4;
        results.push_back({"learning rate schedule endpoints", ok, ""});
    }

    {
        const double sigma = 20.0;
        Volume zeros(50, 50, 40); // 1e5 draws: cheap but tight enough for 3%
        Volume noisy = add_rician(zeros, NoiseLevel{7.8, sigma}, 2024);
        double sum = 0.0;
        for (float v : noisy.voxels)
            sum += v;
        const double mean = sum / static_cast<double>(noisy.voxels.size());
        const double expect = sigma * std::sqrt(M_PI / 2.0);
        const bool ok = std::abs(mean - expect) / expect < 0.03;
        results.push_back({"rician background mean vs sigma*sqrt(pi/2)", ok,
                           "mean " + std::to_string(mean) + " expected " +
                               std::to_string(expect)});
    }

    return results;
}

} // namespace mcdn
