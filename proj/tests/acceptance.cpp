// Acceptance suite: runs every acceptance criterion end to end and prints one
// pass/fail line per criterion. Exits nonzero if any criterion fails.
//
// The heavyweight criteria (overfit sanity, desk-scale training runs) use the
// same code paths as the CLI; everything is seeded, so reruns are bit-stable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mcdn/denoise.hpp"
#include "mcdn/metrics.hpp"
#include "mcdn/network.hpp"
#include "mcdn/nifti.hpp"
#include "mcdn/noise.hpp"
#include "mcdn/optim.hpp"
#include "mcdn/phantom.hpp"
#include "support/reference_network.hpp"
#include "support/reference_ops.hpp"

namespace {

using mcdn::Model;
using mcdn::Rng;
using mcdn::Tensor;
using mcdn::Volume;

struct Criterion {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

std::vector<Criterion> g_results;

void run_criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Criterion c;
    c.name = name;
    try {
        const auto [pass, detail] = fn();
        c.pass = pass;
        c.detail = detail;
    } catch (const std::exception& e) {
        c.pass = false;
        c.detail = std::string("exception: ") + e.what();
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %s (%.1fs)%s%s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.seconds,
                c.detail.empty() ? "" : ": ", c.detail.c_str());
    std::fflush(stdout);
    g_results.push_back(std::move(c));
}

char detail_buf[256];

// ---- criterion 1: gradient correctness ----------------------------------

std::pair<bool, std::string> gradient_correctness() {
    int cases = 0;
    double worst = 0.0;
    bool ok = true;
    const double rtol = 1e-2, atol = 1e-4;

    // conv primitive: 20 random cases over all parameter and input entries
    {
        Rng rng(1001);
        for (int t = 0; t < 20; ++t) {
            const int n = 1 + static_cast<int>(rng.next_below(2));
            const int h = 3 + static_cast<int>(rng.next_below(4));
            const int w = 3 + static_cast<int>(rng.next_below(4));
            const int cin = 1 + static_cast<int>(rng.next_below(4));
            const int k = 1 + static_cast<int>(rng.next_below(4));
            Tensor in = Tensor::gaussian({n, h, w, cin}, 1.0f, rng);
            mcdn::ConvParams p = mcdn::make_conv(cin, k);
            p.kernels = Tensor::gaussian({k, 3, 3, cin}, 0.5f, rng);
            p.bias = Tensor::gaussian({k}, 0.5f, rng);
            Tensor probe = Tensor::gaussian({n, h, w, k}, 1.0f, rng);
            mcdn::ConvGrads g = mcdn::conv2d_mc_backward(in, p, probe);
            const refops::DTensor probe_d = refops::from_f32(probe);
            auto eval = [&]() {
                return refops::dot(probe_d,
                                   refops::conv2d(refops::from_f32(in), refops::from_f32(p.kernels),
                                                  refops::from_f32(p.bias)));
            };
            refops::GradCheckStats s;
            ok &= refops::fd_check_entries(p.kernels.data(), g.kernels.data(), p.kernels.size(),
                                           eval, rtol, atol, &s);
            ok &= refops::fd_check_entries(p.bias.data(), g.bias.data(), p.bias.size(), eval, rtol,
                                           atol, &s);
            ok &= refops::fd_check_entries(in.data(), g.input.data(), in.size(), eval, rtol, atol,
                                           &s);
            worst = std::max(worst, s.max_rel);
            ++cases;
        }
    }

    // batchnorm primitive: 20 random train-mode cases
    {
        Rng rng(1002);
        for (int t = 0; t < 20; ++t) {
            const int n = 1 + static_cast<int>(rng.next_below(2));
            const int h = 2 + static_cast<int>(rng.next_below(5));
            const int w = 2 + static_cast<int>(rng.next_below(5));
            const int c = 1 + static_cast<int>(rng.next_below(4));
            Tensor in = Tensor::gaussian({n, h, w, c}, 1.0f, rng);
            mcdn::BatchNormParams p = mcdn::make_batchnorm(c);
            p.gamma = Tensor::gaussian({c}, 1.0f, rng);
            p.beta = Tensor::gaussian({c}, 1.0f, rng);
            Tensor probe = Tensor::gaussian({n, h, w, c}, 1.0f, rng);
            mcdn::BnCache cache;
            mcdn::batchnorm_forward(in, p, mcdn::Mode::train, &cache);
            mcdn::BnGrads g = mcdn::batchnorm_backward(p, cache, probe);
            const refops::DTensor probe_d = refops::from_f32(probe);
            auto vec = [](const Tensor& t) {
                std::vector<double> v(t.size());
                for (std::size_t i = 0; i < t.size(); ++i)
                    v[i] = t[i];
                return v;
            };
            auto eval = [&]() {
                return refops::dot(probe_d, refops::batchnorm_train(refops::from_f32(in),
                                                                    vec(p.gamma), vec(p.beta),
                                                                    p.eps));
            };
            refops::GradCheckStats s;
            ok &= refops::fd_check_entries(in.data(), g.input.data(), in.size(), eval, rtol, atol,
                                           &s);
            ok &= refops::fd_check_entries(p.gamma.data(), g.gamma.data(), p.gamma.size(), eval,
                                           rtol, atol, &s);
            ok &= refops::fd_check_entries(p.beta.data(), g.beta.data(), p.beta.size(), eval, rtol,
                                           atol, &s);
            worst = std::max(worst, s.max_rel);
            ++cases;
        }
    }

    // relu primitive: 20 random cases, exact subgradient definition
    {
        Rng rng(1003);
        for (int t = 0; t < 20; ++t) {
            Tensor in = Tensor::gaussian({2, 5, 5, 3}, 1.0f, rng);
            Tensor probe = Tensor::gaussian({2, 5, 5, 3}, 1.0f, rng);
            Tensor g = mcdn::relu_backward(in, probe);
            for (std::size_t i = 0; i < in.size(); ++i) {
                const float expect = in[i] > 0.0f ? probe[i] : 0.0f;
                ok &= g[i] == expect;
            }
            ++cases;
        }
    }

    // end-to-end: 20 cases of a depth-3 width-2 model on a [1,6,6,5] batch
    {
        Rng rng(1004);
        for (int t = 0; t < 20; ++t) {
            Model m = mcdn::build_model(5, 2, 3, 1, 2000 + static_cast<std::uint64_t>(t));
            m.intensity_scale = 1.0f;
            Tensor batch = Tensor::gaussian({1, 6, 6, 5}, 1.0f, rng);
            Tensor noisy = Tensor::gaussian({1, 6, 6, 1}, 1.0f, rng);
            Tensor clean = Tensor::gaussian({1, 6, 6, 1}, 1.0f, rng);
            mcdn::ForwardCache cache;
            Tensor pred = mcdn::forward_train(m, batch, cache);
            mcdn::LossValue loss = mcdn::loss_residual(pred, noisy, clean);
            mcdn::Gradients grads = mcdn::backward(m, cache, loss.gradient);

            const refops::DTensor batch_d = refops::from_f32(batch);
            const refops::DTensor noisy_d = refops::from_f32(noisy);
            const refops::DTensor clean_d = refops::from_f32(clean);
            auto eval = [&]() {
                return refops::network_loss_train(m, batch_d, noisy_d, clean_d);
            };
            refops::GradCheckStats s;
            for (std::size_t li = 0; li < m.layers.size(); ++li) {
                mcdn::Layer& l = m.layers[li];
                ok &= refops::fd_check_entries(l.conv.kernels.data(),
                                               grads.layers[li].kernels.data(),
                                               l.conv.kernels.size(), eval, rtol, atol, &s);
                ok &= refops::fd_check_entries(l.conv.bias.data(), grads.layers[li].bias.data(),
                                               l.conv.bias.size(), eval, rtol, atol, &s);
                if (l.bn) {
                    ok &= refops::fd_check_entries(l.bn->gamma.data(),
                                                   grads.layers[li].gamma.data(),
                                                   l.bn->gamma.size(), eval, rtol, atol, &s);
                    ok &= refops::fd_check_entries(l.bn->beta.data(), grads.layers[li].beta.data(),
                                                   l.bn->beta.size(), eval, rtol, atol, &s);
                }
            }
            worst = std::max(worst, s.max_rel);
            ++cases;
        }
    }

    std::snprintf(detail_buf, sizeof(detail_buf), "%d cases, worst rel err %.2e", cases, worst);
    return {ok, detail_buf};
}

// ---- criterion 2: metric oracles -----------------------------------------

std::pair<bool, std::string> metric_oracles() {
    bool ok = true;
    double worst = 0.0;
    Rng rng(1010);
    for (int t = 0; t < 10; ++t) {
        Volume a(5, 5, 5), b(5, 5, 5);
        for (float& v : a.voxels)
            v = static_cast<float>(rng.next_unit() * 255.0);
        for (float& v : b.voxels)
            v = static_cast<float>(rng.next_unit() * 255.0);
        const double dp = std::abs(mcdn::psnr(a, b) - refops::psnr(a, b));
        const double ds = std::abs(mcdn::ssim_global(a, b) -
                                   refops::ssim_global(a, b, mcdn::kSsimC1, mcdn::kSsimC2));
        worst = std::max({worst, dp, ds});
        ok &= dp <= 1e-9 && ds <= 1e-9;
    }

    // closed forms
    Volume zeros(6, 6, 6);
    Volume flat = zeros;
    for (float& v : flat.voxels)
        v = 2.55f;
    ok &= std::abs(mcdn::psnr(zeros, flat) - 40.0) < 1e-5; // f32 quantization of 2.55
    ok &= std::isinf(mcdn::psnr(zeros, zeros));
    Volume self(5, 5, 5);
    for (float& v : self.voxels)
        v = static_cast<float>(rng.next_unit() * 255.0);
    ok &= std::abs(mcdn::ssim_global(self, self) - 1.0) <= 1e-9;

    std::snprintf(detail_buf, sizeof(detail_buf),
                  "10 brute-force pairs, worst abs diff %.2e; closed forms hold", worst);
    return {ok, detail_buf};
}

// ---- criterion 3: rician statistics --------------------------------------

std::pair<bool, std::string> rician_statistics() {
    const double sigma = 0.09 * 255.0;
    bool ok = true;
    double worst = 0.0;
    for (const double x : {0.0, 50.0, 200.0}) {
        Volume vol(100, 100, 100); // exactly 1e6 voxels
        for (float& v : vol.voxels)
            v = static_cast<float>(x);
        Volume noisy =
            mcdn::add_rician(vol, mcdn::NoiseLevel{9.0, sigma}, 7000 + static_cast<int>(x));
        double sum = 0.0, sum2 = 0.0;
        for (float v : noisy.voxels) {
            sum += v;
            sum2 += static_cast<double>(v) * v;
        }
        const double n = static_cast<double>(noisy.voxels.size());
        if (x == 0.0) {
            const double expect_mean = sigma * std::sqrt(M_PI / 2.0);
            const double rel = std::abs(sum / n - expect_mean) / expect_mean;
            worst = std::max(worst, rel);
            ok &= rel < 0.01;
        }
        const double expect_second = x * x + 2.0 * sigma * sigma;
        const double rel2 = std::abs(sum2 / n - expect_second) / expect_second;
        worst = std::max(worst, rel2);
        ok &= rel2 < 0.01;
    }
    std::snprintf(detail_buf, sizeof(detail_buf),
                  "1e6 draws at x in {0,50,200}, worst rel dev %.4f (limit 0.01)", worst);
    return {ok, detail_buf};
}

// ---- criterion 4: schedule endpoints --------------------------------------

std::pair<bool, std::string> schedule_endpoints() {
    mcdn::TrainConfig cfg; // defaults: 50 epochs, 1e-1 -> 1e-4
    const bool ok = mcdn::lr_at_epoch(cfg, 0) == 1e-1 && mcdn::lr_at_epoch(cfg, 49) == 1e-4;
    return {ok, "lr(0) == 1e-1 and lr(49) == 1e-4 exactly"};
}

// ---- criterion 5: overfit sanity ------------------------------------------

std::pair<bool, std::string> overfit_sanity() {
    Volume clean = mcdn::normalize(mcdn::make_phantom(96, 96, 24, 1));
    Volume noisy = mcdn::add_rician(clean, mcdn::NoiseLevel::from_percent(9.0), 42);
    auto cleanp = std::make_shared<const Volume>(std::move(clean));
    auto noisyp = std::make_shared<const Volume>(std::move(noisy));
    mcdn::PatchSet set = mcdn::extract_patches(noisyp, cleanp, 60, 8, 17, 7, 9.0);
    mcdn::InMemoryPatches data;
    for (std::size_t i = 0; i < set.size(); ++i)
        data.samples.push_back(set.get(i));

    Model m = mcdn::build_model(5, 16, 10, 1, 123);
    mcdn::TrainConfig cfg;
    cfg.batch_size = 8; // full batch: one Adam step per epoch
    cfg.epochs = 200;
    cfg.lr_start = 1e-3;
    cfg.lr_end = 1e-3;
    cfg.seed = 5;
    const auto history = mcdn::train(m, data, cfg);
    const double ratio = history.back().mean_loss / history.front().mean_loss;
    std::snprintf(detail_buf, sizeof(detail_buf),
                  "8 patches, 200 steps at lr 1e-3: loss %.0f -> %.0f (ratio %.4f, limit 0.10)",
                  history.front().mean_loss, history.back().mean_loss, ratio);
    return {ratio <= 0.10, detail_buf};
}

// ---- criteria 6 and 7: desk-scale training, gain and ordering -------------

struct DeskScale {
    double psnr_noisy = 0.0, psnr_specific = 0.0, psnr_general = 0.0;
    double ssim_noisy = 0.0, ssim_specific = 0.0;
};

DeskScale g_desk;
bool g_desk_ran = false;

void run_desk_scale() {
    std::vector<std::shared_ptr<const Volume>> vols;
    for (int i = 1; i <= 3; ++i)
        vols.push_back(
            std::make_shared<const Volume>(mcdn::normalize(mcdn::make_phantom(96, 96, 24, i))));
    mcdn::PatchConfig pc;
    pc.patch = 60;
    pc.stride = 6;
    pc.target_count = 2000;

    mcdn::TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.epochs = 10;
    cfg.lr_start = 1e-3;
    cfg.lr_end = 1e-4;
    cfg.seed = 21;

    const mcdn::PatchSet specific_set =
        mcdn::build_training_set(vols, mcdn::Regime::specific(9.0), pc, 11);
    Model specific = mcdn::build_model(5, 16, 10, 1, 31);
    mcdn::train(specific, specific_set, cfg);

    const mcdn::PatchSet general_set =
        mcdn::build_training_set(vols, mcdn::Regime::general(), pc, 12);
    Model general = mcdn::build_model(5, 16, 10, 1, 32);
    mcdn::train(general, general_set, cfg);

    const Volume clean = mcdn::normalize(mcdn::make_phantom(96, 96, 24, 99)); // held out
    const Volume noisy = mcdn::add_rician(clean, mcdn::NoiseLevel::from_percent(9.0), 1234);
    const Volume den_s = mcdn::denoise_volume(specific, noisy);
    const Volume den_g = mcdn::denoise_volume(general, noisy);

    g_desk.psnr_noisy = mcdn::psnr(clean, noisy);
    g_desk.ssim_noisy = mcdn::ssim_global(clean, noisy);
    g_desk.psnr_specific = mcdn::psnr(clean, den_s);
    g_desk.ssim_specific = mcdn::ssim_global(clean, den_s);
    g_desk.psnr_general = mcdn::psnr(clean, den_g);
    g_desk_ran = true;
}

std::pair<bool, std::string> desk_scale_gain() {
    if (!g_desk_ran)
        run_desk_scale();
    const double gain = g_desk.psnr_specific - g_desk.psnr_noisy;
    const bool ok = gain >= 3.0 && g_desk.ssim_specific > g_desk.ssim_noisy;
    std::snprintf(detail_buf, sizeof(detail_buf),
                  "held-out phantom at 9%%: PSNR %.2f -> %.2f dB (gain %.2f, need >= 3.0), "
                  "SSIM %.4f -> %.4f",
                  g_desk.psnr_noisy, g_desk.psnr_specific, gain, g_desk.ssim_noisy,
                  g_desk.ssim_specific);
    return {ok, detail_buf};
}

std::pair<bool, std::string> specific_vs_general_ordering() {
    if (!g_desk_ran)
        run_desk_scale();
    const double margin = g_desk.psnr_specific - g_desk.psnr_general;
    std::snprintf(detail_buf, sizeof(detail_buf),
                  "at its own level: specific %.2f dB vs general %.2f dB (margin %.2f, need >= "
                  "-0.1)",
                  g_desk.psnr_specific, g_desk.psnr_general, margin);
    return {margin >= -0.1, detail_buf};
}

// ---- criterion 8: determinism ----------------------------------------------

std::pair<bool, std::string> determinism() {
    const int saved = mcdn::num_threads();
    mcdn::set_num_threads(1);

    Volume clean = mcdn::normalize(mcdn::make_phantom(48, 48, 10, 5));
    Volume n1 = mcdn::add_rician(clean, mcdn::NoiseLevel::from_percent(9.0), 77);
    Volume n2 = mcdn::add_rician(clean, mcdn::NoiseLevel::from_percent(9.0), 77);
    bool volumes_equal = n1.voxels == n2.voxels;

    auto cleanp = std::make_shared<const Volume>(std::move(clean));
    auto noisyp = std::make_shared<const Volume>(std::move(n1));
    const mcdn::PatchSet set = mcdn::extract_patches(noisyp, cleanp, 40, 24, 4, 3, 9.0);
    mcdn::TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 3;
    cfg.lr_start = 1e-3;
    cfg.lr_end = 1e-3;
    cfg.seed = 9;

    Model m1 = mcdn::build_model(5, 8, 4, 1, 3);
    const auto h1 = mcdn::train(m1, set, cfg);
    Model m2 = mcdn::build_model(5, 8, 4, 1, 3);
    const auto h2 = mcdn::train(m2, set, cfg);
    mcdn::set_num_threads(saved);

    bool history_equal = h1.size() == h2.size();
    for (std::size_t i = 0; history_equal && i < h1.size(); ++i)
        history_equal = h1[i].mean_loss == h2[i].mean_loss;

    std::snprintf(detail_buf, sizeof(detail_buf),
                  "noisy volumes bit-equal: %s; loss histories bit-equal over %zu epochs: %s",
                  volumes_equal ? "yes" : "no", h1.size(), history_equal ? "yes" : "no");
    return {volumes_equal && history_equal, detail_buf};
}

// ---- criterion 9: nifti round-trip -----------------------------------------

std::pair<bool, std::string> nifti_roundtrip() {
    Rng rng(1020);
    bool ok = true;
    const std::vector<std::array<int, 3>> dims{{1, 1, 1},   {60, 60, 5}, {3, 5, 7},
                                               {17, 9, 4},  {2, 2, 2},   {33, 1, 8},
                                               {1, 40, 3},  {8, 8, 8},   {23, 31, 2},
                                               {12, 13, 14}};
    for (const auto& d : dims) {
        Volume v(d[0], d[1], d[2]);
        for (float& w : v.voxels)
            w = static_cast<float>(rng.next_gaussian() * 120.0);
        const std::string path = "acceptance_roundtrip.nii";
        mcdn::write_nifti(v, path);
        Volume r = mcdn::read_nifti(path);
        ok &= r.dims == v.dims && r.voxels == v.voxels;
        std::remove(path.c_str());
    }
    std::snprintf(detail_buf, sizeof(detail_buf),
                  "%zu volumes including 1x1x1 and 60x60x5: voxels bit-exact", dims.size());
    return {ok, detail_buf};
}

} // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    std::printf("acceptance suite (%d threads)\n", mcdn::num_threads());

    run_criterion("gradient correctness: conv/bn/relu and end-to-end vs finite differences",
                  gradient_correctness);
    run_criterion("metric oracles: psnr and ssim vs brute force, closed forms", metric_oracles);
    run_criterion("rician statistics: mean and second moment at 1e6 draws", rician_statistics);
    run_criterion("schedule endpoints: lr(0) = 1e-1, lr(49) = 1e-4", schedule_endpoints);
    run_criterion("overfit sanity: 8 patches, <= 200 steps to <= 10% of initial loss",
                  overfit_sanity);
    run_criterion("desk-scale denoising: held-out PSNR gain >= 3 dB and SSIM gain",
                  desk_scale_gain);
    run_criterion("ordering: noise-specific >= general at its own level (- 0.1 dB)",
                  specific_vs_general_ordering);
    run_criterion("determinism: seeded noise and loss history bit-stable", determinism);
    run_criterion("nifti round-trip: bit-exact voxels on 10 volumes", nifti_roundtrip);

    int failed = 0;
    for (const Criterion& c : g_results)
        failed += c.pass ? 0 : 1;
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d/%zu criteria passed in %.0fs\n", static_cast<int>(g_results.size()) - failed,
                g_results.size(), total);
    return failed == 0 ? 0 : 1;
}
