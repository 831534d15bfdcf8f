#include <doctest.h>

#include "mcdn/conv.hpp"
#include "mcdn/parallel.hpp"
#include "support/reference_ops.hpp"

using mcdn::ConvParams;
using mcdn::Rng;
using mcdn::Tensor;

namespace {

ConvParams random_conv(int cin, int k, Rng& rng, float stddev = 0.5f) {
    ConvParams p = mcdn::make_conv(cin, k);
    p.kernels = Tensor::gaussian({k, 3, 3, cin}, stddev, rng);
    p.bias = Tensor::gaussian({k}, stddev, rng);
    return p;
}

} // namespace

TEST_CASE("conv forward: zero input gives bias everywhere") {
    Rng rng(1);
    ConvParams p = random_conv(1, 3, rng);
    Tensor in({1, 5, 5, 1});
    Tensor out = mcdn::conv2d_mc_forward(in, p);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x)
            for (int k = 0; k < 3; ++k)
                CHECK(out.at(0, y, x, k) == p.bias[static_cast<std::size_t>(k)]);
}

TEST_CASE("conv forward: ones kernel on constant input counts in-bounds taps") {
    ConvParams p = mcdn::make_conv(1, 1);
    p.kernels.fill(1.0f);
    Tensor in = Tensor::full({1, 5, 5, 1}, 1.0f);
    Tensor out = mcdn::conv2d_mc_forward(in, p);
    CHECK(out.at(0, 2, 2, 0) == doctest::Approx(9.0));
    CHECK(out.at(0, 0, 2, 0) == doctest::Approx(6.0));
    CHECK(out.at(0, 2, 0, 0) == doctest::Approx(6.0));
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(4.0));
    CHECK(out.at(0, 4, 4, 0) == doctest::Approx(4.0));
}

TEST_CASE("conv forward matches the direct triple-loop reference") {
    Rng rng(7);
    Tensor in = Tensor::gaussian({1, 8, 8, 3}, 1.0f, rng);
    ConvParams p = random_conv(3, 4, rng);
    Tensor out = mcdn::conv2d_mc_forward(in, p);
    refops::DTensor ref =
        refops::conv2d(refops::from_f32(in), refops::from_f32(p.kernels), refops::from_f32(p.bias));
    REQUIRE(out.size() == ref.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(ref.data[i]).epsilon(1e-5));
}

TEST_CASE("conv rejects channel mismatch") {
    Rng rng(3);
    ConvParams p = random_conv(3, 2, rng);
    Tensor in({1, 4, 4, 2});
    CHECK_THROWS_AS(mcdn::conv2d_mc_forward(in, p), mcdn::ShapeError);
    Tensor ok({1, 4, 4, 3});
    Tensor bad_grad({1, 4, 4, 3});
    CHECK_THROWS_AS(mcdn::conv2d_mc_backward(ok, p, bad_grad), mcdn::ShapeError);
}

TEST_CASE("conv rejects kernels without 3x3 spatial support") {
    ConvParams p;
    p.kernels = Tensor({2, 5, 5, 3});
    p.bias = Tensor({2});
    Tensor in({1, 4, 4, 3});
    CHECK_THROWS_AS(mcdn::conv2d_mc_forward(in, p), mcdn::ShapeError);
}

TEST_CASE("conv forward is linear in the input when bias is zero") {
    Rng rng(11);
    Tensor x = Tensor::gaussian({2, 6, 6, 2}, 1.0f, rng);
    Tensor y = Tensor::gaussian({2, 6, 6, 2}, 1.0f, rng);
    ConvParams p = random_conv(2, 3, rng);
    p.bias.fill(0.0f);
    const float a = 0.7f, b = -1.3f;
    Tensor mix({2, 6, 6, 2});
    for (std::size_t i = 0; i < mix.size(); ++i)
        mix[i] = a * x[i] + b * y[i];
    Tensor fx = mcdn::conv2d_mc_forward(x, p);
    Tensor fy = mcdn::conv2d_mc_forward(y, p);
    Tensor fmix = mcdn::conv2d_mc_forward(mix, p);
    for (std::size_t i = 0; i < fmix.size(); ++i)
        CHECK(fmix[i] == doctest::Approx(a * fx[i] + b * fy[i]).epsilon(1e-5));
}

TEST_CASE("conv backward: zero grad_out gives zero gradients") {
    Rng rng(5);
    Tensor in = Tensor::gaussian({1, 4, 4, 2}, 1.0f, rng);
    ConvParams p = random_conv(2, 3, rng);
    Tensor go({1, 4, 4, 3});
    mcdn::ConvGrads g = mcdn::conv2d_mc_backward(in, p, go);
    for (std::size_t i = 0; i < g.input.size(); ++i)
        CHECK(g.input[i] == 0.0f);
    for (std::size_t i = 0; i < g.kernels.size(); ++i)
        CHECK(g.kernels[i] == 0.0f);
    for (std::size_t i = 0; i < g.bias.size(); ++i)
        CHECK(g.bias[i] == 0.0f);
}

TEST_CASE("conv backward: single tap gradient reproduces the input patch") {
    Rng rng(9);
    Tensor in = Tensor::gaussian({1, 3, 3, 1}, 1.0f, rng);
    ConvParams p = random_conv(1, 1, rng);
    Tensor go({1, 3, 3, 1});
    go.at(0, 1, 1, 0) = 1.0f; // center tap only
    mcdn::ConvGrads g = mcdn::conv2d_mc_backward(in, p, go);
    for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
            CHECK(g.kernels.at(0, ky, kx, 0) == doctest::Approx(in.at(0, ky, kx, 0)));
    CHECK(g.bias[0] == doctest::Approx(1.0));
}

TEST_CASE("conv backward: grad_bias sums grad_out over batch and space") {
    Rng rng(13);
    Tensor in = Tensor::gaussian({2, 4, 5, 3}, 1.0f, rng);
    ConvParams p = random_conv(3, 2, rng);
    Tensor go = Tensor::gaussian({2, 4, 5, 2}, 1.0f, rng);
    mcdn::ConvGrads g = mcdn::conv2d_mc_backward(in, p, go);
    for (int k = 0; k < 2; ++k) {
        double sum = 0.0;
        for (int n = 0; n < 2; ++n)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 5; ++x)
                    sum += go.at(n, y, x, k);
        CHECK(g.bias[static_cast<std::size_t>(k)] ==
              doctest::Approx(sum).epsilon(1e-5));
    }
}

TEST_CASE("conv backward matches central finite differences of the forward map") {
    Rng rng(21);
    for (int trial = 0; trial < 6; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_below(2));
        const int h = 3 + static_cast<int>(rng.next_below(4));
        const int w = 3 + static_cast<int>(rng.next_below(4));
        const int cin = 1 + static_cast<int>(rng.next_below(4));
        const int k = 1 + static_cast<int>(rng.next_below(4));
        Tensor in = Tensor::gaussian({n, h, w, cin}, 1.0f, rng);
        ConvParams p = random_conv(cin, k, rng);
        Tensor probe = Tensor::gaussian({n, h, w, k}, 1.0f, rng);

        mcdn::ConvGrads analytic = mcdn::conv2d_mc_backward(in, p, probe);
        const refops::DTensor probe_d = refops::from_f32(probe);
        auto eval = [&]() {
            return refops::dot(probe_d, refops::conv2d(refops::from_f32(in),
                                                       refops::from_f32(p.kernels),
                                                       refops::from_f32(p.bias)));
        };
        const double h_step = 1e-3;

        std::vector<double> fd(p.kernels.size());
        for (std::size_t i = 0; i < p.kernels.size(); ++i)
            fd[i] = refops::central_diff(p.kernels[i], h_step, eval);
        refops::GradCheckStats stats;
        CHECK_MESSAGE(
            refops::grads_match(analytic.kernels.data(), fd.data(), fd.size(), 1e-2, 1e-4, &stats),
            "kernel grad mismatch, max rel ", stats.max_rel);

        fd.resize(p.bias.size());
        for (std::size_t i = 0; i < p.bias.size(); ++i)
            fd[i] = refops::central_diff(p.bias[i], h_step, eval);
        CHECK(refops::grads_match(analytic.bias.data(), fd.data(), fd.size(), 1e-2, 1e-4));

        fd.resize(in.size());
        for (std::size_t i = 0; i < in.size(); ++i)
            fd[i] = refops::central_diff(in[i], h_step, eval);
        CHECK(refops::grads_match(analytic.input.data(), fd.data(), fd.size(), 1e-2, 1e-4));
    }
}

TEST_CASE("conv results are identical for any thread count") {
    Rng rng(17);
    Tensor in = Tensor::gaussian({3, 9, 7, 4}, 1.0f, rng);
    ConvParams p = random_conv(4, 5, rng);
    Tensor go = Tensor::gaussian({3, 9, 7, 5}, 1.0f, rng);

    const int saved = mcdn::num_threads();
    mcdn::set_num_threads(1);
    Tensor out1 = mcdn::conv2d_mc_forward(in, p);
    mcdn::ConvGrads g1 = mcdn::conv2d_mc_backward(in, p, go);
    mcdn::set_num_threads(4);
    Tensor out4 = mcdn::conv2d_mc_forward(in, p);
    mcdn::ConvGrads g4 = mcdn::conv2d_mc_backward(in, p, go);
    mcdn::set_num_threads(saved);

    for (std::size_t i = 0; i < out1.size(); ++i)
        CHECK(out1[i] == out4[i]);
    for (std::size_t i = 0; i < g1.kernels.size(); ++i)
        CHECK(g1.kernels[i] == g4.kernels[i]);
    for (std::size_t i = 0; i < g1.input.size(); ++i)
        CHECK(g1.input[i] == g4.input[i]);
}

TEST_CASE("conv forward keeps finite inputs finite") {
    Rng rng(23);
    Tensor in = Tensor::gaussian({2, 6, 6, 4}, 100.0f, rng);
    ConvParams p = random_conv(4, 4, rng, 2.0f);
    Tensor out = mcdn::conv2d_mc_forward(in, p);
    CHECK(out.all_finite());
}
