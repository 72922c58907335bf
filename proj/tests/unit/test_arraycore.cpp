// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "ixn/conv.hpp"
#include "ixn/gradcheck.hpp"
#include "ixn/optim.hpp"
#include "ixn/resample.hpp"

using namespace ixn;

namespace {

Tensor<double> randn(Rng& rng, Shape s) { return rng.normal_tensor<double>(std::move(s)); }

} // namespace

TEST_CASE("conv2d all-ones 2x2 window sums to 4", "[arraycore][conv]") {
    auto x = Value<double>::constant(Tensor<double>(Shape{1, 1, 2, 2}, 1.0));
    auto w = Value<double>::constant(Tensor<double>(Shape{1, 1, 2, 2}, 1.0));
    auto y = conv2d(x, w, Value<double>{}, 2, 0, 1);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    REQUIRE(y.item() == 4.0);
}

TEST_CASE("conv2d identity 1x1 kernel preserves input", "[arraycore][conv]") {
    Rng rng(7);
    auto x = Value<float>::constant(rng.normal_tensor<float>({2, 3, 5, 4}));
    Tensor<float> wt(Shape{3, 3, 1, 1}, 0.0f);
    for (int64_t c = 0; c < 3; ++c) wt[c * 3 + c] = 1.0f;
    auto b = Value<float>::constant(Tensor<float>(Shape{3}, 0.0f));
    auto out = conv2d(x, Value<float>::constant(wt), b, 1, 0, 1);
    REQUIRE(out.tensor().bit_equal(x.tensor()));
}

TEST_CASE("conv2d with groups=C and 1x1 identity kernels is the identity map",
          "[arraycore][conv]") {
    Rng rng(11);
    const int64_t C = 6;
    auto x = Value<double>::constant(rng.normal_tensor<double>({2, C, 4, 4}));
    auto w = Value<double>::constant(Tensor<double>(Shape{C, 1, 1, 1}, 1.0));
    auto y = conv2d(x, w, Value<double>{}, 1, 0, C);
    REQUIRE(y.tensor().bit_equal(x.tensor()));
}

TEST_CASE("conv2d validates shapes with dimension-naming errors", "[arraycore][conv][errors]") {
    auto x = Value<float>::constant(Tensor<float>(Shape{1, 3, 4, 4}, 1.0f));
    auto w = Value<float>::constant(Tensor<float>(Shape{4, 3, 2, 2}, 1.0f));
    REQUIRE_THROWS_MATCHES(conv2d(x, w, Value<float>{}, 1, 0, 2), ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("channels 3")));
    auto wbig = Value<float>::constant(Tensor<float>(Shape{4, 3, 7, 2}, 1.0f));
    REQUIRE_THROWS_AS(conv2d(x, wbig, Value<float>{}, 1, 0, 1), ShapeError);
    auto wgrp = Value<float>::constant(Tensor<float>(Shape{4, 3, 2, 2}, 1.0f));
    REQUIRE_THROWS_AS(conv2d(x, wgrp, Value<float>{}, 1, 0, 3), ConfigError);
}

TEST_CASE("conv2d gradients match central differences", "[arraycore][conv][gradcheck]") {
    Rng rng(42);
    auto report = gradcheck(
        [](const std::vector<Value<double>>& in) {
            auto y = conv2d(in[0], in[1], in[2], 2, 0, 1);
            return sum_all(mul(y, y));
        },
        {randn(rng, {1, 3, 6, 6}), randn(rng, {4, 3, 2, 2}), randn(rng, {4})});
    REQUIRE(report.passed(1e-4));
}

TEST_CASE("grouped and padded conv2d gradients", "[arraycore][conv][gradcheck]") {
    Rng rng(43);
    auto report = gradcheck(
        [](const std::vector<Value<double>>& in) {
            auto y = conv2d(in[0], in[1], in[2], 2, 1, 4);
            return sum_all(mul(y, y));
        },
        {randn(rng, {2, 4, 6, 6}), randn(rng, {4, 1, 4, 4}), randn(rng, {4})});
    REQUIRE(report.passed(1e-4));
}

TEST_CASE("pointwise_conv requires 1x1 kernels", "[arraycore][conv]") {
    auto x = Value<float>::constant(Tensor<float>(Shape{1, 3, 4, 4}, 1.0f));
    auto w = Value<float>::constant(Tensor<float>(Shape{2, 3, 2, 2}, 1.0f));
    REQUIRE_THROWS_AS(pointwise_conv(x, w, Value<float>{}), ShapeError);
}

TEST_CASE("batchnorm2d zero input with unit affine maps to zero", "[arraycore][bn]") {
    auto x = Value<float>::constant(Tensor<float>(Shape{2, 3, 4, 4}, 0.0f));
    auto gamma = Value<float>::constant(Tensor<float>(Shape{3}, 1.0f));
    auto beta = Value<float>::constant(Tensor<float>(Shape{3}, 0.0f));
    BatchNormState<float> st(3);
    auto y = batchnorm2d(x, gamma, beta, st, BnMode::Train);
    for (auto v : y.data()) REQUIRE(v == 0.0f);
}

TEST_CASE("batchnorm2d train mode normalizes batch statistics", "[arraycore][bn]") {
    Rng rng(5);
    auto x = Value<double>::constant(rng.normal_tensor<double>({4, 3, 8, 8}, 2.5, 1.7));
    auto gamma = Value<double>::constant(Tensor<double>(Shape{3}, 1.0));
    auto beta = Value<double>::constant(Tensor<double>(Shape{3}, 0.0));
    BatchNormState<double> st(3);
    auto y = batchnorm2d(x, gamma, beta, st, BnMode::Train);
    const int64_t plane = 64, N = 4;
    for (int64_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t i = 0; i < plane; ++i) mean += y.tensor().at(n, c, i / 8, i % 8);
        mean /= double(N * plane);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t i = 0; i < plane; ++i) {
                double d = y.tensor().at(n, c, i / 8, i % 8) - mean;
                var += d * d;
            }
        var /= double(N * plane);
        REQUIRE(std::abs(mean) < 1e-5);
        REQUIRE(std::abs(var - 1.0) < 1e-3);
    }
}

TEST_CASE("batchnorm2d rejects non-positive eps", "[arraycore][bn][errors]") {
    auto x = Value<float>::constant(Tensor<float>(Shape{1, 1, 2, 2}, 0.0f));
    auto g = Value<float>::constant(Tensor<float>(Shape{1}, 1.0f));
    auto b = Value<float>::constant(Tensor<float>(Shape{1}, 0.0f));
    BatchNormState<float> st(1);
    REQUIRE_THROWS_AS(batchnorm2d(x, g, b, st, BnMode::Train, 0.1, 0.0), ConfigError);
    REQUIRE_THROWS_AS(batchnorm2d(x, g, b, st, BnMode::Train, 0.1, -1e-5), ConfigError);
}

TEST_CASE("batchnorm2d gradients match central differences", "[arraycore][bn][gradcheck]") {
    Rng rng(44);
    BatchNormState<double> st(3);
    auto report = gradcheck(
        [&st](const std::vector<Value<double>>& in) {
            BatchNormState<double> local = st; // keep the closure pure across evals
            auto y = batchnorm2d(in[0], in[1], in[2], local, BnMode::Train);
            return sum_all(mul(y, y));
        },
        {randn(rng, {2, 3, 4, 4}), randn(rng, {3}), randn(rng, {3})});
    REQUIRE(report.passed(1e-4));

    st.running_mean = rng.normal_tensor<double>({3});
    st.running_var = rng.uniform_tensor<double>({3}, 0.5, 2.0);
    auto eval_report = gradcheck(
        [&st](const std::vector<Value<double>>& in) {
            BatchNormState<double> local = st;
            auto y = batchnorm2d(in[0], in[1], in[2], local, BnMode::Eval);
            return sum_all(mul(y, y));
        },
        {randn(rng, {2, 3, 4, 4}), randn(rng, {3}), randn(rng, {3})});
    REQUIRE(eval_report.passed(1e-4));
}

TEST_CASE("relu and sigmoid basics", "[arraycore][elementwise]") {
    auto x = Value<double>::constant(Tensor<double>(Shape{3}, {-1.0, 2.0, 0.0}));
    auto r = relu(x);
    REQUIRE(r.tensor()[0] == 0.0);
    REQUIRE(r.tensor()[1] == 2.0);
    auto s = sigmoid(Value<double>::scalar(0.0));
    REQUIRE(s.item() == 0.5);

    Rng rng(45);
    auto rep = gradcheck(
        [](const std::vector<Value<double>>& in) { return sum_all(mul(relu(in[0]), relu(in[0]))); },
        {rng.uniform_tensor<double>({24}, 0.2, 2.0)});
    REQUIRE(rep.passed(1e-4));
    auto rep2 = gradcheck(
        [](const std::vector<Value<double>>& in) {
            return sum_all(mul(sigmoid(in[0]), sigmoid(in[0])));
        },
        {randn(rng, {24})});
    REQUIRE(rep2.passed(1e-4));
}

TEST_CASE("window_softmax basics", "[arraycore][softmax]") {
    SECTION("all-equal logits give uniform 0.25") {
        auto x = Value<double>::constant(Tensor<double>(Shape{1, 1, 4, 4}, 3.7));
        auto y = window_softmax(x, 2);
        for (auto v : y.data()) REQUIRE_THAT(v, Catch::Matchers::WithinAbs(0.25, 1e-12));
    }
    SECTION("hand-evaluated window (0, ln2, 0, 0)") {
        Tensor<double> t(Shape{1, 1, 2, 2}, {0.0, std::log(2.0), 0.0, 0.0});
        auto y = window_softmax(Value<double>::constant(t), 2);
        REQUIRE_THAT(y.tensor()[0], Catch::Matchers::WithinAbs(0.2, 1e-12));
        REQUIRE_THAT(y.tensor()[1], Catch::Matchers::WithinAbs(0.4, 1e-12));
        REQUIRE_THAT(y.tensor()[2], Catch::Matchers::WithinAbs(0.2, 1e-12));
        REQUIRE_THAT(y.tensor()[3], Catch::Matchers::WithinAbs(0.2, 1e-12));
    }
    SECTION("windows sum to one and outputs are nonnegative") {
        Rng rng(9);
        auto x = Value<double>::constant(rng.normal_tensor<double>({2, 3, 6, 8}, 0.0, 4.0));
        auto y = window_softmax(x, 2);
        for (auto v : y.data()) REQUIRE(v >= 0.0);
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t c = 0; c < 3; ++c)
                for (int64_t bh = 0; bh < 6; bh += 2)
                    for (int64_t bw = 0; bw < 8; bw += 2) {
                        double s = y.tensor().at(n, c, bh, bw) + y.tensor().at(n, c, bh, bw + 1) +
                                   y.tensor().at(n, c, bh + 1, bw) +
                                   y.tensor().at(n, c, bh + 1, bw + 1);
                        REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-6));
                    }
    }
    SECTION("indivisible extents are rejected") {
        auto x = Value<double>::constant(Tensor<double>(Shape{1, 1, 3, 4}, 0.0));
        REQUIRE_THROWS_AS(window_softmax(x, 2), ShapeError);
    }
    SECTION("gradcheck") {
        Rng rng(46);
        auto rep = gradcheck(
            [](const std::vector<Value<double>>& in) {
                auto y = window_softmax(in[0], 2);
                return sum_all(mul(y, y));
            },
            {randn(rng, {1, 2, 4, 4})});
        REQUIRE(rep.passed(1e-4));
    }
}

TEST_CASE("avgpool2 and maxpool2 on the window (1,2,3,4)", "[arraycore][pool]") {
    Tensor<double> t(Shape{1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    auto x = Value<double>::constant(t);
    REQUIRE(avgpool2(x).item() == 2.5);
    auto mp = maxpool2_with_indices(x);
    REQUIRE(mp.output.item() == 4.0);
    REQUIRE(mp.indices.tensor()[3] == 1.0);
    REQUIRE(mp.indices.tensor()[0] + mp.indices.tensor()[1] + mp.indices.tensor()[2] == 0.0);
}

TEST_CASE("pooling edge behavior", "[arraycore][pool]") {
    SECTION("constant input: avg equals the constant") {
        auto x = Value<float>::constant(Tensor<float>(Shape{1, 2, 4, 4}, 0.75f));
        auto y = avgpool2(x);
        for (auto v : y.data()) REQUIRE(v == 0.75f);
    }
    SECTION("maxpool one-hot sums to 1 per window, ties go first in row-major order") {
        auto tie = Value<double>::constant(Tensor<double>(Shape{1, 1, 2, 2}, 5.0));
        auto mp = maxpool2_with_indices(tie);
        REQUIRE(mp.indices.tensor()[0] == 1.0);
        REQUIRE(mp.indices.tensor()[1] == 0.0);

        Rng rng(10);
        auto x = Value<double>::constant(rng.normal_tensor<double>({2, 3, 6, 6}));
        auto r = maxpool2_with_indices(x);
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t c = 0; c < 3; ++c)
                for (int64_t bh = 0; bh < 6; bh += 2)
                    for (int64_t bw = 0; bw < 6; bw += 2)
                        REQUIRE(r.indices.tensor().at(n, c, bh, bw) +
                                    r.indices.tensor().at(n, c, bh, bw + 1) +
                                    r.indices.tensor().at(n, c, bh + 1, bw) +
                                    r.indices.tensor().at(n, c, bh + 1, bw + 1) ==
                                1.0);
    }
    SECTION("maxpool routes gradient to the argmax only") {
        Rng rng(47);
        auto rep = gradcheck(
            [](const std::vector<Value<double>>& in) {
                auto r = maxpool2_with_indices(in[0]);
                return sum_all(mul(r.output, r.output));
            },
            {randn(rng, {1, 2, 4, 4})});
        REQUIRE(rep.passed(1e-4));
    }
}

TEST_CASE("upsample_nn2", "[arraycore][upsample]") {
    auto x = Value<double>::constant(Tensor<double>(Shape{1, 1, 1, 1}, 5.0));
    auto y = upsample_nn2(x);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2});
    for (auto v : y.data()) REQUIRE(v == 5.0);

    Rng rng(12);
    auto z = Value<double>::constant(rng.normal_tensor<double>({2, 3, 4, 5}));
    auto round = avgpool2(upsample_nn2(z));
    REQUIRE(round.tensor().bit_equal(z.tensor()));

    auto rep = gradcheck(
        [](const std::vector<Value<double>>& in) {
            auto u = upsample_nn2(in[0]);
            return sum_all(mul(u, u));
        },
        {randn(rng, {1, 2, 3, 3})});
    REQUIRE(rep.passed(1e-4));
}

TEST_CASE("upsample_bilinear2", "[arraycore][upsample]") {
    SECTION("constant input stays constant") {
        auto x = Value<double>::constant(Tensor<double>(Shape{1, 1, 3, 3}, 2.25));
        auto y = upsample_bilinear2(x);
        for (auto v : y.data()) REQUIRE_THAT(v, Catch::Matchers::WithinAbs(2.25, 1e-12));
    }
    SECTION("linear ramp is preserved in the interior (half-pixel centers)") {
        // x[h][w] = w: interior output columns follow w/2 - 0.25 exactly
        Tensor<double> t(Shape{1, 1, 1, 8});
        for (int64_t w = 0; w < 8; ++w) t[w] = double(w);
        auto y = upsample_bilinear2(Value<double>::constant(t));
        for (int64_t ow = 2; ow < 14; ++ow) {
            const double expect = (double(ow) + 0.5) * 0.5 - 0.5;
            REQUIRE_THAT(y.tensor()[ow], Catch::Matchers::WithinAbs(expect, 1e-12));
        }
    }
    SECTION("gradcheck") {
        Rng rng(48);
        auto rep = gradcheck(
            [](const std::vector<Value<double>>& in) {
                auto u = upsample_bilinear2(in[0]);
                return sum_all(mul(u, u));
            },
            {randn(rng, {1, 2, 3, 4})});
        REQUIRE(rep.passed(1e-4));
    }
}

TEST_CASE("broadcast mul matches explicit expansion", "[arraycore][broadcast]") {
    Rng rng(13);
    auto a = rng.normal_tensor<double>({2, 1, 3, 4});
    auto b = rng.normal_tensor<double>({2, 5, 3, 4});
    auto prod = mul(Value<double>::constant(a), Value<double>::constant(b));
    REQUIRE(prod.shape() == Shape{2, 5, 3, 4});
    Tensor<double> expect(Shape{2, 5, 3, 4});
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t c = 0; c < 5; ++c)
            for (int64_t h = 0; h < 3; ++h)
                for (int64_t w = 0; w < 4; ++w)
                    expect.at(n, c, h, w) = a.at(n, 0, h, w) * b.at(n, c, h, w);
    REQUIRE(prod.tensor().bit_equal(expect));

    auto rep = gradcheck(
        [](const std::vector<Value<double>>& in) { return sum_all(mul(mul(in[0], in[1]), in[1])); },
        {rng.normal_tensor<double>({2, 1, 2, 2}), rng.normal_tensor<double>({2, 3, 2, 2})});
    REQUIRE(rep.passed(1e-4));
}

TEST_CASE("concat and interleave backward", "[arraycore][layout][gradcheck]") {
    Rng rng(49);
    auto rep = gradcheck(
        [](const std::vector<Value<double>>& in) {
            auto c = concat(in[0], in[1]);
            return sum_all(mul(c, c));
        },
        {randn(rng, {1, 2, 3, 3}), randn(rng, {1, 4, 3, 3})});
    REQUIRE(rep.passed(1e-4));

    auto rep2 = gradcheck(
        [](const std::vector<Value<double>>& in) {
            auto c = interleave_channels<double>({in[0], in[1], in[2], in[3]});
            auto y = pixel_shuffle(c, 2);
            return sum_all(mul(y, y));
        },
        {randn(rng, {1, 2, 2, 2}), randn(rng, {1, 2, 2, 2}), randn(rng, {1, 2, 2, 2}),
         randn(rng, {1, 2, 2, 2})});
    REQUIRE(rep2.passed(1e-4));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged", "[arraycore][adam]") {
    Tensor<double> p(Shape{3}, {1.0, -2.0, 0.5});
    Tensor<double> g(Shape{3}, 0.0);
    Tensor<double> orig = p;
    AdamState<double> st;
    std::vector<Tensor<double>*> ps{&p};
    std::vector<const Tensor<double>*> gs{&g};
    adam_step<double>(ps, gs, st, {.lr = 0.1});
    REQUIRE(p.bit_equal(orig));
}

TEST_CASE("adam: bias-corrected first step moves by -lr", "[arraycore][adam]") {
    Tensor<double> p(Shape{1}, {0.0});
    Tensor<double> g(Shape{1}, {1.0});
    AdamState<double> st;
    std::vector<Tensor<double>*> ps{&p};
    std::vector<const Tensor<double>*> gs{&g};
    adam_step<double>(ps, gs, st, {.lr = 0.1});
    REQUIRE_THAT(p[0], Catch::Matchers::WithinAbs(-0.1, 1e-6));
}

TEST_CASE("adam converges on a 1-d quadratic", "[arraycore][adam]") {
    // minimize (x - 2.5)^2 from x = -1
    Tensor<double> p(Shape{1}, {-1.0});
    AdamState<double> st;
    for (int step = 0; step < 500; ++step) {
        Tensor<double> g(Shape{1}, {2.0 * (p[0] - 2.5)});
        std::vector<Tensor<double>*> ps{&p};
        std::vector<const Tensor<double>*> gs{&g};
        adam_step<double>(ps, gs, st, {.lr = 0.1});
    }
    REQUIRE(std::abs(p[0] - 2.5) < 1e-3);
}

TEST_CASE("gradcheck harness sanity", "[arraycore][gradcheck]") {
    SECTION("f(x)=x^2 at x=3 has gradient 6") {
        auto rep = gradcheck(
            [](const std::vector<Value<double>>& in) { return mul(in[0], in[0]); },
            {Tensor<double>::scalar(3.0)});
        REQUIRE(rep.passed(1e-6));

        std::vector<Value<double>> leaves{Value<double>::leaf(Tensor<double>::scalar(3.0), true)};
        auto y = mul(leaves[0], leaves[0]);
        backward(y);
        REQUIRE_THAT(leaves[0].grad()[0], Catch::Matchers::WithinAbs(6.0, 1e-12));
    }
    SECTION("a corrupted backward is flagged") {
        auto corrupted_square = [](const Value<double>& x) {
            Tensor<double> out(x.shape());
            for (int64_t i = 0; i < x.numel(); ++i) out[i] = x.tensor()[i] * x.tensor()[i];
            return make_op<double>(std::move(out), {x}, [](Node<double>& self) {
                auto& p = *self.parents[0].node();
                if (!p.requires_grad) return;
                auto& g = p.ensure_grad();
                // wrong by construction: 3x instead of 2x
                for (int64_t i = 0; i < self.data.numel(); ++i)
                    g[i] += self.grad[i] * 3.0 * p.data[i];
            });
        };
        auto rep = gradcheck(
            [&](const std::vector<Value<double>>& in) { return sum_all(corrupted_square(in[0])); },
            {Tensor<double>(Shape{4}, {1.0, -2.0, 0.7, 3.0})});
        REQUIRE_FALSE(rep.passed(1e-4));
    }
}

TEST_CASE("differentiable ops pass gradcheck over 10 seeds", "[arraycore][gradcheck][sweep]") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        auto rep = gradcheck(
            [](const std::vector<Value<double>>& in) {
                auto a = relu(in[0]);
                auto b = sigmoid(in[0]);
                auto c = add(mul(a, in[1]), b);
                auto s = window_softmax(c, 2);
                return sum_all(mul(s, c));
            },
            {randn(rng, {1, 2, 4, 4}), randn(rng, {1, 1, 4, 4})});
        REQUIRE(rep.passed(1e-4));
    }
}

TEST_CASE("identical seeds give bit-identical parameters after 10 adam steps",
          "[arraycore][determinism]") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Tensor<float> w = rng.normal_tensor<float>({4, 3, 2, 2});
        Tensor<float> x = rng.normal_tensor<float>({2, 3, 6, 6});
        AdamState<float> st;
        for (int step = 0; step < 10; ++step) {
            auto wv = Value<float>::leaf(w, true);
            auto y = conv2d(Value<float>::constant(x), wv, Value<float>{}, 2, 0, 1);
            auto loss = sum_all(mul(y, y));
            backward(loss);
            std::vector<Tensor<float>*> ps{&w};
            std::vector<const Tensor<float>*> gs{&wv.grad()};
            adam_step<float>(ps, gs, st, {.lr = 1e-2});
        }
        return w;
    };
    auto a = run(123), b = run(123);
    REQUIRE(a.bit_equal(b));
}
