#include "checks.hpp"

#include "slnscreen/grad_check.hpp"
#include "slnscreen/ops.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace slns;

TEST_CASE("conv2d: 1x1 unit kernel is the identity") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t h = 1 + rng() % 9, w = 1 + rng() % 9, c = 1 + rng() % 4;
        const Tensor x = oracle::random_tensor<float>({h, w, c}, rng);
        Tensor k(Shape{1, 1, c, c});
        for (std::size_t i = 0; i < c; ++i) k.at(0, 0, i, i) = 1.0f;
        const ConvSpec spec{1, 1, c, c, 1, Padding::same};
        CHECK(conv2d(x, spec, k, Tensor(Shape{c})) == x);
    }
}

TEST_CASE("conv2d: zero kernel yields the bias everywhere") {
    std::mt19937_64 rng(4);
    const Tensor x = oracle::random_tensor<float>({5, 6, 2}, rng);
    const ConvSpec spec{3, 3, 2, 3, 1, Padding::same};
    const Tensor y = conv2d(x, spec, Tensor(Shape{3, 3, 2, 3}), Tensor(Shape{3}, 0.5f));
    CHECK(y.shape() == Shape{5, 6, 3});
    for (float v : y.values()) CHECK(v == 0.5f);
}

TEST_CASE("conv2d: diagonal 2x2 kernel on a 3x3 ramp") {
    const Tensor x(Shape{3, 3, 1}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor k(Shape{2, 2, 1, 1}, std::vector<float>{1, 0, 0, 1});
    const ConvSpec spec{2, 2, 1, 1, 1, Padding::valid};
    const Tensor y = conv2d(x, spec, k, Tensor(Shape{1}));
    const Tensor want = oracle::conv2d(x, spec, k, Tensor(Shape{1}));
    CHECK(want == Tensor(Shape{2, 2, 1}, std::vector<float>{6, 8, 12, 14}));
    CHECK(y == want);
}

TEST_CASE("conv2d: same padding gives ceil(H / stride)") {
    for (std::size_t h = 1; h <= 9; ++h) {
        for (std::size_t s = 1; s <= 3; ++s) {
            const ConvSpec spec{3, 3, 1, 1, s, Padding::same};
            const ConvGeometry g = conv_geometry(spec, h, h);
            CHECK(g.out_height == (h + s - 1) / s);
        }
    }
}

TEST_CASE("conv2d: rejects mismatched shapes naming both") {
    const ConvSpec spec{3, 3, 2, 4, 1, Padding::same};
    const Tensor x(Shape{5, 5, 3});
    try {
        conv2d(x, spec, Tensor(Shape{3, 3, 2, 4}), Tensor(Shape{4}));
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[5x5x3]") != std::string::npos);
    }
    CHECK_THROWS_AS(conv2d(Tensor(Shape{5, 5, 2}), spec, Tensor(Shape{3, 3, 2, 5}), Tensor(Shape{4})), ShapeError);
    CHECK_THROWS_AS(conv2d(Tensor(Shape{5, 5, 2}), spec, Tensor(Shape{3, 3, 2, 4}), Tensor(Shape{3})), ShapeError);
    const ConvSpec valid{4, 4, 1, 1, 1, Padding::valid};
    CHECK_THROWS_AS(conv2d(Tensor(Shape{3, 5, 1}), valid, Tensor(Shape{4, 4, 1, 1}), Tensor(Shape{1})), ValidationError);
    CHECK_THROWS_AS((ConvSpec{0, 3, 1, 1, 1, Padding::same}.validate()), ValidationError);
    CHECK_THROWS_AS((ConvSpec{3, 3, 1, 1, 0, Padding::same}.validate()), ValidationError);
    CHECK_THROWS_AS((ConvSpec{3, 3, 1, 0, 1, Padding::same}.validate()), ValidationError);
}

TEST_CASE("conv2d is linear in its input") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t h = 2 + rng() % 7, w = 2 + rng() % 7, c = 1 + rng() % 3, o = 1 + rng() % 3;
        const ConvSpec spec{3, 3, c, o, 1 + rng() % 2, Padding::same};
        const Tensor64 k = oracle::random_tensor<double>({3, 3, c, o}, rng);
        const Tensor64 zero(Shape{o});
        const Tensor64 x = oracle::random_tensor<double>({h, w, c}, rng);
        const Tensor64 y = oracle::random_tensor<double>({h, w, c}, rng);
        const double a = 1.7, b = -0.6;
        Tensor64 mix(x.shape());
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
        const Tensor64 lhs = conv2d(mix, spec, k, zero);
        const Tensor64 cx = conv2d(x, spec, k, zero);
        const Tensor64 cy = conv2d(y, spec, k, zero);
        for (std::size_t i = 0; i < lhs.size(); ++i) {
            const double rhs = a * cx[i] + b * cy[i];
            CHECK(std::abs(lhs[i] - rhs) <= 1e-5 * std::max(1.0, std::abs(rhs)));
        }
    }
}

TEST_CASE("exhaustive small-shape sweep against nested-loop oracles") {
    const checks::SweepResult r = checks::oracle_sweep();
    CHECK(r.mismatch == "");
    CHECK(r.worst <= 1e-5);
    CHECK(r.conv_cases > 500);
    CHECK(r.pool_cases > 300);
    CHECK(r.dense_cases == 64);
}

TEST_CASE("maxpool2d examples") {
    const Tensor constant(Shape{4, 4, 1}, 2.5f);
    const auto c = maxpool2d(constant, 2, 2);
    for (float v : c.output.values()) CHECK(v == 2.5f);
    CHECK(c.argmax == std::vector<std::size_t>{0, 2, 8, 10});

    std::vector<float> ramp(16);
    std::iota(ramp.begin(), ramp.end(), 1.0f);
    const auto r = maxpool2d(Tensor(Shape{4, 4, 1}, ramp), 2, 2);
    CHECK(r.output == Tensor(Shape{2, 2, 1}, std::vector<float>{6, 8, 14, 16}));

    std::mt19937_64 rng(5);
    const Tensor x = oracle::random_tensor<float>({5, 5, 1}, rng);
    const auto got = maxpool2d(x, 2, 2);
    CHECK(got.output.shape() == Shape{2, 2, 1});
    CHECK(got.output == oracle::maxpool2d(x, 2, 2).first);

    CHECK_THROWS_AS(maxpool2d(Tensor(Shape{2, 5, 1}), 3, 1), ValidationError);
    CHECK_THROWS_AS(maxpool2d(Tensor(Shape{4, 4, 1}), 0, 1), ValidationError);
    CHECK_THROWS_AS(maxpool2d(Tensor(Shape{4, 4, 1}), 2, 0), ValidationError);
}

TEST_CASE("maxpool2d bounds: below global max, above window min") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t h = 2 + rng() % 7, w = 2 + rng() % 7;
        const Tensor x = oracle::random_tensor<float>({h, w, 3}, rng);
        const auto p = maxpool2d(x, 2, 2);
        const float global = *std::max_element(x.values().begin(), x.values().end());
        const std::size_t ow = p.output.extent(1);
        for (std::size_t i = 0; i < p.output.extent(0); ++i)
            for (std::size_t j = 0; j < ow; ++j)
                for (std::size_t c = 0; c < 3; ++c) {
                    const float v = p.output.at(i, j, c);
                    CHECK(v <= global);
                    float lo = x.at(2 * i, 2 * j, c);
                    for (std::size_t u = 0; u < 2; ++u)
                        for (std::size_t q = 0; q < 2; ++q) lo = std::min(lo, x.at(2 * i + u, 2 * j + q, c));
                    CHECK(v >= lo);
                }
    }
}

TEST_CASE("maxpool backward routes gradient only to argmax cells") {
    std::mt19937_64 rng(8);
    const Tensor x = oracle::random_tensor<float>({6, 6, 2}, rng);
    const auto p = maxpool2d(x, 2, 2);
    const Tensor g = oracle::random_tensor<float>(p.output.shape(), rng, 0.5, 1.5);
    const Tensor gx = maxpool2d_backward(g, p.argmax, x.shape());
    std::vector<bool> winner(x.size(), false);
    for (std::size_t i = 0; i < p.argmax.size(); ++i) {
        winner[p.argmax[i]] = true;
        CHECK(gx[p.argmax[i]] == g[i]);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!winner[i]) CHECK(gx[i] == 0.0f);
    }
}

TEST_CASE("dense examples and errors") {
    std::mt19937_64 rng(9);
    const Tensor x = oracle::random_tensor<float>({4}, rng);
    Tensor eye(Shape{4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0f;
    CHECK(dense(x, eye, Tensor(Shape{4})) == x);
    const Tensor b(Shape{3}, std::vector<float>{0.5f, -1.0f, 2.0f});
    CHECK(dense(x, Tensor(Shape{4, 3}), b) == b);
    const Tensor x3 = oracle::random_tensor<float>({3}, rng);
    const Tensor w = oracle::random_tensor<float>({3, 2}, rng);
    const Tensor b2 = oracle::random_tensor<float>({2}, rng);
    CHECK(oracle::max_abs_diff(dense(x3, w, b2), oracle::dense(x3, w, b2)) <= 1e-6);
    CHECK_THROWS_AS(dense(x3, Tensor(Shape{4, 2}), b2), ShapeError);
    CHECK_THROWS_AS(dense(x3, w, Tensor(Shape{3})), ShapeError);
}

TEST_CASE("relu") {
    CHECK(relu(Tensor(Shape{3}, std::vector<float>{-1, 0, 2})) == Tensor(Shape{3}, std::vector<float>{0, 0, 2}));
    CHECK(relu(Tensor(Shape{2, 2}, -3.0f)) == Tensor(Shape{2, 2}, 0.0f));
    const Tensor pos(Shape{4}, std::vector<float>{0.1f, 1, 2, 3});
    CHECK(relu(pos) == pos);
}

TEST_CASE("softmax") {
    const Tensor64 u = softmax(Tensor64(Shape{4}, 1.3));
    for (double v : u.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    const Tensor64 p = softmax(Tensor64(Shape{2}, std::vector<double>{0.0, std::log(3.0)}));
    CHECK(p[0] == doctest::Approx(0.25));
    CHECK(p[1] == doctest::Approx(0.75));

    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = 1 + rng() % 10;
        const Tensor x = oracle::random_tensor<float>({k}, rng, -20, 20);
        const Tensor s = softmax(x);
        Tensor shifted = x;
        for (float& v : shifted.values()) v += 7.0f;
        const Tensor s2 = softmax(shifted);
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(s[i] > 0.0f);
            sum += s[i];
            CHECK(std::abs(s[i] - s2[i]) <= 1e-6);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
    const Tensor huge = softmax(Tensor(Shape{3}, std::vector<float>{1e30f, 0.0f, -1e30f}));
    CHECK(all_finite(huge));
}

TEST_CASE("cross_entropy") {
    const Tensor64 onehot(Shape{4}, std::vector<double>{0, 0, 1, 0});
    CHECK(cross_entropy(onehot, 2) <= 1e-6);
    CHECK(cross_entropy(Tensor64(Shape{4}, 0.25), 1) == doctest::Approx(1.386294).epsilon(1e-6));
    CHECK(std::isfinite(cross_entropy(onehot, 0)));  // clamped at 1e-12
    CHECK(cross_entropy(onehot, 0) == doctest::Approx(-std::log(1e-12)));
    CHECK_THROWS_AS(cross_entropy(onehot, 4), ValidationError);

    const Tensor64 probs = softmax(Tensor64(Shape{4}, std::vector<double>{0.3, -1.0, 2.0, 0.1}));
    const Tensor64 g = softmax_cross_entropy_grad(probs, 1);
    for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(probs[i] - (i == 1 ? 1.0 : 0.0)));
}

TEST_CASE("grad_check: canned examples") {
    CHECK(grad_check_dense(5, 3, 7).max_relative_error < 1e-5);
    CHECK(grad_check_conv2d(6, 6, ConvSpec{3, 3, 2, 3, 1, Padding::same}, 7).max_relative_error < 1e-5);
}

TEST_CASE("grad_check: every differentiable op over 20 seeds") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        for (const auto& [op, r] : checks::layer_grad_checks(seed)) {
            CAPTURE(seed);
            CAPTURE(op);
            CHECK(r.ok(1e-4));
        }
    }
}

TEST_CASE("grad_check reports non-finite gradients with a coordinate") {
    const ScalarFunction f = [](std::span<const Tensor64> in) { return in[0][0] * in[0][1]; };
    const GradientFunction g = [](std::span<const Tensor64> in) {
        Tensor64 out(in[0].shape());
        out[0] = in[0][1];
        out[1] = std::numeric_limits<double>::quiet_NaN();
        return std::vector<Tensor64>{out};
    };
    const GradCheckResult r = grad_check(f, g, {Tensor64(Shape{2}, std::vector<double>{1.0, 2.0})});
    CHECK_FALSE(r.ok(1e-4));
    CHECK(r.failure.find("1") != std::string::npos);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor(Shape{}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{1, 1, 1, 1, 1}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
    const Tensor t(Shape{2, 3}, 1.0f);
    CHECK(t.size() == 6);
    CHECK(t.reshaped(Shape{6}).shape() == Shape{6});
}
