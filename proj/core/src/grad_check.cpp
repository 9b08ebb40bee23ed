#include "slnscreen/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace slns {

GradCheckResult grad_check(const ScalarFunction& f, const GradientFunction& analytic,
                           std::vector<Tensor64> inputs, double step) {
    GradCheckResult result;
    const std::vector<Tensor64> grads = analytic(inputs);
    if (grads.size() != inputs.size()) {
        result.failure = "analytic gradient returned " + std::to_string(grads.size()) +
                         " tensors for " + std::to_string(inputs.size()) + " inputs";
        return result;
    }
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        if (grads[t].shape() != inputs[t].shape()) {
            result.failure = "gradient " + std::to_string(t) + " has shape " +
                             format_shape(grads[t].shape()) + ", input has " +
                             format_shape(inputs[t].shape());
            return result;
        }
        for (std::size_t i = 0; i < inputs[t].size(); ++i) {
            const double a = grads[t][i];
            const double saved = inputs[t][i];
            inputs[t][i] = saved + step;
            const double up = f(inputs);
            inputs[t][i] = saved - step;
            const double down = f(inputs);
            inputs[t][i] = saved;
            const double n = (up - down) / (2.0 * step);
            ++result.coordinates;
            if (!std::isfinite(a) || !std::isfinite(n)) {
                result.failure = "non-finite gradient at input " + std::to_string(t) + " coordinate " +
                                 std::to_string(i) + " (analytic " + std::to_string(a) +
                                 ", numeric " + std::to_string(n) + ")";
                result.worst_input = t;
                result.worst_index = i;
                return result;
            }
            const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
            if (err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_input = t;
                result.worst_index = i;
            }
        }
    }
    return result;
}

namespace {

Tensor64 random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor64 t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

double dot(const Tensor64& a, const Tensor64& b) {
    return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

} // namespace

GradCheckResult grad_check_dense(std::size_t inputs, std::size_t outputs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor64> args{random_tensor({inputs}, rng), random_tensor({inputs, outputs}, rng),
                               random_tensor({outputs}, rng)};
    const Tensor64 proj = random_tensor({outputs}, rng);
    const auto f = [&](std::span<const Tensor64> a) { return dot(dense(a[0], a[1], a[2]), proj); };
    const auto g = [&](std::span<const Tensor64> a) {
        DenseGrads<double> d = dense_backward(a[0], a[1], proj);
        return std::vector<Tensor64>{d.input, d.weights, d.bias};
    };
    return grad_check(f, g, std::move(args));
}

GradCheckResult grad_check_conv2d(std::size_t height, std::size_t width, const ConvSpec& spec,
                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor64> args{
        random_tensor({height, width, spec.in_channels}, rng),
        random_tensor({spec.kernel_height, spec.kernel_width, spec.in_channels, spec.out_channels}, rng),
        random_tensor({spec.out_channels}, rng)};
    const ConvGeometry geo = conv_geometry(spec, height, width);
    const Tensor64 proj = random_tensor({geo.out_height, geo.out_width, spec.out_channels}, rng);
    const auto f = [&](std::span<const Tensor64> a) { return dot(conv2d(a[0], spec, a[1], a[2]), proj); };
    const auto g = [&](std::span<const Tensor64> a) {
        ConvGrads<double> c = conv2d_backward(a[0], spec, a[1], proj);
        return std::vector<Tensor64>{c.input, c.kernels, c.bias};
    };
    return grad_check(f, g, std::move(args));
}

GradCheckResult grad_check_maxpool2d(std::size_t height, std::size_t width, std::size_t channels,
                                     std::size_t window, std::size_t stride, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    // Distinct values spaced 0.1 apart keep every window's winner stable under
    // the finite-difference step.
    Tensor64 input({height, width, channels});
    std::vector<std::size_t> order(input.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<double> jitter(0.0, 0.01);
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = 0.1 * static_cast<double>(order[i]) + jitter(rng);

    const PoolResult<double> probe = maxpool2d(input, window, stride);
    const Tensor64 proj = random_tensor(probe.output.shape(), rng);
    const auto f = [&](std::span<const Tensor64> a) { return dot(maxpool2d(a[0], window, stride).output, proj); };
    const auto g = [&](std::span<const Tensor64> a) {
        const PoolResult<double> r = maxpool2d(a[0], window, stride);
        return std::vector<Tensor64>{maxpool2d_backward(proj, r.argmax, a[0].shape())};
    };
    return grad_check(f, g, {std::move(input)});
}

GradCheckResult grad_check_relu(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor64 input({n});
    // Keep inputs away from the kink at zero.
    for (double& v : input.values()) {
        do {
            v = dist(rng);
        } while (std::abs(v) < 0.05);
    }
    const Tensor64 proj = random_tensor({n}, rng);
    const auto f = [&](std::span<const Tensor64> a) { return dot(relu(a[0]), proj); };
    const auto g = [&](std::span<const Tensor64> a) {
        return std::vector<Tensor64>{relu_backward(a[0], proj)};
    };
    return grad_check(f, g, {std::move(input)});
}

GradCheckResult grad_check_softmax_cross_entropy(std::size_t classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor64 logits = random_tensor({classes}, rng, -2.0, 2.0);
    const std::size_t target = std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng);
    const auto f = [&](std::span<const Tensor64> a) { return cross_entropy(softmax(a[0]), target); };
    const auto g = [&](std::span<const Tensor64> a) {
        return std::vector<Tensor64>{softmax_cross_entropy_grad(softmax(a[0]), target)};
    };
    return grad_check(f, g, {std::move(logits)});
}

} // namespace slns
