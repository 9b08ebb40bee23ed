#pragma once

#include "slnscreen/ops.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace slns {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_input = 0;  // which input tensor
    std::size_t worst_index = 0;  // flat coordinate inside it
    std::size_t coordinates = 0;  // total coordinates compared
    std::string failure;          // non-empty when a gradient was not finite

    bool ok(double tolerance) const { return failure.empty() && max_relative_error < tolerance; }
};

using ScalarFunction = std::function<double(std::span<const Tensor64>)>;
using GradientFunction = std::function<std::vector<Tensor64>(std::span<const Tensor64>)>;

inline constexpr double kFiniteDifferenceStep = 1e-4;

// Compares analytic gradients of a scalar function against central
// differences. Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const ScalarFunction& f, const GradientFunction& analytic,
                           std::vector<Tensor64> inputs, double step = kFiniteDifferenceStep);

// Canned checks on random inputs. Each reduces the op output to a scalar via a
// random projection so every output coordinate carries gradient.
GradCheckResult grad_check_dense(std::size_t inputs, std::size_t outputs, std::uint64_t seed);
GradCheckResult grad_check_conv2d(std::size_t height, std::size_t width, const ConvSpec& spec,
                                  std::uint64_t seed);
GradCheckResult grad_check_maxpool2d(std::size_t height, std::size_t width, std::size_t channels,
                                     std::size_t window, std::size_t stride, std::uint64_t seed);
GradCheckResult grad_check_relu(std::size_t n, std::uint64_t seed);
GradCheckResult grad_check_softmax_cross_entropy(std::size_t classes, std::uint64_t seed);

} // namespace slns
