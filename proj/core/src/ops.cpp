#include "slnscreen/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace slns {

std::string format_shape(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
    return std::all_of(t.values().begin(), t.values().end(),
                       [](T v) { return std::isfinite(v); });
}

void ConvSpec::validate() const {
    if (kernel_height < 1 || kernel_width < 1) throw ShapeError("conv kernel extents must be >= 1");
    if (stride < 1) throw ShapeError("conv stride must be >= 1");
    if (in_channels < 1 || out_channels < 1) throw ShapeError("conv channel counts must be >= 1");
}

ConvGeometry conv_geometry(const ConvSpec& spec, std::size_t height, std::size_t width) {
    spec.validate();
    ConvGeometry g;
    if (spec.padding == Padding::same) {
        g.out_height = (height + spec.stride - 1) / spec.stride;
        g.out_width = (width + spec.stride - 1) / spec.stride;
        const auto pad_total = [&](std::size_t out, std::size_t in, std::size_t k) -> std::size_t {
            const std::size_t needed = (out - 1) * spec.stride + k;
            return needed > in ? needed - in : 0;
        };
        g.pad_top = pad_total(g.out_height, height, spec.kernel_height) / 2;
        g.pad_left = pad_total(g.out_width, width, spec.kernel_width) / 2;
    } else {
        if (spec.kernel_height > height || spec.kernel_width > width) {
            throw ShapeError("conv kernel " + std::to_string(spec.kernel_height) + "x" +
                             std::to_string(spec.kernel_width) + " is larger than valid-padded input " +
                             std::to_string(height) + "x" + std::to_string(width));
        }
        g.out_height = (height - spec.kernel_height) / spec.stride + 1;
        g.out_width = (width - spec.kernel_width) / spec.stride + 1;
    }
    return g;
}

namespace detail {

template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T{});
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        T* c0 = c + i * n;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        const T* a0 = a + i * k;
        const T* a1 = a0 + k;
        const T* a2 = a1 + k;
        const T* a3 = a2 + k;
        for (std::size_t p = 0; p < k; ++p) {
            const T* bp = b + p * n;
            const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
            for (std::size_t j = 0; j < n; ++j) {
                const T bj = bp[j];
                c0[j] += v0 * bj;
                c1[j] += v1 * bj;
                c2[j] += v2 * bj;
                c3[j] += v3 * bj;
            }
        }
    }
    for (; i < m; ++i) {
        T* ci = c + i * n;
        const T* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T* bp = b + p * n;
            const T v = ai[p];
            for (std::size_t j = 0; j < n; ++j) ci[j] += v * bp[j];
        }
    }
}

template <typename T>
void gemm_at_b(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    if (!accumulate) std::fill(c, c + k * n, T{});
    std::size_t r = 0;
    for (; r + 4 <= m; r += 4) {
        const T* a0 = a + r * k;
        const T* a1 = a0 + k;
        const T* a2 = a1 + k;
        const T* a3 = a2 + k;
        const T* b0 = b + r * n;
        const T* b1 = b0 + n;
        const T* b2 = b1 + n;
        const T* b3 = b2 + n;
        for (std::size_t p = 0; p < k; ++p) {
            T* cp = c + p * n;
            const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
            for (std::size_t j = 0; j < n; ++j) {
                cp[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
            }
        }
    }
    for (; r < m; ++r) {
        const T* ar = a + r * k;
        const T* br = b + r * n;
        for (std::size_t p = 0; p < k; ++p) {
            T* cp = c + p * n;
            const T v = ar[p];
            for (std::size_t j = 0; j < n; ++j) cp[j] += v * br[j];
        }
    }
}

template void gemm<float>(const float*, const float*, float*, std::size_t, std::size_t,
                          std::size_t, bool);
template void gemm<double>(const double*, const double*, double*, std::size_t, std::size_t,
                           std::size_t, bool);
template void gemm_at_b<float>(const float*, const float*, float*, std::size_t, std::size_t,
                               std::size_t, bool);
template void gemm_at_b<double>(const double*, const double*, double*, std::size_t, std::size_t,
                                std::size_t, bool);

} // namespace detail

namespace {

template <typename T>
void check_conv_shapes(const BasicTensor<T>& input, const ConvSpec& spec,
                       const BasicTensor<T>& kernels) {
    spec.validate();
    if (input.rank() != 3 || input.extent(2) != spec.in_channels) {
        throw ShapeError("conv2d input " + format_shape(input.shape()) + " does not match spec with " +
                         std::to_string(spec.in_channels) + " input channels");
    }
    const Shape expected{spec.kernel_height, spec.kernel_width, spec.in_channels, spec.out_channels};
    if (kernels.shape() != expected) {
        throw ShapeError("conv2d kernels " + format_shape(kernels.shape()) +
                         " do not match spec shape " + format_shape(expected));
    }
}

// Rows are output pixels, columns run (ky, kx, c) to match the kernel layout.
template <typename T>
std::vector<T> im2col(const BasicTensor<T>& input, const ConvSpec& spec, const ConvGeometry& g) {
    const std::size_t h = input.extent(0), w = input.extent(1), cin = input.extent(2);
    const std::size_t row_len = spec.kernel_height * spec.kernel_width * cin;
    std::vector<T> cols(g.out_height * g.out_width * row_len, T{});
    const T* src = input.data();
    for (std::size_t oy = 0; oy < g.out_height; ++oy) {
        for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            T* row = cols.data() + (oy * g.out_width + ox) * row_len;
            for (std::size_t ky = 0; ky < spec.kernel_height; ++ky) {
                const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) -
                                         static_cast<std::ptrdiff_t>(g.pad_top);
                if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < spec.kernel_width; ++kx) {
                    const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) -
                                             static_cast<std::ptrdiff_t>(g.pad_left);
                    if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
                    std::copy_n(src + (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * cin,
                                cin, row + (ky * spec.kernel_width + kx) * cin);
                }
            }
        }
    }
    return cols;
}

template <typename T>
void col2im_add(const std::vector<T>& cols, const ConvSpec& spec, const ConvGeometry& g,
                BasicTensor<T>& grad_input) {
    const std::size_t h = grad_input.extent(0), w = grad_input.extent(1), cin = grad_input.extent(2);
    const std::size_t row_len = spec.kernel_height * spec.kernel_width * cin;
    T* dst = grad_input.data();
    for (std::size_t oy = 0; oy < g.out_height; ++oy) {
        for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const T* row = cols.data() + (oy * g.out_width + ox) * row_len;
            for (std::size_t ky = 0; ky < spec.kernel_height; ++ky) {
                const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) -
                                         static_cast<std::ptrdiff_t>(g.pad_top);
                if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < spec.kernel_width; ++kx) {
                    const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) -
                                             static_cast<std::ptrdiff_t>(g.pad_left);
                    if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
                    T* d = dst + (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * cin;
                    const T* s = row + (ky * spec.kernel_width + kx) * cin;
                    for (std::size_t c = 0; c < cin; ++c) d[c] += s[c];
                }
            }
        }
    }
}

} // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvSpec& spec,
                      const BasicTensor<T>& kernels, const BasicTensor<T>& bias) {
    check_conv_shapes(input, spec, kernels);
    if (bias.shape() != Shape{spec.out_channels}) {
        throw ShapeError("conv2d bias " + format_shape(bias.shape()) + " does not match " +
                         format_shape(Shape{spec.out_channels}));
    }
    const ConvGeometry g = conv_geometry(spec, input.extent(0), input.extent(1));
    const std::vector<T> cols = im2col(input, spec, g);
    const std::size_t pixels = g.out_height * g.out_width;
    const std::size_t row_len = spec.kernel_height * spec.kernel_width * spec.in_channels;
    const std::size_t cout = spec.out_channels;

    BasicTensor<T> out(Shape{g.out_height, g.out_width, cout});
    T* o = out.data();
    for (std::size_t p = 0; p < pixels; ++p) std::copy_n(bias.data(), cout, o + p * cout);
    detail::gemm(cols.data(), kernels.data(), o, pixels, row_len, cout, true);
    return out;
}

template <typename T>
BasicTensor<T> conv2d_backward_into(const BasicTensor<T>& input, const ConvSpec& spec,
                                    const BasicTensor<T>& kernels, const BasicTensor<T>& grad_output,
                                    BasicTensor<T>& kernel_grad_sum, BasicTensor<T>& bias_grad_sum,
                                    bool want_input_grad) {
    check_conv_shapes(input, spec, kernels);
    const ConvGeometry g = conv_geometry(spec, input.extent(0), input.extent(1));
    const Shape out_shape{g.out_height, g.out_width, spec.out_channels};
    if (grad_output.shape() != out_shape) {
        throw ShapeError("conv2d upstream gradient " + format_shape(grad_output.shape()) +
                         " does not match output shape " + format_shape(out_shape));
    }
    if (kernel_grad_sum.shape() != kernels.shape() || bias_grad_sum.shape() != Shape{spec.out_channels}) {
        throw ShapeError("conv2d gradient accumulators " + format_shape(kernel_grad_sum.shape()) + ", " +
                         format_shape(bias_grad_sum.shape()) + " do not match the layer");
    }
    const std::size_t pixels = g.out_height * g.out_width;
    const std::size_t row_len = spec.kernel_height * spec.kernel_width * spec.in_channels;
    const std::size_t cout = spec.out_channels;

    const T* go = grad_output.data();
    T* gb = bias_grad_sum.data();
    for (std::size_t p = 0; p < pixels; ++p) {
        for (std::size_t c = 0; c < cout; ++c) gb[c] += go[p * cout + c];
    }

    const std::vector<T> cols = im2col(input, spec, g);
    detail::gemm_at_b(cols.data(), go, kernel_grad_sum.data(), pixels, row_len, cout, true);

    if (!want_input_grad) return BasicTensor<T>();
    // grad_cols = G * K^T; K^T is materialized so the product streams rows.
    std::vector<T> kt(cout * row_len);
    const T* k = kernels.data();
    for (std::size_t r = 0; r < row_len; ++r) {
        for (std::size_t c = 0; c < cout; ++c) kt[c * row_len + r] = k[r * cout + c];
    }
    std::vector<T> grad_cols(pixels * row_len);
    detail::gemm(go, kt.data(), grad_cols.data(), pixels, cout, row_len, false);
    BasicTensor<T> grad_input(input.shape());
    col2im_add(grad_cols, spec, g, grad_input);
    return grad_input;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvSpec& spec,
                             const BasicTensor<T>& kernels, const BasicTensor<T>& grad_output,
                             bool want_input_grad) {
    ConvGrads<T> grads{BasicTensor<T>(), BasicTensor<T>(kernels.shape()),
                       BasicTensor<T>(Shape{spec.out_channels})};
    grads.input = conv2d_backward_into(input, spec, kernels, grad_output, grads.kernels, grads.bias,
                                       want_input_grad);
    return grads;
}

template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride) {
    if (window < 1 || stride < 1) throw ShapeError("maxpool window and stride must be >= 1");
    if (input.rank() != 3) {
        throw ShapeError("maxpool2d expects an HWC tensor, got " + format_shape(input.shape()));
    }
    const std::size_t h = input.extent(0), w = input.extent(1), c = input.extent(2);
    if (window > h || window > w) {
        throw ShapeError("maxpool window " + std::to_string(window) + " exceeds input " +
                         format_shape(input.shape()));
    }
    const std::size_t oh = (h - window) / stride + 1;
    const std::size_t ow = (w - window) / stride + 1;
    PoolResult<T> result{BasicTensor<T>(Shape{oh, ow, c}), std::vector<std::size_t>(oh * ow * c)};
    const T* src = input.data();
    T* dst = result.output.data();
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                std::size_t best = ((oy * stride) * w + ox * stride) * c + ch;
                T best_value = src[best];
                for (std::size_t dy = 0; dy < window; ++dy) {
                    for (std::size_t dx = 0; dx < window; ++dx) {
                        const std::size_t idx = ((oy * stride + dy) * w + ox * stride + dx) * c + ch;
                        if (src[idx] > best_value) {
                            best_value = src[idx];
                            best = idx;
                        }
                    }
                }
                const std::size_t o = (oy * ow + ox) * c + ch;
                dst[o] = best_value;
                result.argmax[o] = best;
            }
        }
    }
    return result;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_output,
                                  const std::vector<std::size_t>& argmax, const Shape& input_shape) {
    if (argmax.size() != grad_output.size()) {
        throw ShapeError("maxpool2d argmax map has " + std::to_string(argmax.size()) +
                         " entries for upstream gradient " + format_shape(grad_output.shape()));
    }
    BasicTensor<T> grad(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        if (argmax[i] >= grad.size()) throw ShapeError("maxpool2d argmax index out of range");
        grad[argmax[i]] += grad_output[i];
    }
    return grad;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias) {
    if (input.rank() != 1 || weights.rank() != 2 || input.extent(0) != weights.extent(0)) {
        throw ShapeError("dense input " + format_shape(input.shape()) +
                         " is incompatible with weights " + format_shape(weights.shape()));
    }
    const std::size_t n = weights.extent(0), m = weights.extent(1);
    if (bias.shape() != Shape{m}) {
        throw ShapeError("dense bias " + format_shape(bias.shape()) + " does not match weights " +
                         format_shape(weights.shape()));
    }
    BasicTensor<T> out = bias;
    detail::gemm(input.data(), weights.data(), out.data(), 1, n, m, true);
    return out;
}

template <typename T>
BasicTensor<T> dense_backward_into(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                   const BasicTensor<T>& grad_output, BasicTensor<T>& weight_grad_sum,
                                   BasicTensor<T>& bias_grad_sum) {
    if (input.rank() != 1 || weights.rank() != 2 || input.extent(0) != weights.extent(0) ||
        grad_output.shape() != Shape{weights.extent(1)}) {
        throw ShapeError("dense backward shapes input " + format_shape(input.shape()) + ", weights " +
                         format_shape(weights.shape()) + ", upstream " +
                         format_shape(grad_output.shape()) + " are inconsistent");
    }
    if (weight_grad_sum.shape() != weights.shape() || bias_grad_sum.shape() != grad_output.shape()) {
        throw ShapeError("dense gradient accumulators " + format_shape(weight_grad_sum.shape()) + ", " +
                         format_shape(bias_grad_sum.shape()) + " do not match the layer");
    }
    const std::size_t n = weights.extent(0), m = weights.extent(1);
    BasicTensor<T> grad_input(Shape{n});
    const T* x = input.data();
    const T* go = grad_output.data();
    const T* w = weights.data();
    T* gw = weight_grad_sum.data();
    T* gx = grad_input.data();
    T* gb = bias_grad_sum.data();
    for (std::size_t j = 0; j < m; ++j) gb[j] += go[j];
    for (std::size_t i = 0; i < n; ++i) {
        const T xi = x[i];
        T* row = gw + i * m;
        const T* wrow = w + i * m;
        T acc{};
        for (std::size_t j = 0; j < m; ++j) {
            row[j] += xi * go[j];
            acc += wrow[j] * go[j];
        }
        gx[i] = acc;
    }
    return grad_input;
}

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const BasicTensor<T>& grad_output) {
    DenseGrads<T> g{BasicTensor<T>(), BasicTensor<T>(weights.shape()), BasicTensor<T>(grad_output.shape())};
    g.input = dense_backward_into(input, weights, grad_output, g.weights, g.bias);
    return g;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    BasicTensor<T> out = input;
    for (T& v : out.values()) v = v > T{} ? v : T{};
    return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output) {
    if (input.shape() != grad_output.shape()) {
        throw ShapeError("relu backward: input " + format_shape(input.shape()) + " vs upstream " +
                         format_shape(grad_output.shape()));
    }
    BasicTensor<T> g = grad_output;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(input[i] > T{})) g[i] = T{};
    }
    return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
    BasicTensor<T> out = logits;
    const T peak = *std::max_element(out.values().begin(), out.values().end());
    T sum{};
    for (T& v : out.values()) {
        v = std::exp(v - peak);
        sum += v;
    }
    for (T& v : out.values()) v /= sum;
    return out;
}

template <typename T>
T cross_entropy(const BasicTensor<T>& probs, std::size_t target) {
    if (target >= probs.size()) {
        throw ValidationError("cross_entropy target " + std::to_string(target) +
                              " out of range for " + std::to_string(probs.size()) + " classes");
    }
    const T p = std::max(probs[target], static_cast<T>(kProbabilityFloor));
    return -std::log(p);
}

template <typename T>
BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>& probs, std::size_t target) {
    if (target >= probs.size()) {
        throw ValidationError("cross_entropy target " + std::to_string(target) +
                              " out of range for " + std::to_string(probs.size()) + " classes");
    }
    BasicTensor<T> g = probs;
    g[target] -= T{1};
    return g;
}

#define SLNS_INSTANTIATE_OPS(T)                                                                    \
    template bool all_finite<T>(const BasicTensor<T>&);                                            \
    template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const ConvSpec&, const BasicTensor<T>&, \
                                      const BasicTensor<T>&);                                       \
    template ConvGrads<T> conv2d_backward<T>(const BasicTensor<T>&, const ConvSpec&,               \
                                             const BasicTensor<T>&, const BasicTensor<T>&, bool);   \
    template BasicTensor<T> conv2d_backward_into<T>(const BasicTensor<T>&, const ConvSpec&,        \
                                                    const BasicTensor<T>&, const BasicTensor<T>&,   \
                                                    BasicTensor<T>&, BasicTensor<T>&, bool);        \
    template PoolResult<T> maxpool2d<T>(const BasicTensor<T>&, std::size_t, std::size_t);          \
    template BasicTensor<T> maxpool2d_backward<T>(const BasicTensor<T>&,                           \
                                                  const std::vector<std::size_t>&, const Shape&);   \
    template BasicTensor<T> dense<T>(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                     const BasicTensor<T>&);                                        \
    template DenseGrads<T> dense_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                             const BasicTensor<T>&);                                \
    template BasicTensor<T> dense_backward_into<T>(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                                   const BasicTensor<T>&, BasicTensor<T>&,          \
                                                   BasicTensor<T>&);                                \
    template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                        \
    template BasicTensor<T> relu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);        \
    template BasicTensor<T> softmax<T>(const BasicTensor<T>&);                                     \
    template T cross_entropy<T>(const BasicTensor<T>&, std::size_t);                               \
    template BasicTensor<T> softmax_cross_entropy_grad<T>(const BasicTensor<T>&, std::size_t);

SLNS_INSTANTIATE_OPS(float)
SLNS_INSTANTIATE_OPS(double)

#undef SLNS_INSTANTIATE_OPS

} // namespace slns
