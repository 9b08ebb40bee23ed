#pragma once

#include "slnscreen/tensor.hpp"

#include <cstddef>
#include <vector>

// Forward operations of the CNN and their analytic gradients. Every function
// here is pure; all are instantiated for float (training) and double
// (gradient checking).
namespace slns {

enum class Padding { same, valid };

struct ConvSpec {
    std::size_t kernel_height = 3;
    std::size_t kernel_width = 3;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t stride = 1;
    Padding padding = Padding::same;

    void validate() const;
    bool operator==(const ConvSpec&) const = default;
};

struct ConvGeometry {
    std::size_t out_height = 0;
    std::size_t out_width = 0;
    std::size_t pad_top = 0;
    std::size_t pad_left = 0;
};

// Output extents and leading padding for an HxW input. Same padding splits
// the total pad with the smaller half first, so H' = ceil(H / stride).
ConvGeometry conv_geometry(const ConvSpec& spec, std::size_t height, std::size_t width);

template <typename T>
struct ConvGrads {
    BasicTensor<T> input;   // empty-shaped {1} when not requested
    BasicTensor<T> kernels;
    BasicTensor<T> bias;
};

// input [H,W,Cin], kernels [kh,kw,Cin,Cout], bias [Cout] -> [H',W',Cout].
// Lowered to im2col followed by a single matrix multiply.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvSpec& spec,
                      const BasicTensor<T>& kernels, const BasicTensor<T>& bias);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvSpec& spec,
                             const BasicTensor<T>& kernels, const BasicTensor<T>& grad_output,
                             bool want_input_grad = true);

// Adds the kernel and bias gradients into the given sums and returns the
// input gradient (shape {1} when not requested).
template <typename T>
BasicTensor<T> conv2d_backward_into(const BasicTensor<T>& input, const ConvSpec& spec,
                                    const BasicTensor<T>& kernels, const BasicTensor<T>& grad_output,
                                    BasicTensor<T>& kernel_grad_sum, BasicTensor<T>& bias_grad_sum,
                                    bool want_input_grad);

template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    // Flat input index of the winning cell for every output element.
    std::vector<std::size_t> argmax;
};

// Trailing partial windows are dropped. Ties resolve to the first cell in
// row-major scan order.
template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride);

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_output,
                                  const std::vector<std::size_t>& argmax, const Shape& input_shape);

template <typename T>
struct DenseGrads {
    BasicTensor<T> input;
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

// output[j] = sum_i input[i] * weights[i,j] + bias[j]
template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                     const BasicTensor<T>& bias);

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                             const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> dense_backward_into(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                   const BasicTensor<T>& grad_output, BasicTensor<T>& weight_grad_sum,
                                   BasicTensor<T>& bias_grad_sum);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

inline constexpr double kProbabilityFloor = 1e-12;

template <typename T>
T cross_entropy(const BasicTensor<T>& probs, std::size_t target);

// Gradient of cross_entropy(softmax(z), target) with respect to z.
template <typename T>
BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>& probs, std::size_t target);

namespace detail {

// C[m,n] (+)= A[m,k] * B[k,n], all row-major.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate);

// C[k,n] (+)= A[m,k]^T * B[m,n]
template <typename T>
void gemm_at_b(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);

} // namespace detail

} // namespace slns
