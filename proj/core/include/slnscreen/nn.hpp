#pragma once

#include "slnscreen/category.hpp"
#include "slnscreen/ops.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace slns::nn {

struct ConvLayer {
    ConvSpec spec;
    bool fused_relu = false;
    bool operator==(const ConvLayer&) const = default;
};
struct MaxPoolLayer {
    std::size_t window = 2;
    std::size_t stride = 2;
    bool operator==(const MaxPoolLayer&) const = default;
};
struct ReluLayer {
    bool operator==(const ReluLayer&) const = default;
};
struct FlattenLayer {
    bool operator==(const FlattenLayer&) const = default;
};
struct DenseLayer {
    std::size_t units = 1;
    bool operator==(const DenseLayer&) const = default;
};
struct DropoutLayer {
    double rate = 0.5;
    bool operator==(const DropoutLayer&) const = default;
};
struct SoftmaxLayer {
    bool operator==(const SoftmaxLayer&) const = default;
};

// Each alternative carries exactly the parameters its kind needs.
using LayerSpec = std::variant<ConvLayer, MaxPoolLayer, ReluLayer, FlattenLayer, DenseLayer,
                               DropoutLayer, SoftmaxLayer>;

enum class LayerKind { conv, maxpool, relu, flatten, dense, dropout, softmax };

LayerKind kind_of(const LayerSpec& layer);
std::string_view kind_name(LayerKind kind);

struct ModelConfig {
    Shape input_shape{100, 100, 3};
    std::vector<LayerSpec> layers;
    std::size_t classes = kCategoryCount;
    std::uint64_t seed = 1;

    // conv(3x3, relu) + maxpool(2) four times at 16/32/64/128 channels, then
    // flatten, dense 256, relu, dropout 0.5, dense K, softmax: 14 layers.
    static ModelConfig default_config(std::size_t classes = kCategoryCount, std::uint64_t seed = 1);

    // Same layer kinds at a size where whole-model finite differencing is
    // cheap: 12x12x3 input, two conv/pool blocks, small dense head.
    static ModelConfig reduced_config(std::uint64_t seed = 1);

    std::string to_text() const;
    static ModelConfig from_text(std::string_view text);

    bool operator==(const ModelConfig&) const = default;
};

// Output shape of every layer, in order. Throws ShapeError naming the first
// layer whose input shape it cannot accept.
std::vector<Shape> shape_chain(const ModelConfig& config);

enum class Mode { train, infer };

template <typename T>
struct GradientSet {
    std::vector<BasicTensor<T>> gradients;  // parallel to Model::parameters()
    double loss = 0.0;                      // mean cross-entropy over the batch
};

template <typename T>
class BasicModel {
public:
    // Validates the shape chain and initializes weights He-uniform from the
    // config seed; biases start at zero.
    explicit BasicModel(ModelConfig config);

    const ModelConfig& config() const noexcept { return config_; }
    const std::vector<Shape>& shapes() const noexcept { return shapes_; }
    std::size_t layer_count() const noexcept { return config_.layers.size(); }

    std::vector<BasicTensor<T>>& parameters() noexcept { return params_; }
    const std::vector<BasicTensor<T>>& parameters() const noexcept { return params_; }
    std::size_t parameter_count() const noexcept;

    // Samples processed concurrently; results do not depend on this value.
    void set_threads(std::size_t threads) noexcept { threads_ = threads == 0 ? 1 : threads; }

    // [B, H, W, C] -> [B, K] probabilities. Dropout masks in train mode are a
    // pure function of (dropout_seed, sample index, layer index).
    BasicTensor<T> forward(const BasicTensor<T>& batch, Mode mode, std::uint64_t dropout_seed = 0) const;

    // Single sample [H, W, C] -> [K].
    BasicTensor<T> forward_sample(const BasicTensor<T>& sample, Mode mode,
                                  std::uint64_t dropout_seed = 0, std::size_t sample_index = 0) const;

    // Input of every layer followed by the final output (layer_count() + 1
    // tensors). For inspection; forward_sample returns only the last.
    std::vector<BasicTensor<T>> layer_outputs(const BasicTensor<T>& sample, Mode mode,
                                              std::uint64_t dropout_seed = 0,
                                              std::size_t sample_index = 0) const;

    GradientSet<T> backward(const BasicTensor<T>& batch, std::span<const std::size_t> targets,
                            Mode mode = Mode::train, std::uint64_t dropout_seed = 0) const;

    template <typename U>
    BasicModel<U> cast() const {
        BasicModel<U> out(config_);
        for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i] = params_[i].template cast<U>();
        return out;
    }

private:
    struct Trace;
    void run_forward(const BasicTensor<T>& sample, Mode mode, std::uint64_t dropout_seed,
                     std::size_t sample_index, Trace& trace) const;
    double accumulate_sample_gradient(const BasicTensor<T>& sample, std::size_t target, Mode mode,
                                      std::uint64_t dropout_seed, std::size_t sample_index,
                                      std::vector<BasicTensor<T>>& sums) const;

    ModelConfig config_;
    std::vector<Shape> shapes_;
    std::vector<BasicTensor<T>> params_;
    std::vector<std::size_t> param_offset_;  // first parameter index of each layer
    std::size_t threads_ = 1;
};

using Model = BasicModel<float>;
using Model64 = BasicModel<double>;

// Lowest index wins ties.
DiagnosticCategory argmax_category(std::span<const float> probabilities);

DiagnosticCategory predict(const Model& model, const Tensor& patch);

enum class OptimizerKind { adam, sgd };

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct OptimizerState {
    std::uint64_t step = 0;
    std::vector<BasicTensor<T>> first_moment;
    std::vector<BasicTensor<T>> second_moment;
};

template <typename T>
void apply_update(BasicModel<T>& model, const std::vector<BasicTensor<T>>& gradients,
                  OptimizerState<T>& state, const OptimizerSettings& settings);

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

} // namespace slns::nn
