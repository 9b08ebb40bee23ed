#include "slnscreen/nn.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>
#include <type_traits>

namespace slns::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::size_t kNoParams = static_cast<std::size_t>(-1);

// Gradients of this many consecutive samples are summed together before the
// partial sums are reduced in slice order. Fixed so the float summation order
// never depends on the thread count.
constexpr std::size_t kSliceSize = 8;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string layer_label(std::size_t index, const LayerSpec& layer) {
    return "layer " + std::to_string(index + 1) + " (" + std::string(kind_name(kind_of(layer))) + ")";
}

template <typename F>
void run_parallel(std::size_t tasks, std::size_t threads, F&& f) {
    threads = std::min(threads, tasks);
    if (threads <= 1) {
        for (std::size_t i = 0; i < tasks; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = next++; i < tasks; i = next++) f(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::uint64_t mask_seed(std::uint64_t seed, std::size_t sample, std::size_t layer) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(sample), static_cast<std::uint32_t>(layer)};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

} // namespace

LayerKind kind_of(const LayerSpec& layer) {
    return std::visit(overloaded{[](const ConvLayer&) { return LayerKind::conv; },
                                 [](const MaxPoolLayer&) { return LayerKind::maxpool; },
                                 [](const ReluLayer&) { return LayerKind::relu; },
                                 [](const FlattenLayer&) { return LayerKind::flatten; },
                                 [](const DenseLayer&) { return LayerKind::dense; },
                                 [](const DropoutLayer&) { return LayerKind::dropout; },
                                 [](const SoftmaxLayer&) { return LayerKind::softmax; }},
                      layer);
}

std::string_view kind_name(LayerKind kind) {
    switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
    case LayerKind::softmax: return "softmax";
    }
    return "?";
}

ModelConfig ModelConfig::default_config(std::size_t classes, std::uint64_t seed) {
    ModelConfig c;
    c.classes = classes;
    c.seed = seed;
    std::size_t in = 3;
    for (std::size_t width : {16, 32, 64, 128}) {
        c.layers.emplace_back(ConvLayer{ConvSpec{3, 3, in, width, 1, Padding::same}, true});
        c.layers.emplace_back(MaxPoolLayer{2, 2});
        in = width;
    }
    c.layers.emplace_back(FlattenLayer{});
    c.layers.emplace_back(DenseLayer{256});
    c.layers.emplace_back(ReluLayer{});
    c.layers.emplace_back(DropoutLayer{0.5});
    c.layers.emplace_back(DenseLayer{classes});
    c.layers.emplace_back(SoftmaxLayer{});
    return c;
}

ModelConfig ModelConfig::reduced_config(std::uint64_t seed) {
    ModelConfig c;
    c.input_shape = {12, 12, 3};
    c.seed = seed;
    c.layers = {ConvLayer{ConvSpec{3, 3, 3, 4, 1, Padding::same}, true},
                MaxPoolLayer{2, 2},
                ConvLayer{ConvSpec{3, 3, 4, 6, 1, Padding::same}, false},
                ReluLayer{},
                MaxPoolLayer{2, 2},
                FlattenLayer{},
                DenseLayer{8},
                ReluLayer{},
                DropoutLayer{0.25},
                DenseLayer{kCategoryCount},
                SoftmaxLayer{}};
    return c;
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "slnscreen-model 1\n";
    os << "input " << input_shape.at(0) << ' ' << input_shape.at(1) << ' ' << input_shape.at(2) << '\n';
    os << "classes " << classes << '\n';
    os << "seed " << seed << '\n';
    for (const LayerSpec& layer : layers) {
        std::visit(overloaded{
                       [&](const ConvLayer& l) {
                           os << "conv kernel=" << l.spec.kernel_height << 'x' << l.spec.kernel_width
                              << " in=" << l.spec.in_channels << " out=" << l.spec.out_channels
                              << " stride=" << l.spec.stride
                              << " padding=" << (l.spec.padding == Padding::same ? "same" : "valid")
                              << " activation=" << (l.fused_relu ? "relu" : "none") << '\n';
                       },
                       [&](const MaxPoolLayer& l) {
                           os << "maxpool window=" << l.window << " stride=" << l.stride << '\n';
                       },
                       [&](const ReluLayer&) { os << "relu\n"; },
                       [&](const FlattenLayer&) { os << "flatten\n"; },
                       [&](const DenseLayer& l) { os << "dense units=" << l.units << '\n'; },
                       [&](const DropoutLayer& l) { os << "dropout rate=" << format_double(l.rate) << '\n'; },
                       [&](const SoftmaxLayer&) { os << "softmax\n"; }},
                   layer);
    }
    return os.str();
}

namespace {

struct KeyValues {
    std::vector<std::pair<std::string, std::string>> items;

    const std::string& get(const std::string& key, std::size_t line) const {
        for (const auto& [k, v] : items) {
            if (k == key) return v;
        }
        throw ValidationError("model config line " + std::to_string(line) + ": missing '" + key + "='");
    }
};

std::size_t parse_size(const std::string& s, std::size_t line) {
    std::size_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ValidationError("model config line " + std::to_string(line) + ": '" + s +
                              "' is not a non-negative integer");
    }
    return v;
}

double parse_double(const std::string& s, std::size_t line) {
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ValidationError("model config line " + std::to_string(line) + ": '" + s + "' is not a number");
    }
    return v;
}

} // namespace

ModelConfig ModelConfig::from_text(std::string_view text) {
    ModelConfig c;
    c.layers.clear();
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string head;
        if (!(ls >> head) || head.front() == '#') continue;
        std::vector<std::string> words;
        for (std::string w; ls >> w;) words.push_back(w);
        KeyValues kv;
        for (const auto& w : words) {
            const auto eq = w.find('=');
            if (eq != std::string::npos) kv.items.emplace_back(w.substr(0, eq), w.substr(eq + 1));
        }
        const auto expect_words = [&](std::size_t n) {
            if (words.size() != n) {
                throw ValidationError("model config line " + std::to_string(line_no) + ": '" + head +
                                      "' expects " + std::to_string(n) + " values");
            }
        };
        if (head == "slnscreen-model") {
            expect_words(1);
            if (words[0] != "1") {
                throw ValidationError("model config version " + words[0] + " is not supported");
            }
            header = true;
        } else if (head == "input") {
            expect_words(3);
            c.input_shape = {parse_size(words[0], line_no), parse_size(words[1], line_no),
                             parse_size(words[2], line_no)};
        } else if (head == "classes") {
            expect_words(1);
            c.classes = parse_size(words[0], line_no);
        } else if (head == "seed") {
            expect_words(1);
            std::uint64_t v = 0;
            const auto res = std::from_chars(words[0].data(), words[0].data() + words[0].size(), v);
            if (res.ec != std::errc{}) throw ValidationError("model config seed '" + words[0] + "' is invalid");
            c.seed = v;
        } else if (head == "conv") {
            ConvLayer l;
            const std::string& k = kv.get("kernel", line_no);
            const auto x = k.find('x');
            if (x == std::string::npos) {
                throw ValidationError("model config line " + std::to_string(line_no) + ": kernel must be HxW");
            }
            l.spec.kernel_height = parse_size(k.substr(0, x), line_no);
            l.spec.kernel_width = parse_size(k.substr(x + 1), line_no);
            l.spec.in_channels = parse_size(kv.get("in", line_no), line_no);
            l.spec.out_channels = parse_size(kv.get("out", line_no), line_no);
            l.spec.stride = parse_size(kv.get("stride", line_no), line_no);
            const std::string& pad = kv.get("padding", line_no);
            if (pad != "same" && pad != "valid") {
                throw ValidationError("model config line " + std::to_string(line_no) + ": unknown padding '" + pad + "'");
            }
            l.spec.padding = pad == "same" ? Padding::same : Padding::valid;
            const std::string& act = kv.get("activation", line_no);
            if (act != "relu" && act != "none") {
                throw ValidationError("model config line " + std::to_string(line_no) + ": unknown activation '" + act + "'");
            }
            l.fused_relu = act == "relu";
            c.layers.emplace_back(l);
        } else if (head == "maxpool") {
            c.layers.emplace_back(MaxPoolLayer{parse_size(kv.get("window", line_no), line_no),
                                               parse_size(kv.get("stride", line_no), line_no)});
        } else if (head == "relu") {
            c.layers.emplace_back(ReluLayer{});
        } else if (head == "flatten") {
            c.layers.emplace_back(FlattenLayer{});
        } else if (head == "dense") {
            c.layers.emplace_back(DenseLayer{parse_size(kv.get("units", line_no), line_no)});
        } else if (head == "dropout") {
            c.layers.emplace_back(DropoutLayer{parse_double(kv.get("rate", line_no), line_no)});
        } else if (head == "softmax") {
            c.layers.emplace_back(SoftmaxLayer{});
        } else {
            throw ValidationError("model config line " + std::to_string(line_no) + ": unknown entry '" + head + "'");
        }
    }
    if (!header) throw ValidationError("model config is missing the 'slnscreen-model 1' header");
    return c;
}

std::vector<Shape> shape_chain(const ModelConfig& config) {
    if (config.input_shape.size() != 3) {
        throw ShapeError("model input shape " + format_shape(config.input_shape) + " must be HxWxC");
    }
    BasicTensor<float>::checked_size(config.input_shape);
    if (config.classes < 1) throw ShapeError("model class count must be >= 1");
    if (config.layers.empty()) throw ShapeError("model has no layers");

    std::vector<Shape> shapes;
    Shape cur = config.input_shape;
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const LayerSpec& layer = config.layers[i];
        const auto reject = [&](const std::string& why) {
            throw ShapeError(layer_label(i, layer) + " cannot accept input " + format_shape(cur) + ": " + why);
        };
        std::visit(overloaded{
                       [&](const ConvLayer& l) {
                           if (cur.size() != 3) reject("conv needs an HxWxC input");
                           if (cur[2] != l.spec.in_channels) {
                               reject("expects " + std::to_string(l.spec.in_channels) + " input channels");
                           }
                           try {
                               const ConvGeometry g = conv_geometry(l.spec, cur[0], cur[1]);
                               cur = {g.out_height, g.out_width, l.spec.out_channels};
                           } catch (const ShapeError& e) {
                               reject(e.what());
                           }
                       },
                       [&](const MaxPoolLayer& l) {
                           if (cur.size() != 3) reject("maxpool needs an HxWxC input");
                           if (l.window < 1 || l.stride < 1) reject("window and stride must be >= 1");
                           if (l.window > cur[0] || l.window > cur[1]) reject("window larger than input");
                           cur = {(cur[0] - l.window) / l.stride + 1, (cur[1] - l.window) / l.stride + 1, cur[2]};
                       },
                       [&](const ReluLayer&) {},
                       [&](const FlattenLayer&) {
                           std::size_t n = 1;
                           for (std::size_t e : cur) n *= e;
                           cur = {n};
                       },
                       [&](const DenseLayer& l) {
                           if (cur.size() != 1) reject("dense needs a flat input; insert a flatten layer");
                           if (l.units < 1) reject("dense width must be >= 1");
                           cur = {l.units};
                       },
                       [&](const DropoutLayer& l) {
                           if (!(l.rate >= 0.0 && l.rate < 1.0)) reject("dropout rate must lie in [0, 1)");
                       },
                       [&](const SoftmaxLayer&) {
                           if (cur.size() != 1) reject("softmax needs a flat input");
                           if (i + 1 != config.layers.size()) reject("softmax must be the final layer");
                       }},
                   layer);
        shapes.push_back(cur);
    }
    if (kind_of(config.layers.back()) != LayerKind::softmax) {
        throw ShapeError(layer_label(config.layers.size() - 1, config.layers.back()) +
                         " must be softmax so the model emits class probabilities");
    }
    if (cur != Shape{config.classes}) {
        throw ShapeError("final layer emits " + format_shape(cur) + " but the model has " +
                         std::to_string(config.classes) + " classes");
    }
    return shapes;
}

template <typename T>
struct BasicModel<T>::Trace {
    std::vector<BasicTensor<T>> activations;  // activations[i] is the input of layer i
    std::vector<std::vector<std::size_t>> argmax;
    std::vector<BasicTensor<T>> masks;
};

constexpr double kHeadGain = 0.1;

template <typename T>
BasicModel<T>::BasicModel(ModelConfig config) : config_(std::move(config)) {
    shapes_ = shape_chain(config_);
    std::mt19937_64 rng(config_.seed);
    param_offset_.assign(config_.layers.size(), kNoParams);
    const auto he_uniform = [&](Shape shape, std::size_t fan_in, double gain) {
        BasicTensor<T> w(std::move(shape));
        const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (T& v : w.values()) v = static_cast<T>(dist(rng));
        return w;
    };
    Shape in = config_.input_shape;
    for (std::size_t i = 0; i < config_.layers.size(); ++i) {
        const LayerSpec& layer = config_.layers[i];
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            const ConvSpec& s = conv->spec;
            param_offset_[i] = params_.size();
            params_.push_back(he_uniform({s.kernel_height, s.kernel_width, s.in_channels, s.out_channels},
                                         s.kernel_height * s.kernel_width * s.in_channels, 1.0));
            params_.emplace_back(Shape{s.out_channels});
        } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            param_offset_[i] = params_.size();
            // The projection feeding softmax starts small so untrained outputs
            // sit near uniform instead of inheriting the activation scale.
            const bool head = i + 2 == config_.layers.size() &&
                              std::holds_alternative<SoftmaxLayer>(config_.layers.back());
            params_.push_back(he_uniform({in.at(0), d->units}, in.at(0), head ? kHeadGain : 1.0));
            params_.emplace_back(Shape{d->units});
        }
        in = shapes_[i];
    }
}

template <typename T>
std::size_t BasicModel<T>::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

template <typename T>
void BasicModel<T>::run_forward(const BasicTensor<T>& sample, Mode mode, std::uint64_t dropout_seed,
                                std::size_t sample_index, Trace& trace) const {
    if (sample.shape() != config_.input_shape) {
        throw ShapeError("model input " + format_shape(sample.shape()) + " does not match configured " +
                         format_shape(config_.input_shape));
    }
    const std::size_t n = config_.layers.size();
    trace.activations.assign(1, sample);
    trace.activations.reserve(n + 1);
    trace.argmax.assign(n, {});
    trace.masks.assign(n, BasicTensor<T>());
    for (std::size_t i = 0; i < n; ++i) {
        const BasicTensor<T>& x = trace.activations.back();
        const std::size_t p = param_offset_[i];
        BasicTensor<T> y = std::visit(
            overloaded{[&](const ConvLayer& l) {
                           BasicTensor<T> out = conv2d(x, l.spec, params_[p], params_[p + 1]);
                           return l.fused_relu ? relu(out) : out;
                       },
                       [&](const MaxPoolLayer& l) {
                           PoolResult<T> r = maxpool2d(x, l.window, l.stride);
                           trace.argmax[i] = std::move(r.argmax);
                           return std::move(r.output);
                       },
                       [&](const ReluLayer&) { return relu(x); },
                       [&](const FlattenLayer&) { return x.reshaped({x.size()}); },
                       [&](const DenseLayer&) { return dense(x, params_[p], params_[p + 1]); },
                       [&](const DropoutLayer& l) {
                           if (mode == Mode::infer || l.rate == 0.0) return x;
                           std::mt19937_64 rng(mask_seed(dropout_seed, sample_index, i));
                           std::bernoulli_distribution keep(1.0 - l.rate);
                           const T scale = static_cast<T>(1.0 / (1.0 - l.rate));
                           BasicTensor<T> mask(x.shape());
                           for (T& m : mask.values()) m = keep(rng) ? scale : T{};
                           BasicTensor<T> out = x;
                           for (std::size_t k = 0; k < out.size(); ++k) out[k] *= mask[k];
                           trace.masks[i] = std::move(mask);
                           return out;
                       },
                       [&](const SoftmaxLayer&) { return softmax(x); }},
            config_.layers[i]);
        trace.activations.push_back(std::move(y));
    }
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward_sample(const BasicTensor<T>& sample, Mode mode,
                                             std::uint64_t dropout_seed, std::size_t sample_index) const {
    Trace trace;
    run_forward(sample, mode, dropout_seed, sample_index, trace);
    return std::move(trace.activations.back());
}

template <typename T>
std::vector<BasicTensor<T>> BasicModel<T>::layer_outputs(const BasicTensor<T>& sample, Mode mode,
                                                         std::uint64_t dropout_seed,
                                                         std::size_t sample_index) const {
    Trace trace;
    run_forward(sample, mode, dropout_seed, sample_index, trace);
    return std::move(trace.activations);
}

namespace {

template <typename T>
BasicTensor<T> sample_of(const BasicTensor<T>& batch, std::size_t b, const Shape& shape) {
    const std::size_t stride = batch.size() / batch.extent(0);
    std::vector<T> data(batch.data() + b * stride, batch.data() + (b + 1) * stride);
    return BasicTensor<T>(shape, std::move(data));
}

template <typename T>
void check_batch(const BasicTensor<T>& batch, const Shape& input) {
    if (batch.rank() != 4 || !std::equal(input.begin(), input.end(), batch.shape().begin() + 1)) {
        throw ShapeError("batch " + format_shape(batch.shape()) + " does not match model input B x " +
                         format_shape(input));
    }
}

} // namespace

template <typename T>
BasicTensor<T> BasicModel<T>::forward(const BasicTensor<T>& batch, Mode mode,
                                      std::uint64_t dropout_seed) const {
    check_batch(batch, config_.input_shape);
    const std::size_t b = batch.extent(0);
    BasicTensor<T> out(Shape{b, config_.classes});
    run_parallel(b, threads_, [&](std::size_t i) {
        const BasicTensor<T> probs =
            forward_sample(sample_of(batch, i, config_.input_shape), mode, dropout_seed, i);
        std::copy_n(probs.data(), config_.classes, out.data() + i * config_.classes);
    });
    return out;
}

template <typename T>
double BasicModel<T>::accumulate_sample_gradient(const BasicTensor<T>& sample, std::size_t target,
                                                 Mode mode, std::uint64_t dropout_seed,
                                                 std::size_t sample_index,
                                                 std::vector<BasicTensor<T>>& sums) const {
    Trace trace;
    run_forward(sample, mode, dropout_seed, sample_index, trace);
    const BasicTensor<T>& probs = trace.activations.back();
    const double loss = static_cast<double>(cross_entropy(probs, target));

    // The trailing softmax is folded into the loss: the gradient at its input
    // is probs - onehot.
    BasicTensor<T> g = softmax_cross_entropy_grad(probs, target);
    for (std::size_t idx = config_.layers.size() - 1; idx-- > 0;) {
        const BasicTensor<T>& x = trace.activations[idx];
        const std::size_t p = param_offset_[idx];
        g = std::visit(
            overloaded{[&](const ConvLayer& l) {
                           BasicTensor<T> up = l.fused_relu ? relu_backward(trace.activations[idx + 1], g) : g;
                           return conv2d_backward_into(x, l.spec, params_[p], up, sums[p], sums[p + 1], idx > 0);
                       },
                       [&](const MaxPoolLayer&) { return maxpool2d_backward(g, trace.argmax[idx], x.shape()); },
                       [&](const ReluLayer&) { return relu_backward(x, g); },
                       [&](const FlattenLayer&) { return g.reshaped(x.shape()); },
                       [&](const DenseLayer&) {
                           return dense_backward_into(x, params_[p], g, sums[p], sums[p + 1]);
                       },
                       [&](const DropoutLayer&) {
                           BasicTensor<T> out = std::move(g);
                           if (mode == Mode::train && trace.masks[idx].shape() == out.shape()) {
                               for (std::size_t k = 0; k < out.size(); ++k) out[k] *= trace.masks[idx][k];
                           }
                           return out;
                       },
                       [&](const SoftmaxLayer&) -> BasicTensor<T> {
                           throw ShapeError("softmax is only supported as the final layer");
                       }},
            config_.layers[idx]);
    }
    return loss;
}

template <typename T>
GradientSet<T> BasicModel<T>::backward(const BasicTensor<T>& batch, std::span<const std::size_t> targets,
                                       Mode mode, std::uint64_t dropout_seed) const {
    check_batch(batch, config_.input_shape);
    const std::size_t b = batch.extent(0);
    if (targets.size() != b) {
        throw ValidationError("backward got " + std::to_string(targets.size()) + " targets for a batch of " +
                              std::to_string(b));
    }
    for (std::size_t t : targets) {
        if (t >= config_.classes) {
            throw ValidationError("target " + std::to_string(t) + " out of range for " +
                                  std::to_string(config_.classes) + " classes");
        }
    }
    const auto zero_like = [&] {
        std::vector<BasicTensor<T>> z;
        z.reserve(params_.size());
        for (const auto& p : params_) z.emplace_back(p.shape());
        return z;
    };
    const std::size_t slices = (b + kSliceSize - 1) / kSliceSize;
    std::vector<std::vector<BasicTensor<T>>> partial(slices);
    std::vector<double> slice_loss(slices, 0.0);
    run_parallel(slices, threads_, [&](std::size_t s) {
        partial[s] = zero_like();
        for (std::size_t i = s * kSliceSize; i < std::min(b, (s + 1) * kSliceSize); ++i) {
            slice_loss[s] += accumulate_sample_gradient(sample_of(batch, i, config_.input_shape), targets[i],
                                                        mode, dropout_seed, i, partial[s]);
        }
    });

    GradientSet<T> out{std::move(partial[0]), slice_loss[0]};
    for (std::size_t s = 1; s < slices; ++s) {
        for (std::size_t k = 0; k < out.gradients.size(); ++k) {
            T* dst = out.gradients[k].data();
            const T* src = partial[s][k].data();
            for (std::size_t j = 0; j < out.gradients[k].size(); ++j) dst[j] += src[j];
        }
        out.loss += slice_loss[s];
    }
    const T inv = static_cast<T>(1.0 / static_cast<double>(b));
    for (auto& g : out.gradients) {
        for (T& v : g.values()) v *= inv;
    }
    out.loss /= static_cast<double>(b);
    return out;
}

DiagnosticCategory argmax_category(std::span<const float> probabilities) {
    if (probabilities.size() != kCategoryCount) {
        throw ShapeError("expected " + std::to_string(kCategoryCount) + " class probabilities, got " +
                         std::to_string(probabilities.size()));
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < probabilities.size(); ++i) {
        if (probabilities[i] > probabilities[best]) best = i;
    }
    return static_cast<DiagnosticCategory>(best);
}

DiagnosticCategory predict(const Model& model, const Tensor& patch) {
    const Tensor probs = model.forward_sample(patch, Mode::infer);
    return argmax_category(probs.values());
}

template <typename T>
void apply_update(BasicModel<T>& model, const std::vector<BasicTensor<T>>& gradients,
                  OptimizerState<T>& state, const OptimizerSettings& settings) {
    auto& params = model.parameters();
    if (gradients.size() != params.size()) {
        throw ShapeError("update got " + std::to_string(gradients.size()) + " gradient tensors for " +
                         std::to_string(params.size()) + " parameters");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (gradients[k].shape() != params[k].shape()) {
            throw ShapeError("gradient " + std::to_string(k) + " " + format_shape(gradients[k].shape()) +
                             " does not match parameter " + format_shape(params[k].shape()));
        }
    }
    ++state.step;
    if (settings.kind == OptimizerKind::sgd) {
        const T lr = static_cast<T>(settings.learning_rate);
        for (std::size_t k = 0; k < params.size(); ++k) {
            T* w = params[k].data();
            const T* g = gradients[k].data();
            for (std::size_t j = 0; j < params[k].size(); ++j) w[j] -= lr * g[j];
        }
        return;
    }
    if (state.first_moment.size() != params.size()) {
        state.first_moment.clear();
        state.second_moment.clear();
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.shape());
            state.second_moment.emplace_back(p.shape());
        }
    }
    const double t = static_cast<double>(state.step);
    const T b1 = static_cast<T>(settings.beta1);
    const T b2 = static_cast<T>(settings.beta2);
    const T c1 = static_cast<T>(1.0 - settings.beta1);
    const T c2 = static_cast<T>(1.0 - settings.beta2);
    const T correction1 = static_cast<T>(1.0 / (1.0 - std::pow(settings.beta1, t)));
    const T correction2 = static_cast<T>(1.0 / (1.0 - std::pow(settings.beta2, t)));
    const T lr = static_cast<T>(settings.learning_rate);
    const T eps = static_cast<T>(settings.epsilon);
    for (std::size_t k = 0; k < params.size(); ++k) {
        T* w = params[k].data();
        T* m = state.first_moment[k].data();
        T* v = state.second_moment[k].data();
        const T* g = gradients[k].data();
        for (std::size_t j = 0; j < params[k].size(); ++j) {
            m[j] = b1 * m[j] + c1 * g[j];
            v[j] = b2 * v[j] + c2 * g[j] * g[j];
            const T m_hat = m[j] * correction1;
            const T v_hat = v[j] * correction2;
            w[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

std::string_view optimizer_name(OptimizerKind kind) {
    return kind == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd") return OptimizerKind::sgd;
    throw ValidationError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

template class BasicModel<float>;
template class BasicModel<double>;
template void apply_update<float>(BasicModel<float>&, const std::vector<BasicTensor<float>>&,
                                  OptimizerState<float>&, const OptimizerSettings&);
template void apply_update<double>(BasicModel<double>&, const std::vector<BasicTensor<double>>&,
                                   OptimizerState<double>&, const OptimizerSettings&);

} // namespace slns::nn
