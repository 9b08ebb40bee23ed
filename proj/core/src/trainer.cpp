#include "slnscreen/trainer.hpp"

#include "slnscreen/ppm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

namespace slns::trainer {

using corpus::Split;

namespace {

constexpr std::size_t kSampleValues = kPatchSize * kPatchSize * 3;

std::string g6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void check_input_shape(const nn::ModelConfig& config) {
    if (config.input_shape != Shape{kPatchSize, kPatchSize, 3}) {
        throw ValidationError("model input " + format_shape(config.input_shape) + " does not match patch shape " +
                              format_shape(Shape{kPatchSize, kPatchSize, 3}));
    }
    if (config.classes != kCategoryCount) {
        throw ValidationError("model has " + std::to_string(config.classes) + " classes, the corpus needs " +
                              std::to_string(kCategoryCount));
    }
}

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

Evaluation evaluate_loss(const nn::Model& model, const std::vector<const corpus::PatchRecord*>& patches,
                         const ImageCache& cache, std::size_t batch_size) {
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < patches.size(); begin += batch_size) {
        const std::size_t n = std::min(batch_size, patches.size() - begin);
        Tensor batch(Shape{n, kPatchSize, kPatchSize, 3});
        for (std::size_t i = 0; i < n; ++i) {
            decode_sample(cache.pixels(patches[begin + i]->patch_id), false, false, batch.data() + i * kSampleValues);
        }
        const Tensor probs = model.forward(batch, nn::Mode::infer);
        for (std::size_t i = 0; i < n; ++i) {
            const std::span<const float> row(probs.data() + i * kCategoryCount, kCategoryCount);
            const auto target = static_cast<std::size_t>(code(patches[begin + i]->observed_dx));
            loss += -std::log(std::max(static_cast<double>(row[target]), kProbabilityFloor));
            if (nn::argmax_category(row) == patches[begin + i]->observed_dx) ++correct;
        }
    }
    return {loss / static_cast<double>(patches.size()),
            static_cast<double>(correct) / static_cast<double>(patches.size())};
}

} // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (patience < 1) throw ValidationError("patience must be >= 1");
    if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
    if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate)) {
        throw ValidationError("learning_rate must be a finite non-negative number");
    }
}

std::string_view stop_reason_name(StopReason reason) {
    return reason == StopReason::early_stop ? "early_stop" : "max_epochs";
}

const EpochRecord& TrainReport::best() const {
    if (best_epoch == 0 || best_epoch > epochs.size()) throw ValidationError("training report has no epochs");
    return epochs[best_epoch - 1];
}

std::string TrainReport::csv() const {
    std::string out = "epoch,train_loss,val_loss,val_acc\n";
    for (const EpochRecord& e : epochs) {
        out += std::to_string(e.epoch) + "," + g6(e.train_loss) + "," + g6(e.val_loss) + "," + g6(e.val_accuracy) + "\n";
    }
    return out;
}

std::string TrainReport::summary() const {
    const EpochRecord& b = best();
    std::string out;
    out += "seed: " + std::to_string(seed) + "\n";
    out += "epochs_run: " + std::to_string(epochs.size()) + "\n";
    out += "stop_reason: " + std::string(stop_reason_name(stop_reason)) + "\n";
    out += "best_epoch: " + std::to_string(best_epoch) + "\n";
    out += "best_val_loss: " + g6(b.val_loss) + "\n";
    out += "best_val_acc: " + g6(b.val_accuracy) + "\n";
    out += "final_train_loss: " + g6(epochs.back().train_loss) + "\n";
    return out;
}

ImageCache::ImageCache(const corpus::Corpus& corpus, std::span<const Split> splits) {
    for (Split split : splits) {
        for (const corpus::PatchRecord* p : corpus.patches_in(split)) {
            RgbImage img = read_ppm(corpus.image_path(*p));
            if (img.width != kPatchSize || img.height != kPatchSize) {
                throw ValidationError("patch '" + p->patch_id + "' image is " + std::to_string(img.width) + "x" +
                                      std::to_string(img.height) + ", expected 100x100");
            }
            images_.emplace(p->patch_id, std::move(img.pixels));
        }
    }
}

std::span<const std::uint8_t> ImageCache::pixels(const std::string& patch_id) const {
    const auto it = images_.find(patch_id);
    if (it == images_.end()) throw ValidationError("patch '" + patch_id + "' is not in the image cache");
    return it->second;
}

void decode_sample(std::span<const std::uint8_t> pixels, bool flip_h, bool flip_v, float* dst) {
    constexpr std::size_t n = kPatchSize;
    for (std::size_t y = 0; y < n; ++y) {
        const std::size_t sy = flip_v ? n - 1 - y : y;
        for (std::size_t x = 0; x < n; ++x) {
            const std::size_t sx = flip_h ? n - 1 - x : x;
            const std::uint8_t* src = pixels.data() + (sy * n + sx) * 3;
            float* out = dst + (y * n + x) * 3;
            for (std::size_t c = 0; c < 3; ++c) out[c] = static_cast<float>(src[c]) / 255.0f;
        }
    }
}

TrainResult train(const corpus::Corpus& corpus, const nn::ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    config.validate();
    check_input_shape(model_config);
    const auto train_patches = corpus.patches_in(Split::train);
    const auto val_patches = corpus.patches_in(Split::val);
    if (train_patches.empty()) throw ValidationError("train split is empty");
    if (val_patches.empty()) throw ValidationError("validation split is empty");

    const auto started = std::chrono::steady_clock::now();
    const std::array<Split, 2> splits{Split::train, Split::val};
    const ImageCache cache(corpus, splits);

    nn::Model model(model_config);
    model.set_threads(config.threads);
    nn::OptimizerState<float> state;
    std::mt19937_64 rng(config.seed);

    TrainReport report;
    report.seed = config.seed;
    std::vector<Tensor> best_weights = model.parameters();
    double best_loss = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_patches.size());
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t batch_no = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_no) {
            const std::size_t n = std::min(config.batch_size, order.size() - begin);
            Tensor batch(Shape{n, kPatchSize, kPatchSize, 3});
            std::vector<std::size_t> targets(n);
            for (std::size_t i = 0; i < n; ++i) {
                const corpus::PatchRecord& p = *train_patches[order[begin + i]];
                // Both coin flips are always drawn so the stream does not depend on the flags.
                const bool fh = (rng() & 1u) != 0 && config.flip_horizontal;
                const bool fv = (rng() & 1u) != 0 && config.flip_vertical;
                decode_sample(cache.pixels(p.patch_id), fh, fv, batch.data() + i * kSampleValues);
                targets[i] = static_cast<std::size_t>(code(p.observed_dx));
            }
            const std::uint64_t dropout_seed = rng();
            nn::GradientSet<float> grads = model.backward(batch, targets, nn::Mode::train, dropout_seed);
            if (!std::isfinite(grads.loss)) {
                throw ValidationError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batch_no + 1));
            }
            nn::apply_update(model, grads.gradients, state, config.optimizer);
            loss_sum += grads.loss * static_cast<double>(n);
        }

        const Evaluation val = evaluate_loss(model, val_patches, cache, config.batch_size);
        if (!std::isfinite(val.loss)) {
            throw ValidationError("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
        }
        const EpochRecord record{epoch, loss_sum / static_cast<double>(order.size()), val.loss, val.accuracy};
        report.epochs.push_back(record);
        if (on_epoch) on_epoch(record);

        if (val.loss < best_loss) {
            best_loss = val.loss;
            report.best_epoch = epoch;
            best_weights = model.parameters();
        } else if (epoch - report.best_epoch >= config.patience) {
            report.stop_reason = StopReason::early_stop;
            break;
        }
    }
    model.parameters() = best_weights;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    TrainingMetadata meta{report.epochs.size(), best_loss, config.seed};
    return {make_checkpoint(model, meta), std::move(report)};
}

std::vector<PredictionRow> evaluate_model(const nn::Model& model, const corpus::Corpus& corpus, Split split,
                                          const ImageCache* cache) {
    check_input_shape(model.config());
    const auto patches = corpus.patches_in(split);
    if (patches.empty()) throw ValidationError("split '" + std::string(corpus::split_name(split)) + "' is empty");
    constexpr std::size_t kChunk = 32;
    std::vector<PredictionRow> rows;
    rows.reserve(patches.size());
    for (std::size_t begin = 0; begin < patches.size(); begin += kChunk) {
        const std::size_t n = std::min(kChunk, patches.size() - begin);
        Tensor batch(Shape{n, kPatchSize, kPatchSize, 3});
        for (std::size_t i = 0; i < n; ++i) {
            const corpus::PatchRecord& p = *patches[begin + i];
            float* dst = batch.data() + i * kSampleValues;
            if (cache != nullptr) {
                decode_sample(cache->pixels(p.patch_id), false, false, dst);
            } else {
                const RgbImage img = read_ppm(corpus.image_path(p));
                const Tensor t = patch_tensor(img);
                std::copy(t.data(), t.data() + kSampleValues, dst);
            }
        }
        const Tensor probs = model.forward(batch, nn::Mode::infer);
        for (std::size_t i = 0; i < n; ++i) {
            const corpus::PatchRecord& p = *patches[begin + i];
            const std::span<const float> row(probs.data() + i * kCategoryCount, kCategoryCount);
            PredictionRow out;
            out.patch_id = p.patch_id;
            out.slide_id = p.slide_id;
            out.case_id = corpus.slide(p.slide_id).case_id;
            out.observed_dx = p.observed_dx;
            out.predicted_dx = nn::argmax_category(row);
            for (std::size_t k = 0; k < kCategoryCount; ++k) out.probabilities[k] = row[k];
            rows.push_back(std::move(out));
        }
    }
    return rows;
}

std::vector<PredictionRow> evaluate_split(const Checkpoint& checkpoint, const corpus::Corpus& corpus, Split split,
                                          std::size_t threads) {
    nn::Model model = model_from_checkpoint(checkpoint, kCategoryCount);
    model.set_threads(threads);
    return evaluate_model(model, corpus, split);
}

} // namespace slns::trainer
