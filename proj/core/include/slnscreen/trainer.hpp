#pragma once

#include "slnscreen/checkpoint.hpp"
#include "slnscreen/corpus.hpp"
#include "slnscreen/nn.hpp"
#include "slnscreen/prediction.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace slns::trainer {

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t max_epochs = 50;
    nn::OptimizerSettings optimizer;
    std::size_t patience = 5;  // epochs without validation-loss improvement
    bool flip_horizontal = true;
    bool flip_vertical = true;
    std::uint64_t seed = 1;    // shuffling, flips and dropout
    std::size_t threads = 1;   // does not affect results

    void validate() const;
};

enum class StopReason { early_stop, max_epochs };

std::string_view stop_reason_name(StopReason reason);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    StopReason stop_reason = StopReason::max_epochs;
    std::size_t best_epoch = 0;
    double wall_seconds = 0.0;  // not part of csv() / summary(), which must be reproducible
    std::uint64_t seed = 0;

    const EpochRecord& best() const;
    std::string csv() const;
    std::string summary() const;
};

struct TrainResult {
    Checkpoint checkpoint;
    TrainReport report;
};

// Every patch of the requested splits decoded once and kept as 8-bit RGB.
class ImageCache {
public:
    ImageCache(const corpus::Corpus& corpus, std::span<const corpus::Split> splits);

    std::span<const std::uint8_t> pixels(const std::string& patch_id) const;

private:
    std::map<std::string, std::vector<std::uint8_t>, std::less<>> images_;
};

// Writes one [100, 100, 3] sample into `dst`, optionally mirrored.
void decode_sample(std::span<const std::uint8_t> pixels, bool flip_h, bool flip_v, float* dst);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains from the model config's initial weights. Each epoch reshuffles the
// train split from the seeded stream; at stop the weights from the epoch with
// the lowest validation loss are restored.
TrainResult train(const corpus::Corpus& corpus, const nn::ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// One row per patch of the split, ordered by patch_id.
std::vector<PredictionRow> evaluate_split(const Checkpoint& checkpoint, const corpus::Corpus& corpus,
                                          corpus::Split split, std::size_t threads = 1);
std::vector<PredictionRow> evaluate_model(const nn::Model& model, const corpus::Corpus& corpus,
                                          corpus::Split split, const ImageCache* cache = nullptr);

} // namespace slns::trainer
