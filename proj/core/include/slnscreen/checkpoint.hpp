#pragma once

#include "slnscreen/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Binary checkpoint layout (all integers little-endian):
//
//   "SLNS"                      4 bytes magic
//   u32 version                 = 1
//   u32 length, bytes           model config text (UTF-8)
//   u32 length, bytes           training metadata text, key=value lines
//   u32 tensor count
//   per tensor: u32 rank, u32 extents[rank], f32 values[product(extents)]
namespace slns {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMetadata {
    std::uint64_t epochs_run = 0;
    double final_validation_loss = 0.0;
    std::uint64_t seed = 0;

    bool operator==(const TrainingMetadata&) const = default;
};

struct Checkpoint {
    std::string config_text;
    TrainingMetadata metadata;
    std::vector<Tensor> weights;

    nn::ModelConfig config() const { return nn::ModelConfig::from_text(config_text); }
};

class CheckpointError : public ValidationError {
public:
    enum class Kind { not_a_checkpoint, version_mismatch, truncated, malformed, incompatible };

    CheckpointError(Kind kind, const std::string& what) : ValidationError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

Checkpoint make_checkpoint(const nn::Model& model, const TrainingMetadata& metadata);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const nn::Model& model, const TrainingMetadata& metadata,
                     const std::filesystem::path& path);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Rebuilds the model and installs the stored weights. When expected_classes is
// given, a checkpoint with a different class count is rejected.
nn::Model model_from_checkpoint(const Checkpoint& checkpoint,
                                std::optional<std::size_t> expected_classes = std::nullopt);
nn::Model load_checkpoint(const std::filesystem::path& path,
                          std::optional<std::size_t> expected_classes = std::nullopt);

} // namespace slns
