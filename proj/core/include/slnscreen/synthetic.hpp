#pragma once

#include "slnscreen/corpus.hpp"
#include "slnscreen/ppm.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace slns::synthetic {

// Stain-like RGB tints.
struct Palette {
    std::array<double, 3> background{228.0, 178.0, 204.0};  // eosin pink
    std::array<double, 3> nucleus{72.0, 42.0, 128.0};       // hematoxylin purple
};

// Per-category texture statistics. Blob counts are Poisson; radii are
// normal around the category mean. Both increase with the category code, so
// the signal is ordinal: neighbours overlap, the two clinical groups barely do.
struct CategoryTexture {
    double mean_blobs = 0.0;
    double mean_radius = 0.0;
};

struct TextureModel {
    std::array<CategoryTexture, kCategoryCount> categories{{
        {18.0, 2.0},
        {26.0, 2.3},
        {44.0, 2.9},
        {54.0, 3.2},
    }};
    double radius_sd = 0.35;
    double pixel_noise_sd = 7.0;
    double slide_gain_jitter = 0.06;    // per-slide multiplicative tint, per channel
    double slide_offset_jitter = 8.0;   // per-slide additive tint, per channel
    double slide_density_jitter = 0.08; // per-slide relative change of mean_blobs
    Palette palette;
};

struct Blob {
    double x = 0.0;
    double y = 0.0;
    double radius = 0.0;
};

struct SlideStyle {
    std::array<double, 3> gain{1.0, 1.0, 1.0};
    std::array<double, 3> offset{0.0, 0.0, 0.0};
    double density = 1.0;
};

struct PatchParams {
    std::vector<Blob> blobs;
};

SlideStyle sample_slide_style(const TextureModel& model, std::mt19937_64& rng);
PatchParams sample_patch_params(const TextureModel& model, DiagnosticCategory category,
                                const SlideStyle& style, std::mt19937_64& rng);
RgbImage render_patch(const TextureModel& model, const PatchParams& params, const SlideStyle& style,
                      std::mt19937_64& rng);

struct GeneratorOptions {
    corpus::Layout layout;
    TextureModel texture;
    std::uint64_t seed = 1;
    corpus::SplitOptions split;  // split.seed is replaced by `seed`
};

// Writes <out>/manifest.jsonl and <out>/patches/*.ppm. Each slide draws from
// its own stream seeded by (seed, slide ordinal), so output is byte-identical
// for a given seed. Returns the corpus as written.
corpus::Corpus generate_synthetic_corpus(const std::filesystem::path& out_dir, const GeneratorOptions& options);

} // namespace slns::synthetic
