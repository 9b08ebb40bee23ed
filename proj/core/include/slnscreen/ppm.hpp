#pragma once

#include "slnscreen/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace slns {

inline constexpr std::size_t kPatchSize = 100;

struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major RGB triples
};

struct PpmHeader {
    std::size_t width = 0;
    std::size_t height = 0;
    unsigned maxval = 0;
    std::size_t data_offset = 0;
};

// Binary P6 with maxval 255. Comments ('#' to end of line) are allowed
// between header tokens.
PpmHeader parse_ppm_header(std::span<const std::uint8_t> bytes);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);

RgbImage read_ppm(const std::filesystem::path& path);
PpmHeader read_ppm_header(const std::filesystem::path& path);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

// Requires a 100x100 image; returns [100, 100, 3] with values / 255.
Tensor patch_tensor(const RgbImage& image);
Tensor load_patch_image(const std::filesystem::path& path);

} // namespace slns
