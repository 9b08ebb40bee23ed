#include "slnscreen/ppm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

namespace slns {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path, std::size_t limit = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path.string());
    if (limit == 0) {
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }
    std::vector<std::uint8_t> bytes(limit);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(limit));
    bytes.resize(static_cast<std::size_t>(in.gcount()));
    return bytes;
}

class HeaderScanner {
public:
    explicit HeaderScanner(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t number(const char* what) {
        skip_space_and_comments();
        std::size_t value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000) throw ValidationError(std::string("PPM ") + what + " is implausibly large");
            ++pos_;
            ++digits;
        }
        if (digits == 0) throw ValidationError(std::string("malformed PPM header: expected ") + what);
        return value;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_start() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
            throw ValidationError("malformed PPM header: no whitespace before pixel data");
        }
        return pos_ + 1;
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 2;
};

} // namespace

PpmHeader parse_ppm_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw ValidationError("malformed PPM header: expected P6 magic");
    }
    HeaderScanner scan(bytes);
    PpmHeader h;
    h.width = scan.number("width");
    h.height = scan.number("height");
    h.maxval = static_cast<unsigned>(scan.number("maxval"));
    if (h.width == 0 || h.height == 0) throw ValidationError("PPM image has a zero dimension");
    if (h.maxval != 255) {
        throw ValidationError("PPM maxval " + std::to_string(h.maxval) + " unsupported (expected 255)");
    }
    h.data_offset = scan.raster_start();
    return h;
}

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
    const PpmHeader h = parse_ppm_header(bytes);
    const std::size_t n = h.width * h.height * 3;
    if (bytes.size() - h.data_offset < n) {
        throw ValidationError("PPM pixel data truncated: need " + std::to_string(n) + " bytes, have " +
                              std::to_string(bytes.size() - h.data_offset));
    }
    RgbImage img{h.width, h.height, {}};
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                      bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset + n));
    return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
    if (image.pixels.size() != image.width * image.height * 3) {
        throw ValidationError("RGB image buffer does not match its dimensions");
    }
    const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

RgbImage read_ppm(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_bytes(path);
    try {
        return decode_ppm(bytes);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

PpmHeader read_ppm_header(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_bytes(path, 512);
    try {
        return parse_ppm_header(bytes);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = encode_ppm(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open image for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing image: " + path.string());
}

Tensor patch_tensor(const RgbImage& image) {
    if (image.width != kPatchSize || image.height != kPatchSize) {
        throw ValidationError("patch image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                              ", expected " + std::to_string(kPatchSize) + "x" + std::to_string(kPatchSize));
    }
    Tensor t(Shape{kPatchSize, kPatchSize, 3});
    for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = static_cast<float>(image.pixels[i]) / 255.0f;
    return t;
}

Tensor load_patch_image(const std::filesystem::path& path) {
    const RgbImage img = read_ppm(path);
    try {
        return patch_tensor(img);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

} // namespace slns
