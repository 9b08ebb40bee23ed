#include "slnscreen/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <system_error>

namespace slns::synthetic {

namespace {

std::mt19937_64 stream_for(std::uint64_t seed, std::uint64_t ordinal) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(ordinal), static_cast<std::uint32_t>(ordinal >> 32), 0x5eedu};
    return std::mt19937_64(seq);
}

std::string padded(std::size_t value, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, value);
    return buf;
}

} // namespace

SlideStyle sample_slide_style(const TextureModel& model, std::mt19937_64& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    SlideStyle style;
    for (std::size_t c = 0; c < 3; ++c) {
        style.gain[c] = 1.0 + model.slide_gain_jitter * unit(rng);
        style.offset[c] = model.slide_offset_jitter * unit(rng);
    }
    style.density = std::max(0.5, 1.0 + model.slide_density_jitter * unit(rng));
    return style;
}

PatchParams sample_patch_params(const TextureModel& model, DiagnosticCategory category, const SlideStyle& style,
                                std::mt19937_64& rng) {
    const CategoryTexture& t = model.categories[static_cast<std::size_t>(code(category))];
    std::poisson_distribution<int> count(t.mean_blobs * style.density);
    std::normal_distribution<double> radius(t.mean_radius, model.radius_sd);
    std::uniform_real_distribution<double> pos(0.0, static_cast<double>(kPatchSize));
    PatchParams p;
    const int n = count(rng);
    p.blobs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Blob b;
        b.x = pos(rng);
        b.y = pos(rng);
        b.radius = std::clamp(radius(rng), 0.8, 3.0 * t.mean_radius);
        p.blobs.push_back(b);
    }
    return p;
}

RgbImage render_patch(const TextureModel& model, const PatchParams& params, const SlideStyle& style,
                      std::mt19937_64& rng) {
    constexpr std::size_t n = kPatchSize;
    std::vector<double> density(n * n, 0.0);
    for (const Blob& b : params.blobs) {
        const double reach = 3.0 * b.radius;
        const auto lo = [&](double c) { return static_cast<std::size_t>(std::max(0.0, std::floor(c - reach))); };
        const auto hi = [&](double c) {
            return static_cast<std::size_t>(std::min(static_cast<double>(n - 1), std::ceil(c + reach)));
        };
        const double inv = 1.0 / (2.0 * b.radius * b.radius);
        for (std::size_t y = lo(b.y); y <= hi(b.y); ++y) {
            for (std::size_t x = lo(b.x); x <= hi(b.x); ++x) {
                const double dx = static_cast<double>(x) + 0.5 - b.x;
                const double dy = static_cast<double>(y) + 0.5 - b.y;
                density[y * n + x] += std::exp(-(dx * dx + dy * dy) * inv);
            }
        }
    }
    std::normal_distribution<double> noise(0.0, model.pixel_noise_sd);
    RgbImage img{n, n, std::vector<std::uint8_t>(n * n * 3)};
    const Palette& pal = model.palette;
    for (std::size_t i = 0; i < n * n; ++i) {
        const double a = std::min(1.0, density[i]);
        for (std::size_t c = 0; c < 3; ++c) {
            double v = pal.background[c] * (1.0 - a) + pal.nucleus[c] * a;
            v = v * style.gain[c] + style.offset[c] + noise(rng);
            img.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
    }
    return img;
}

corpus::Corpus generate_synthetic_corpus(const std::filesystem::path& out_dir, const GeneratorOptions& options) {
    using namespace corpus;
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "patches", ec);
    if (ec) throw IoError("cannot create output directory " + (out_dir / "patches").string() + ": " + ec.message());

    std::vector<CaseRecord> cases;
    std::vector<SlideRecord> slides;
    std::vector<PatchRecord> patches;
    const int id_width = options.layout.case_count() >= 100 ? 3 : 2;
    std::size_t case_no = 0;
    for (DiagnosticCategory category : kAllCategories) {
        for (std::size_t k = 0; k < options.layout.cases_per_category[static_cast<std::size_t>(code(category))]; ++k) {
            CaseRecord c{"C" + padded(++case_no, id_width), category, {}};
            for (std::size_t s = 0; s < kSlidesPerCase; ++s) {
                SlideRecord slide;
                slide.slide_id = c.case_id + "-S" + std::to_string(s + 1);
                slide.case_id = c.case_id;
                slide.role = is_positive(category) && s == 0 ? SlideRole::involved : SlideRole::uninvolved;

                // Labels follow the case, so both slides carry the case texture.
                std::mt19937_64 rng = stream_for(options.seed, slides.size());
                const SlideStyle style = sample_slide_style(options.texture, rng);
                for (std::size_t p = 0; p < kPatchesPerSlide; ++p) {
                    PatchRecord rec;
                    rec.patch_id = slide.slide_id + "-P" + padded(p + 1, 2);
                    rec.slide_id = slide.slide_id;
                    rec.path = std::filesystem::path("patches") / (rec.patch_id + ".ppm");
                    rec.observed_dx = category;
                    const PatchParams params = sample_patch_params(options.texture, category, style, rng);
                    write_ppm(render_patch(options.texture, params, style, rng), out_dir / rec.path);
                    slide.patch_ids.push_back(rec.patch_id);
                    patches.push_back(std::move(rec));
                }
                c.slide_ids.push_back(slide.slide_id);
                slides.push_back(std::move(slide));
            }
            cases.push_back(std::move(c));
        }
    }
    SplitOptions split = options.split;
    split.seed = options.seed;
    Corpus corpus = assign_splits(Corpus(std::move(cases), std::move(slides), std::move(patches),
                                         LabelMode::case_level, out_dir),
                                  split);
    write_manifest(corpus, out_dir / "manifest.jsonl");
    return corpus;
}

} // namespace slns::synthetic
