#include "slnscreen/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace slns {

namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'L', 'N', 'S'};

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void text(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.insert(out_.end(), s.begin(), s.end());
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const std::uint8_t* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::string text(const char* what) {
        const std::uint32_t n = u32(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw CheckpointError(CheckpointError::Kind::truncated,
                                  std::string("checkpoint truncated while reading ") + what + " at byte " +
                                      std::to_string(pos_) + " of " + std::to_string(bytes_.size()));
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string metadata_text(const TrainingMetadata& m) {
    return "epochs_run=" + std::to_string(m.epochs_run) + "\nfinal_validation_loss=" +
           format_double(m.final_validation_loss) + "\nseed=" + std::to_string(m.seed) + "\n";
}

TrainingMetadata parse_metadata(const std::string& text) {
    TrainingMetadata m;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint metadata line '" + line + "' lacks '='");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        const char* b = value.data();
        const char* e = value.data() + value.size();
        std::from_chars_result r{};
        if (key == "epochs_run") {
            r = std::from_chars(b, e, m.epochs_run);
        } else if (key == "final_validation_loss") {
            r = std::from_chars(b, e, m.final_validation_loss);
        } else if (key == "seed") {
            r = std::from_chars(b, e, m.seed);
        } else {
            throw CheckpointError(CheckpointError::Kind::malformed, "unknown checkpoint metadata key '" + key + "'");
        }
        if (r.ec != std::errc{} || r.ptr != e) {
            throw CheckpointError(CheckpointError::Kind::malformed,
                                  "checkpoint metadata value '" + value + "' for " + key + " is invalid");
        }
    }
    return m;
}

} // namespace

Checkpoint make_checkpoint(const nn::Model& model, const TrainingMetadata& metadata) {
    return Checkpoint{model.config().to_text(), metadata, model.parameters()};
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.text(checkpoint.config_text);
    w.text(metadata_text(checkpoint.metadata));
    w.u32(static_cast<std::uint32_t>(checkpoint.weights.size()));
    for (const Tensor& t : checkpoint.weights) {
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
        for (float v : t.values()) w.f32(v);
    }
    return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CheckpointError(CheckpointError::Kind::not_a_checkpoint, "not a checkpoint: missing SLNS magic bytes");
    }
    Reader r(bytes.subspan(4));
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError(CheckpointError::Kind::version_mismatch,
                              "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint c;
    c.config_text = r.text("config text");
    c.metadata = parse_metadata(r.text("metadata text"));
    const std::uint32_t count = r.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t rank = r.u32("tensor rank");
        if (rank < 1 || rank > kMaxRank) {
            throw CheckpointError(CheckpointError::Kind::malformed,
                                  "checkpoint tensor " + std::to_string(i) + " has rank " + std::to_string(rank));
        }
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& e : shape) {
            e = r.u32("tensor extent");
            if (e == 0) {
                throw CheckpointError(CheckpointError::Kind::malformed,
                                      "checkpoint tensor " + std::to_string(i) + " has a zero extent");
            }
            n *= e;
        }
        if (n > r.remaining() / 4) {
            throw CheckpointError(CheckpointError::Kind::truncated,
                                  "checkpoint truncated inside tensor " + std::to_string(i) + " " + format_shape(shape));
        }
        std::vector<float> data(n);
        for (float& v : data) v = r.f32("tensor values");
        c.weights.emplace_back(std::move(shape), std::move(data));
    }
    if (r.remaining() != 0) {
        throw CheckpointError(CheckpointError::Kind::malformed,
                              "checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = serialize_checkpoint(checkpoint);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

void save_checkpoint(const nn::Model& model, const TrainingMetadata& metadata,
                     const std::filesystem::path& path) {
    save_checkpoint(make_checkpoint(model, metadata), path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return deserialize_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(e.kind(), path.string() + ": " + e.what());
    }
}

nn::Model model_from_checkpoint(const Checkpoint& checkpoint, std::optional<std::size_t> expected_classes) {
    nn::ModelConfig config;
    try {
        config = checkpoint.config();
    } catch (const ValidationError& e) {
        throw CheckpointError(CheckpointError::Kind::malformed, std::string("checkpoint config: ") + e.what());
    }
    if (expected_classes && config.classes != *expected_classes) {
        throw CheckpointError(CheckpointError::Kind::incompatible,
                              "checkpoint has " + std::to_string(config.classes) + " classes, expected " +
                                  std::to_string(*expected_classes));
    }
    nn::Model model(config);
    auto& params = model.parameters();
    if (params.size() != checkpoint.weights.size()) {
        throw CheckpointError(CheckpointError::Kind::incompatible,
                              "checkpoint stores " + std::to_string(checkpoint.weights.size()) +
                                  " tensors but its config needs " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != checkpoint.weights[i].shape()) {
            throw CheckpointError(CheckpointError::Kind::incompatible,
                                  "checkpoint tensor " + std::to_string(i) + " " +
                                      format_shape(checkpoint.weights[i].shape()) + " does not match config shape " +
                                      format_shape(params[i].shape()));
        }
        params[i] = checkpoint.weights[i];
    }
    return model;
}

nn::Model load_checkpoint(const std::filesystem::path& path, std::optional<std::size_t> expected_classes) {
    return model_from_checkpoint(read_checkpoint(path), expected_classes);
}

} // namespace slns
