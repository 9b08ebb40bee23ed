#include "settings.hpp"

#include "slnscreen/report.hpp"

#include <charconv>
#include <cmath>
#include <functional>

namespace slns::cli {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string shortest(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& value) {
    T out{};
    const auto r = std::from_chars(value.data(), value.data() + value.size(), out);
    if (r.ec != std::errc{} || r.ptr != value.data() + value.size() || value.empty()) {
        throw ValidationError("'" + value + "' is not a valid number");
    }
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(out)) throw ValidationError("'" + value + "' is not finite");
    }
    return out;
}

bool parse_bool(const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ValidationError("'" + value + "' is not a boolean (true/false)");
}

std::vector<std::size_t> parse_list(const std::string& value) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= value.size()) {
        const auto comma = value.find(',', start);
        const std::string item = trim(value.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        out.push_back(parse_number<std::size_t>(item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

struct Key {
    std::string_view name;
    std::string_view help;
    std::function<std::string(const Settings&)> get;
    std::function<void(Settings&, const std::string&)> set;
};

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        {"model.seed", "weight initialization seed",
         [](const Settings& s) { return std::to_string(s.model_seed); },
         [](Settings& s, const std::string& v) { s.model_seed = parse_number<std::uint64_t>(v); }},
        {"model.conv_channels", "output channels of each conv+pool block",
         [](const Settings& s) {
             std::string out;
             for (std::size_t c : s.conv_channels) out += (out.empty() ? "" : ",") + std::to_string(c);
             return out;
         },
         [](Settings& s, const std::string& v) { s.conv_channels = parse_list(v); }},
        {"model.conv_kernel", "square conv kernel size",
         [](const Settings& s) { return std::to_string(s.conv_kernel); },
         [](Settings& s, const std::string& v) { s.conv_kernel = parse_number<std::size_t>(v); }},
        {"model.dense_units", "hidden dense width",
         [](const Settings& s) { return std::to_string(s.dense_units); },
         [](Settings& s, const std::string& v) { s.dense_units = parse_number<std::size_t>(v); }},
        {"model.dropout", "dropout rate in the dense head, [0, 1)",
         [](const Settings& s) { return shortest(s.dropout); },
         [](Settings& s, const std::string& v) { s.dropout = parse_number<double>(v); }},
        {"train.batch_size", "samples per optimizer step",
         [](const Settings& s) { return std::to_string(s.train.batch_size); },
         [](Settings& s, const std::string& v) { s.train.batch_size = parse_number<std::size_t>(v); }},
        {"train.max_epochs", "upper bound on epochs",
         [](const Settings& s) { return std::to_string(s.train.max_epochs); },
         [](Settings& s, const std::string& v) { s.train.max_epochs = parse_number<std::size_t>(v); }},
        {"train.patience", "epochs without validation-loss improvement before stopping",
         [](const Settings& s) { return std::to_string(s.train.patience); },
         [](Settings& s, const std::string& v) { s.train.patience = parse_number<std::size_t>(v); }},
        {"train.optimizer", "adam or sgd",
         [](const Settings& s) { return std::string(nn::optimizer_name(s.train.optimizer.kind)); },
         [](Settings& s, const std::string& v) { s.train.optimizer.kind = nn::parse_optimizer(v); }},
        {"train.learning_rate", "optimizer step size",
         [](const Settings& s) { return shortest(s.train.optimizer.learning_rate); },
         [](Settings& s, const std::string& v) { s.train.optimizer.learning_rate = parse_number<double>(v); }},
        {"train.flip_horizontal", "random horizontal flips",
         [](const Settings& s) { return std::string(s.train.flip_horizontal ? "true" : "false"); },
         [](Settings& s, const std::string& v) { s.train.flip_horizontal = parse_bool(v); }},
        {"train.flip_vertical", "random vertical flips",
         [](const Settings& s) { return std::string(s.train.flip_vertical ? "true" : "false"); },
         [](Settings& s, const std::string& v) { s.train.flip_vertical = parse_bool(v); }},
        {"train.seed", "shuffle / flip / dropout seed",
         [](const Settings& s) { return std::to_string(s.train.seed); },
         [](Settings& s, const std::string& v) { s.train.seed = parse_number<std::uint64_t>(v); }},
        {"train.threads", "worker threads (results do not depend on it)",
         [](const Settings& s) { return std::to_string(s.train.threads); },
         [](Settings& s, const std::string& v) { s.train.threads = parse_number<std::size_t>(v); }},
        {"corpus.cases_negative", "generated cases with diagnosis 0",
         [](const Settings& s) { return std::to_string(s.layout.cases_per_category[0]); },
         [](Settings& s, const std::string& v) { s.layout.cases_per_category[0] = parse_number<std::size_t>(v); }},
        {"corpus.cases_itc", "generated cases with diagnosis 1",
         [](const Settings& s) { return std::to_string(s.layout.cases_per_category[1]); },
         [](Settings& s, const std::string& v) { s.layout.cases_per_category[1] = parse_number<std::size_t>(v); }},
        {"corpus.cases_micro", "generated cases with diagnosis 2",
         [](const Settings& s) { return std::to_string(s.layout.cases_per_category[2]); },
         [](Settings& s, const std::string& v) { s.layout.cases_per_category[2] = parse_number<std::size_t>(v); }},
        {"corpus.cases_macro", "generated cases with diagnosis 3",
         [](const Settings& s) { return std::to_string(s.layout.cases_per_category[3]); },
         [](Settings& s, const std::string& v) { s.layout.cases_per_category[3] = parse_number<std::size_t>(v); }},
        {"split.train", "train fraction",
         [](const Settings& s) { return shortest(s.fractions.train); },
         [](Settings& s, const std::string& v) { s.fractions.train = parse_number<double>(v); }},
        {"split.val", "validation fraction",
         [](const Settings& s) { return shortest(s.fractions.val); },
         [](Settings& s, const std::string& v) { s.fractions.val = parse_number<double>(v); }},
        {"split.test", "test fraction",
         [](const Settings& s) { return shortest(s.fractions.test); },
         [](Settings& s, const std::string& v) { s.fractions.test = parse_number<double>(v); }},
        {"split.case_coherent", "keep both slides of a case in one split",
         [](const Settings& s) { return std::string(s.case_coherent ? "true" : "false"); },
         [](Settings& s, const std::string& v) { s.case_coherent = parse_bool(v); }},
    };
    return table;
}

} // namespace

nn::ModelConfig model_config(const Settings& s) {
    if (s.conv_channels.empty()) throw ValidationError("model.conv_channels must list at least one block");
    if (!(s.dropout >= 0.0 && s.dropout < 1.0)) throw ValidationError("model.dropout must lie in [0, 1)");
    nn::ModelConfig config;
    config.seed = s.model_seed;
    std::size_t in = config.input_shape[2];
    for (std::size_t out : s.conv_channels) {
        ConvSpec spec{s.conv_kernel, s.conv_kernel, in, out, 1, Padding::same};
        config.layers.push_back(nn::ConvLayer{spec, true});
        config.layers.push_back(nn::MaxPoolLayer{2, 2});
        in = out;
    }
    config.layers.push_back(nn::FlattenLayer{});
    config.layers.push_back(nn::DenseLayer{s.dense_units});
    config.layers.push_back(nn::ReluLayer{});
    config.layers.push_back(nn::DropoutLayer{s.dropout});
    config.layers.push_back(nn::DenseLayer{config.classes});
    config.layers.push_back(nn::SoftmaxLayer{});
    shape_chain(config);
    return config;
}

void apply_config_text(Settings& settings, std::string_view text, std::string_view source) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        std::string_view raw = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        ++line_no;
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const std::string where = std::string(source) + ":" + std::to_string(line_no);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& table = keys();
        const auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == key; });
        if (it == table.end()) throw ValidationError(where + ": unknown key '" + key + "'");
        try {
            it->set(settings, value);
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + key + ": " + e.what());
        }
    }
}

void apply_config_file(Settings& settings, const std::string& path) {
    apply_config_text(settings, report::read_text(path), path);
}

std::string dump_config(const Settings& settings) {
    std::string out;
    for (const Key& k : keys()) {
        out += "# " + std::string(k.help) + "\n" + std::string(k.name) + " = " + k.get(settings) + "\n";
    }
    return out;
}

} // namespace slns::cli
