#pragma once

#include "slnscreen/corpus.hpp"
#include "slnscreen/nn.hpp"
#include "slnscreen/trainer.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace slns::cli {

// Everything the flat config file can override. Defaults reproduce the
// library defaults exactly.
struct Settings {
    std::uint64_t model_seed = 1;
    std::vector<std::size_t> conv_channels{16, 32, 64, 128};
    std::size_t conv_kernel = 3;
    std::size_t dense_units = 256;
    double dropout = 0.5;

    trainer::TrainConfig train;

    corpus::Layout layout;
    corpus::SplitFractions fractions;
    bool case_coherent = false;
};

// conv(k x k, relu) + maxpool(2) per channel entry, then flatten, dense,
// relu, dropout, dense K, softmax.
nn::ModelConfig model_config(const Settings& settings);

// `key = value` lines, '#' starts a comment. Unknown keys and malformed values
// are rejected naming `source` and the line.
void apply_config_text(Settings& settings, std::string_view text, std::string_view source);
void apply_config_file(Settings& settings, const std::string& path);

// Every key with its current value, in a form apply_config_text accepts.
std::string dump_config(const Settings& settings);

} // namespace slns::cli
