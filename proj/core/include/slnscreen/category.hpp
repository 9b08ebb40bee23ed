#pragma once

#include "slnscreen/error.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace slns {

// Ordinal sentinel-node diagnosis. Codes are stable and appear in manifests,
// prediction files and checkpoints.
enum class DiagnosticCategory : std::uint8_t {
    negative = 0,
    itc = 1,              // isolated tumor cells
    micrometastasis = 2,
    macrometastasis = 3,
};

inline constexpr std::size_t kCategoryCount = 4;

inline constexpr std::array<DiagnosticCategory, kCategoryCount> kAllCategories{
    DiagnosticCategory::negative, DiagnosticCategory::itc, DiagnosticCategory::micrometastasis,
    DiagnosticCategory::macrometastasis};

enum class BinaryLabel : std::uint8_t { negative = 0, positive = 1 };

constexpr int code(DiagnosticCategory c) noexcept { return static_cast<int>(c); }

// Clinical grouping: negative and ITC are negative, micro and macro positive.
constexpr BinaryLabel group(DiagnosticCategory c) noexcept {
    return c == DiagnosticCategory::micrometastasis || c == DiagnosticCategory::macrometastasis
               ? BinaryLabel::positive
               : BinaryLabel::negative;
}

constexpr bool is_positive(DiagnosticCategory c) noexcept { return group(c) == BinaryLabel::positive; }

inline DiagnosticCategory category_from_code(long long value) {
    if (value < 0 || value > 3) {
        throw ValidationError("diagnostic category code " + std::to_string(value) + " is outside 0..3");
    }
    return static_cast<DiagnosticCategory>(value);
}

constexpr std::string_view category_name(DiagnosticCategory c) noexcept {
    switch (c) {
    case DiagnosticCategory::negative: return "Negative";
    case DiagnosticCategory::itc: return "ITC";
    case DiagnosticCategory::micrometastasis: return "Micro Met";
    case DiagnosticCategory::macrometastasis: return "Macro Met";
    }
    return "?";
}

} // namespace slns
