#pragma once

#include "slnscreen/category.hpp"

#include <array>
#include <string>

namespace slns {

// One scored patch, as written to and read from predictions CSV files.
struct PredictionRow {
    std::string patch_id;
    std::string slide_id;
    std::string case_id;
    DiagnosticCategory observed_dx = DiagnosticCategory::negative;
    DiagnosticCategory predicted_dx = DiagnosticCategory::negative;
    std::array<double, kCategoryCount> probabilities{};
};

} // namespace slns
