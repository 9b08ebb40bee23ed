#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slns::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

// args excludes the program name. Never throws; failures become exit codes
// with a message on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace slns::cli
