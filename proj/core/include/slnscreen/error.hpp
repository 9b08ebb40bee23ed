#pragma once

#include <stdexcept>
#include <string>

namespace slns {

// Input that violates a documented contract (shapes, manifests, checkpoints,
// metric inputs). The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem failures: missing files, unwritable directories. Exit code 2.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

} // namespace slns
