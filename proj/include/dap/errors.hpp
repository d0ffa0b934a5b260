#pragma once

#include <stdexcept>
#include <string>

namespace dap {

// Precondition violations on matrix/tensor shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Semantic inconsistency in otherwise well-formed data (bad config, bad
// shapes in a model file, schema mismatch between model and dataset).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unparseable or truncated input file.
class FileFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File declares a format version this build does not support.
class VersionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem-level failure (missing file, unwritable path).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dap
