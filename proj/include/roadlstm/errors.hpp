#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace roadlstm {

// Base class for every error this library throws.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor or layer geometry does not line up (dimension mismatch).
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Out-of-range element or row access.
class IndexError : public Error {
public:
    explicit IndexError(const std::string& msg) : Error(msg) {}
};

// Invalid layer/crop geometry (e.g. valid-padding kernel larger than input,
// frame smaller than the pyramid crop).
class GeometryError : public Error {
public:
    explicit GeometryError(const std::string& msg) : Error(msg) {}
};

// Corrupt or truncated serialized data. Carries the byte offset at which
// the problem was detected.
class FormatError : public Error {
public:
    FormatError(const std::string& msg, std::uint64_t offset)
        : Error(msg + " (at byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::uint64_t byte_offset;
};

// Numeric failure during optimization (non-finite gradient or loss).
class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& msg) : Error(msg) {}
};

// Bad run configuration (inconsistent comparison setup, bad arch file, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Missing or unreadable input data (dataset directories, images, weights).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

}  // namespace roadlstm
