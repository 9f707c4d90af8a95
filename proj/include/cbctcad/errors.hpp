#pragma once

#include <stdexcept>
#include <string>

namespace cbctcad {

// Domain-specific failures. Precondition violations (bad arguments, malformed
// configs) use std::invalid_argument instead; these types mark conditions that
// arise from otherwise-valid data and carry enough context to act on.

class FieldOfViewError : public std::runtime_error {
public:
    explicit FieldOfViewError(const std::string& what) : std::runtime_error(what) {}
};

class InsufficientCoverageError : public std::runtime_error {
public:
    explicit InsufficientCoverageError(const std::string& what) : std::runtime_error(what) {}
};

class TrainingFailureError : public std::runtime_error {
public:
    explicit TrainingFailureError(const std::string& what) : std::runtime_error(what) {}
};

class NoSinusFoundError : public std::runtime_error {
public:
    explicit NoSinusFoundError(const std::string& what) : std::runtime_error(what) {}
};

class UndefinedAucError : public std::runtime_error {
public:
    explicit UndefinedAucError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cbctcad
