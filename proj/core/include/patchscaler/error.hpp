// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace patchscaler {

/// Base of every error raised by the library. The message can be prefixed
/// with the pipeline stage that surfaced it.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& message) : std::runtime_error(message), m_message(message) {}

    const char* what() const noexcept override { return m_message.c_str(); }

    void prepend_stage(std::string_view stage) { m_message = std::string(stage) + ": " + m_message; }

private:
    std::string m_message;
};

/// Invalid parameters, inconsistent shapes, or malformed configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

class ShapeError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

enum class IoErrorKind {
    open_failed,
    magic_mismatch,
    version_mismatch,
    truncated,
    dimension_mismatch,
    malformed,
};

std::string_view to_string(IoErrorKind kind);

class IoError : public Error {
public:
    IoError(IoErrorKind kind, const std::string& message)
        : Error(std::string(to_string(kind)) + ": " + message), m_kind(kind) {}

    IoErrorKind kind() const noexcept { return m_kind; }

private:
    IoErrorKind m_kind;
};

/// Non-finite values, training divergence, degenerate vectors.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A texture query whose feature vector has zero norm. Callers fall back to
/// unconditional prompting.
class DegenerateQueryError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Runs `fn`, tagging any library error with `stage` before rethrowing.
template <typename Fn>
decltype(auto) with_stage(std::string_view stage, Fn&& fn) {
    try {
        return fn();
    } catch (Error& e) {
        e.prepend_stage(stage);
        throw;
    }
}

}  // namespace patchscaler
