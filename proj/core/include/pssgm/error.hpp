#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pssgm {

enum class ErrorKind {
    invalid_argument,
    dimension_mismatch,
    out_of_range,
    unsupported_dimension,
    // container / file formats
    bad_magic,
    truncated,
    dim_overflow,
    trailing_bytes,
    count_mismatch,
    version_mismatch,
    schema_violation,
    checksum_mismatch,
    io,
    // numerics
    decomposition,
    integration_blowup,
    training_divergence,
};

std::string_view to_string(ErrorKind kind);

/// Process exit code for a failure of this kind: 2 input/validation,
/// 3 numerical failure, 4 I/O.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised when a sampler state leaves the finite box |x_n| <= blowup_bound.
class BlowupError : public Error {
public:
    BlowupError(std::size_t chain, std::size_t step, const std::string& message);

    std::size_t chain() const noexcept { return chain_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t chain_;
    std::size_t step_;
};

/// Non-finite loss or gradient during sequential training.
class TrainingError : public Error {
public:
    TrainingError(std::size_t snapshot, std::size_t step, const std::string& message);

    std::size_t snapshot() const noexcept { return snapshot_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t snapshot_;
    std::size_t step_;
};

}  // namespace pssgm
