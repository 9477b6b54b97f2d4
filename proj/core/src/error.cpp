#include "pssgm/error.hpp"

namespace pssgm {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_argument: return "invalid_argument";
        case ErrorKind::dimension_mismatch: return "dimension_mismatch";
        case ErrorKind::out_of_range: return "out_of_range";
        case ErrorKind::unsupported_dimension: return "unsupported_dimension";
        case ErrorKind::bad_magic: return "bad_magic";
        case ErrorKind::truncated: return "truncated";
        case ErrorKind::dim_overflow: return "dim_overflow";
        case ErrorKind::trailing_bytes: return "trailing_bytes";
        case ErrorKind::count_mismatch: return "count_mismatch";
        case ErrorKind::version_mismatch: return "version_mismatch";
        case ErrorKind::schema_violation: return "schema_violation";
        case ErrorKind::checksum_mismatch: return "checksum_mismatch";
        case ErrorKind::io: return "io";
        case ErrorKind::decomposition: return "decomposition";
        case ErrorKind::integration_blowup: return "integration_blowup";
        case ErrorKind::training_divergence: return "training_divergence";
    }
    return "unknown";
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io:
            return 4;
        case ErrorKind::decomposition:
        case ErrorKind::integration_blowup:
        case ErrorKind::training_divergence:
            return 3;
        default:
            return 2;
    }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

BlowupError::BlowupError(std::size_t chain, std::size_t step, const std::string& message)
    : Error(ErrorKind::integration_blowup,
            "chain " + std::to_string(chain) + ", step " + std::to_string(step) + ": " + message),
      chain_(chain),
      step_(step) {}

TrainingError::TrainingError(std::size_t snapshot, std::size_t step, const std::string& message)
    : Error(ErrorKind::training_divergence,
            "snapshot " + std::to_string(snapshot) + ", step " + std::to_string(step) + ": " + message),
      snapshot_(snapshot),
      step_(step) {}

}  // namespace pssgm
