#include "targeting/error.hpp"

namespace targeting {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_input: return "invalid-input";
        case ErrorCode::invalid_config: return "invalid-config";
        case ErrorCode::numerical_failure: return "numerical-failure";
        case ErrorCode::undefined_metric: return "undefined-metric";
        case ErrorCode::io_failure: return "io-failure";
        case ErrorCode::empty_file: return "empty-file";
        case ErrorCode::missing_column: return "missing-column";
        case ErrorCode::malformed_numeric: return "malformed-numeric";
        case ErrorCode::nonpositive_sigma: return "nonpositive-sigma";
        case ErrorCode::duplicate_id: return "duplicate-id";
    }
    return "unknown";
}

}  // namespace targeting
