#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace targeting {

enum class ErrorCode {
    invalid_input,
    invalid_config,
    numerical_failure,
    undefined_metric,
    io_failure,
    empty_file,
    missing_column,
    malformed_numeric,
    nonpositive_sigma,
    duplicate_id,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a code so the CLI can map it
// to a distinct exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace targeting
