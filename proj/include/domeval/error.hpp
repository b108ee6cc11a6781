#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace domeval {

enum class ErrorCode {
    DocumentEmpty,
    InvalidChunkParams,
    InvalidArgument,
    EndpointUnreachable,
    AuthFailure,
    ResponseTruncated,
    RetriesExhausted,
    GranularityMismatch,
    GeneratorRefused,
    DimensionMismatch,
    EmptyStore,
    TemplateMissingPlaceholder,
    EmptyCandidate,
    EmptyInput,
    EmptyText,
    UnknownLabel,
    UnknownItem,
    MisalignedVectors,
    TooFewItems,
    MissingCategory,
    MissingResponse,
    SessionClosed,
    SessionIncomplete,
    UnknownSession,
    UnknownKey,
    UnknownCategory,
    UnknownEndpoint,
    Io,
    Parse,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace domeval
