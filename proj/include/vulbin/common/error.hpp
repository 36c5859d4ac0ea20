#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vulbin {

enum class ErrorCode {
    FileNotReadable,
    UnknownFormat,
    UnsupportedFormat,
    BackendLaunchFailure,
    BackendTimeout,
    EmptyOutput,
    TokenizeError,
    LlmFailure,
    InvalidMap,
    PreservationViolation,
    IllegalTransition,
    UnknownFunction,
    BudgetOverflow,
    TransportFailure,
    ReplayMiss,
    ParseFailure,
    QueueNotTerminal,
    ParseError,
    DuplicateCase,
    EmptyCounts,
    EmptyInput,
    SchemaTooNew,
    StoreError,
    ConfigError,
    KnowledgeError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the whole library; callers switch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

    ErrorCode code() const noexcept { return code_; }
    // Message without the code prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

}  // namespace vulbin
