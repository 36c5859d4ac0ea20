#include "vulbin/common/error.hpp"

namespace vulbin {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::FileNotReadable: return "FileNotReadable";
    case ErrorCode::UnknownFormat: return "UnknownFormat";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::BackendLaunchFailure: return "BackendLaunchFailure";
    case ErrorCode::BackendTimeout: return "BackendTimeout";
    case ErrorCode::EmptyOutput: return "EmptyOutput";
    case ErrorCode::TokenizeError: return "TokenizeError";
    case ErrorCode::LlmFailure: return "LlmFailure";
    case ErrorCode::InvalidMap: return "InvalidMap";
    case ErrorCode::PreservationViolation: return "PreservationViolation";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::UnknownFunction: return "UnknownFunction";
    case ErrorCode::BudgetOverflow: return "BudgetOverflow";
    case ErrorCode::TransportFailure: return "TransportFailure";
    case ErrorCode::ReplayMiss: return "ReplayMiss";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::QueueNotTerminal: return "QueueNotTerminal";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateCase: return "DuplicateCase";
    case ErrorCode::EmptyCounts: return "EmptyCounts";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SchemaTooNew: return "SchemaTooNew";
    case ErrorCode::StoreError: return "StoreError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::KnowledgeError: return "KnowledgeError";
    }
    return "Unknown";
}

}  // namespace vulbin
