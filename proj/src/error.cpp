#include "readmit/error.hpp"

namespace readmit {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyKB: return "EmptyKB";
        case ErrorCode::InvalidCutoffs: return "InvalidCutoffs";
        case ErrorCode::NonPositiveParam: return "NonPositiveParam";
        case ErrorCode::DuplicateConcept: return "DuplicateConcept";
        case ErrorCode::UnknownConcept: return "UnknownConcept";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::DegenerateSpan: return "DegenerateSpan";
        case ErrorCode::OutOfSpan: return "OutOfSpan";
        case ErrorCode::AgeBelowAdult: return "AgeBelowAdult";
        case ErrorCode::TooFewPatients: return "TooFewPatients";
        case ErrorCode::SingleClass: return "SingleClass";
        case ErrorCode::NoPositives: return "NoPositives";
        case ErrorCode::EmptyChunks: return "EmptyChunks";
        case ErrorCode::SingleClassValidation: return "SingleClassValidation";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::BadArgument: return "BadArgument";
    }
    return "Error";
}

}  // namespace readmit
