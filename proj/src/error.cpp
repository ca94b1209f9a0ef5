#include "compgen/error.hpp"

namespace compgen {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidParameter: return "invalid-parameter";
        case ErrorCode::InvalidInput: return "invalid-input";
        case ErrorCode::BalanceViolation: return "balance-violation";
        case ErrorCode::IncompleteSplit: return "incomplete-split";
        case ErrorCode::Unidentifiable: return "unidentifiable";
        case ErrorCode::InsufficientCombinations: return "insufficient-combinations";
        case ErrorCode::DegenerateVariance: return "degenerate-variance";
        case ErrorCode::DegenerateVector: return "degenerate-vector";
        case ErrorCode::TrainingDiverged: return "training-diverged";
        case ErrorCode::IndexOutOfRange: return "index-out-of-range";
        case ErrorCode::CorruptFile: return "corrupt-file";
        case ErrorCode::BadMagic: return "bad-magic";
        case ErrorCode::BadVersion: return "bad-version";
        case ErrorCode::RowCountMismatch: return "row-count-mismatch";
        case ErrorCode::NanEntry: return "nan-entry";
        case ErrorCode::Io: return "io-error";
    }
    return "unknown";
}

}  // namespace compgen
