#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace compgen {

enum class ErrorCode {
    InvalidParameter = 1,
    InvalidInput,
    BalanceViolation,
    IncompleteSplit,
    Unidentifiable,
    InsufficientCombinations,
    DegenerateVariance,
    DegenerateVector,
    TrainingDiverged,
    IndexOutOfRange,
    CorruptFile,
    BadMagic,
    BadVersion,
    RowCountMismatch,
    NanEntry,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above; the CLI
/// maps the code onto its process exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Raised when the training loss turns non-finite.
class TrainingDivergedError : public Error {
public:
    TrainingDivergedError(int epoch, const std::string& what)
        : Error(ErrorCode::TrainingDiverged, what), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace compgen
