#pragma once

#include <stdexcept>
#include <string>

namespace ppower {

enum class ErrorKind {
    NonInvertible,
    DimensionMismatch,
    UnsupportedPredictor,
    InvalidModel,
    UnsupportedTarget,
    InsufficientData,
    InformationLeak,
    NoConvergence,
    RankDeficient,
    EmptyCell,
    HistoryFeatureOverflow,
    Divergence,
    BudgetExceeded,
    CertificateMissing,
    ShapeMismatch,
    ConfigError,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace ppower
