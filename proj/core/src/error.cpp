#include "ppower/error.hpp"

namespace ppower {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NonInvertible: return "NonInvertible";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::UnsupportedPredictor: return "UnsupportedPredictor";
        case ErrorKind::InvalidModel: return "InvalidModel";
        case ErrorKind::UnsupportedTarget: return "UnsupportedTarget";
        case ErrorKind::InsufficientData: return "InsufficientData";
        case ErrorKind::InformationLeak: return "InformationLeak";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::RankDeficient: return "RankDeficient";
        case ErrorKind::EmptyCell: return "EmptyCell";
        case ErrorKind::HistoryFeatureOverflow: return "HistoryFeatureOverflow";
        case ErrorKind::Divergence: return "Divergence";
        case ErrorKind::BudgetExceeded: return "BudgetExceeded";
        case ErrorKind::CertificateMissing: return "CertificateMissing";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace ppower
