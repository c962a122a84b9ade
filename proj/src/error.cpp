#include "sleepgraph/error.hpp"

namespace sleepgraph {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::DuplicateKey: return "DuplicateKey";
    case Errc::UnknownPatient: return "UnknownPatient";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::Io: return "IoError";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::InvalidBackendResponse: return "InvalidBackendResponse";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::NoPatientFound: return "NoPatientFound";
    case Errc::NoDateFound: return "NoDateFound";
    case Errc::UnknownMetric: return "UnknownMetric";
    case Errc::AmbiguousMetric: return "AmbiguousMetric";
    case Errc::NoSuchDayRecord: return "NoSuchDayRecord";
    case Errc::InsufficientTrainingData: return "InsufficientTrainingData";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NoSplits: return "NoSplits";
    case Errc::WidthMismatch: return "WidthMismatch";
    case Errc::MissingContext: return "MissingContext";
    case Errc::NonFinite: return "NonFinite";
    case Errc::AuthError: return "AuthError";
    case Errc::RateLimited: return "RateLimited";
    case Errc::MalformedResponse: return "MalformedResponse";
    case Errc::Timeout: return "Timeout";
    case Errc::UnparseableEvaluation: return "UnparseableEvaluation";
    case Errc::OutOfRangeScore: return "OutOfRangeScore";
    case Errc::FailureBudgetExceeded: return "FailureBudgetExceeded";
    case Errc::IncompleteTable: return "IncompleteTable";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::Usage: return "UsageError";
  }
  return "Error";
}

ErrorCategory category_of(Errc code) noexcept {
  switch (code) {
    case Errc::NoPatientFound:
    case Errc::NoDateFound:
    case Errc::UnknownMetric:
    case Errc::AmbiguousMetric:
    case Errc::NoSuchDayRecord:
      return ErrorCategory::Parse;
    case Errc::BackendUnavailable:
    case Errc::InvalidBackendResponse:
    case Errc::AuthError:
    case Errc::RateLimited:
    case Errc::MalformedResponse:
    case Errc::Timeout:
    case Errc::UnparseableEvaluation:
    case Errc::OutOfRangeScore:
    case Errc::FailureBudgetExceeded:
      return ErrorCategory::Backend;
    case Errc::Usage:
    case Errc::InvalidConfig:
    case Errc::InvalidSpec:
      return ErrorCategory::Usage;
    default:
      return ErrorCategory::Data;
  }
}

}  // namespace sleepgraph
