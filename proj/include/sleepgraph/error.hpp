#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sleepgraph {

enum class Errc {
  // ingest
  MalformedRow,
  DuplicateKey,
  UnknownPatient,
  InsufficientData,
  SchemaMismatch,
  Io,
  // annotate
  BackendUnavailable,
  InvalidBackendResponse,
  // graph
  LengthMismatch,
  EmptyDataset,
  UnknownNode,
  // parse
  NoPatientFound,
  NoDateFound,
  UnknownMetric,
  AmbiguousMetric,
  NoSuchDayRecord,
  // forest
  InsufficientTrainingData,
  InvalidConfig,
  NoSplits,
  WidthMismatch,
  // prompt
  MissingContext,
  NonFinite,
  // llm
  AuthError,
  RateLimited,
  MalformedResponse,
  Timeout,
  // eval
  UnparseableEvaluation,
  OutOfRangeScore,
  FailureBudgetExceeded,
  IncompleteTable,
  // synth / cli
  InvalidSpec,
  Usage,
};

std::string_view errc_name(Errc code) noexcept;

/// Coarse grouping used by the CLI exit-code contract.
enum class ErrorCategory { Usage, Parse, Data, Backend };

ErrorCategory category_of(Errc code) noexcept;

/// Library-wide exception. `what()` is "<Name>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace sleepgraph
