#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dnaadv {

enum class ErrorKind {
  InvalidSymbol,
  SequenceTooShort,
  NotInvertible,
  EmptyCorpus,
  LengthMismatch,
  EmptyDataset,
  LabelOutOfRange,
  ShapeMismatch,
  ConnectFailed,
  ProtocolError,
  Timeout,
  NoGradientCapability,
  NoFeatureView,
  TooManyFeaturesForExact,
  EmptyTargetPool,
  RepairFailed,
  SourceEmpty,
  ZeroCleanAccuracy,
  ZeroDefAccuracy,
  MissingCell,
  IoError,
  InvalidRecord,
  ParseError,
  NotFound,
  MixedTokenizers,
  UnsupportedFormat,
  InvalidMotif,
  InvalidConfig,
  UnknownKey,
};

std::string_view to_string(ErrorKind kind);

/// Domain error. Every failure surfaced by the library carries a kind so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised for unparseable sequence input; keeps the offending position.
class InvalidSymbolError : public Error {
 public:
  InvalidSymbolError(std::size_t position, char symbol)
      : Error(ErrorKind::InvalidSymbol,
              "position " + std::to_string(position) + " holds '" + std::string(1, symbol) + "'"),
        position_(position),
        symbol_(symbol) {}

  std::size_t position() const noexcept { return position_; }
  char symbol() const noexcept { return symbol_; }

 private:
  std::size_t position_;
  char symbol_;
};

/// Malformed input line; line numbers are 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + reason), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace dnaadv
