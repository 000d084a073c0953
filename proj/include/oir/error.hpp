#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oir {

// Every failure the library reports carries one of these codes so callers
// (and the CLI exit-code mapping) can branch without string matching.
enum class Errc {
  MalformedRecord,
  DanglingSequenceRef,
  InsufficientRD,
  EmptyClass,
  BadRatios,
  AudioTooShort,
  BadAudio,
  TooFewVoicedFrames,
  InsufficientVoicing,
  DegenerateDuration,
  NonPositiveFrequency,
  MissingComponent,
  NoHistory,
  EmptySegment,
  IndexOutOfRange,
  TargetExceedsBudget,
  BadMagic,
  DimMismatch,
  TruncatedFile,
  MissingSegment,
  MissingModality,
  DataError,
  TooFewSamples,
  LengthMismatch,
  EmptyInput,
  EmptyBackground,
  SameModality,
  BadConfig,
  Io,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Schema violation in a line-oriented input file.
class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, std::string field, const std::string& detail = {})
      : Error(Errc::MalformedRecord,
              "line " + std::to_string(line) + ", field \"" + field + "\"" +
                  (detail.empty() ? std::string() : " (" + detail + ")")),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

}  // namespace oir
