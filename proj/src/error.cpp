#include "oir/error.hpp"

namespace oir {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::DanglingSequenceRef: return "DanglingSequenceRef";
    case Errc::InsufficientRD: return "InsufficientRD";
    case Errc::EmptyClass: return "EmptyClass";
    case Errc::BadRatios: return "BadRatios";
    case Errc::AudioTooShort: return "AudioTooShort";
    case Errc::BadAudio: return "BadAudio";
    case Errc::TooFewVoicedFrames: return "TooFewVoicedFrames";
    case Errc::InsufficientVoicing: return "InsufficientVoicing";
    case Errc::DegenerateDuration: return "DegenerateDuration";
    case Errc::NonPositiveFrequency: return "NonPositiveFrequency";
    case Errc::MissingComponent: return "MissingComponent";
    case Errc::NoHistory: return "NoHistory";
    case Errc::EmptySegment: return "EmptySegment";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::TargetExceedsBudget: return "TargetExceedsBudget";
    case Errc::BadMagic: return "BadMagic";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::MissingSegment: return "MissingSegment";
    case Errc::MissingModality: return "MissingModality";
    case Errc::DataError: return "DataError";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::EmptyBackground: return "EmptyBackground";
    case Errc::SameModality: return "SameModality";
    case Errc::BadConfig: return "BadConfig";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace oir
