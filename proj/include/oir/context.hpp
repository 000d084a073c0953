#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oir/corpus.hpp"
#include "oir/features.hpp"

namespace oir::context {

enum class Mode { Past, Future, Current, Full };

std::string_view mode_name(Mode m);
std::optional<Mode> parse_mode(std::string_view s);

struct ContextConfig {
  Mode mode = Mode::Full;
  std::optional<int> window = 2;  // nullopt expands until the budget is exhausted
  int max_tokens = 384;           // whitespace tokens, markers between segments included

  // Throws BadConfig when max_tokens < 3 or window < 0.
  void check() const;
  // "Full(2)", "Past(max)", "Current"
  std::string label() const;
};

inline constexpr const char* kCls = "[CLS]";
inline constexpr const char* kSep = "[SEP]";
inline constexpr const char* kEos = "[EOS]";

struct ContextSequence {
  std::vector<std::string> tokens;        // begins with [CLS], ends with [EOS]
  std::vector<std::string> segment_ids;   // chronological
  std::size_t target_position = 0;        // index of the target within segment_ids

  std::string text() const;
};

std::vector<std::string> whitespace_tokens(std::string_view text);

// Expands around segments[i] in the order i-1, i+1, i-2, i+2, ... as the mode
// permits, stopping at the window or at the first segment that would exceed
// the budget (that segment is left out whole). Throws IndexOutOfRange, and
// TargetExceedsBudget when the target alone does not fit.
ContextSequence assemble_micro_context(std::span<const corpus::Segment> segments, std::size_t i,
                                       const ContextConfig& cfg);

// Context of ds.segments()[index] within its dialogue.
ContextSequence assemble_micro_context(const corpus::Dataset& ds, std::size_t index, const ContextConfig& cfg);

// Scope of any handcrafted feature (prosodic or linguistic).
FeatureScope feature_scope(std::string_view name);
bool scope_allowed(Mode mode, FeatureScope scope);

// Masks the cross-segment features the mode may not see.
FeatureVector select_cross_segment_features(const ContextConfig& cfg, const FeatureVector& full);

// JSONL: {"segment_id", "context_text", "segments"} per line.
std::string context_jsonl_line(const std::string& segment_id, const ContextSequence& seq);
void write_context_jsonl(const corpus::Dataset& ds, const ContextConfig& cfg,
                         const std::vector<std::size_t>& indices, const std::filesystem::path& path);

}  // namespace oir::context
