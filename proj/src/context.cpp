#include "oir/context.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "oir/error.hpp"
#include "oir/linguistic.hpp"
#include "oir/prosody.hpp"

namespace oir::context {

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Past: return "Past";
    case Mode::Future: return "Future";
    case Mode::Current: return "Current";
    case Mode::Full: return "Full";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view s) {
  for (Mode m : {Mode::Past, Mode::Future, Mode::Current, Mode::Full}) {
    if (mode_name(m) == s) return m;
  }
  return std::nullopt;
}

void ContextConfig::check() const {
  if (max_tokens < 3) throw Error(Errc::BadConfig, "max_tokens must be at least 3");
  if (window && *window < 0) throw Error(Errc::BadConfig, "window must be non-negative");
}

std::string ContextConfig::label() const {
  std::string s(mode_name(mode));
  if (mode == Mode::Current) return s;
  return s + "(" + (window ? std::to_string(*window) : std::string("max")) + ")";
}

std::string ContextSequence::text() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

ContextSequence assemble_micro_context(std::span<const corpus::Segment> segments, std::size_t i,
                                       const ContextConfig& cfg) {
  cfg.check();
  if (i >= segments.size()) throw Error(Errc::IndexOutOfRange, "target index outside the segment list");
  const bool past = cfg.mode == Mode::Past || cfg.mode == Mode::Full;
  const bool future = cfg.mode == Mode::Future || cfg.mode == Mode::Full;

  auto length = [&](std::size_t k) { return whitespace_tokens(segments[k].transcript).size(); };
  std::size_t used = length(i);
  if (used > static_cast<std::size_t>(cfg.max_tokens)) {
    throw Error(Errc::TargetExceedsBudget, "segment " + segments[i].segment_id + " alone exceeds the token budget");
  }

  std::size_t lo = i, hi = i;
  const std::size_t limit = cfg.window ? static_cast<std::size_t>(*cfg.window) : segments.size();
  bool full = false;
  for (std::size_t j = 1; j <= limit && !full; ++j) {
    const bool has_prev = past && j <= i;
    const bool has_next = future && i + j < segments.size();
    if (!has_prev && !has_next) break;
    for (int side = 0; side < 2 && !full; ++side) {
      if ((side == 0 && !has_prev) || (side == 1 && !has_next)) continue;
      const std::size_t k = side == 0 ? i - j : i + j;
      const std::size_t cost = length(k) + 1;
      if (used + cost > static_cast<std::size_t>(cfg.max_tokens)) {
        full = true;
      } else {
        used += cost;
        (side == 0 ? lo : hi) = k;
      }
    }
  }

  ContextSequence seq;
  seq.tokens.push_back(kCls);
  for (std::size_t k = lo; k <= hi; ++k) {
    if (k > lo) seq.tokens.push_back(kSep);
    if (k == i) seq.target_position = seq.segment_ids.size();
    seq.segment_ids.push_back(segments[k].segment_id);
    for (auto& t : whitespace_tokens(segments[k].transcript)) seq.tokens.push_back(std::move(t));
  }
  seq.tokens.push_back(kEos);
  return seq;
}

ContextSequence assemble_micro_context(const corpus::Dataset& ds, std::size_t index, const ContextConfig& cfg) {
  const auto& segs = ds.segments();
  if (index >= segs.size()) throw Error(Errc::IndexOutOfRange, "segment index outside the dataset");
  std::size_t lo = index, hi = index + 1;
  while (lo > 0 && segs[lo - 1].dialogue_id == segs[index].dialogue_id) --lo;
  while (hi < segs.size() && segs[hi].dialogue_id == segs[index].dialogue_id) ++hi;
  return assemble_micro_context(std::span(segs).subspan(lo, hi - lo), index - lo, cfg);
}

FeatureScope feature_scope(std::string_view name) {
  const auto& pros = prosody::prosodic_feature_names();
  if (std::find(pros.begin(), pros.end(), name) != pros.end()) return prosody::prosodic_scope(name);
  return linguistic::linguistic_scope(name);
}

bool scope_allowed(Mode mode, FeatureScope scope) {
  switch (scope) {
    case FeatureScope::Current: return true;
    case FeatureScope::Past: return mode == Mode::Past || mode == Mode::Full;
    case FeatureScope::Future: return mode == Mode::Future || mode == Mode::Full;
  }
  return false;
}

FeatureVector select_cross_segment_features(const ContextConfig& cfg, const FeatureVector& full) {
  FeatureVector out = full;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!scope_allowed(cfg.mode, feature_scope(out.names()[i]))) {
      out.mutable_values()[i] = kMissing;
      out.mutable_present()[i] = 0;
    }
  }
  return out;
}

std::string context_jsonl_line(const std::string& segment_id, const ContextSequence& seq) {
  nlohmann::ordered_json j;
  j["segment_id"] = segment_id;
  j["context_text"] = seq.text();
  j["segments"] = seq.segment_ids;
  return j.dump();
}

void write_context_jsonl(const corpus::Dataset& ds, const ContextConfig& cfg,
                         const std::vector<std::size_t>& indices, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  for (std::size_t i : indices) {
    out << context_jsonl_line(ds.segments()[i].segment_id, assemble_micro_context(ds, i, cfg)) << '\n';
  }
}

}  // namespace oir::context
