#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oir/corpus.hpp"
#include "oir/features.hpp"

namespace oir::linguistic {

using corpus::Pos;

struct BigramVocabulary {
  std::vector<std::pair<Pos, Pos>> pairs;
  std::string source_hash;  // hash of the segment ids the vocabulary was counted on

  // Content hash of the pair list; changes whenever the feature layout does.
  std::string version() const;
  bool contains(Pos a, Pos b) const;
};

inline constexpr std::pair<Pos, Pos> kAnchorBigrams[] = {{Pos::PRON_Prs, Pos::VERB}, {Pos::VERB, Pos::COREF}};

// Top-k POS bigrams by document frequency over `train` (indices into ds),
// ties broken lexicographically by tag name, plus whichever anchor bigrams
// that list lacks (so the vocabulary holds k to k + 2 pairs).
BigramVocabulary select_frequent_bigrams(const corpus::Dataset& ds, std::span<const std::size_t> train,
                                         std::size_t k = 20);

std::string vocabulary_json(const BigramVocabulary& v);
BigramVocabulary parse_vocabulary_json(const std::string& text);
void write_vocabulary(const BigramVocabulary& v, const std::filesystem::path& path);
BigramVocabulary read_vocabulary(const std::filesystem::path& path);

std::string bigram_feature_name(Pos a, Pos b);

// POS tags of the lexical (non-nonverbal) tokens in order.
std::vector<Pos> pos_sequence(const corpus::Segment& seg);

// Within-segment features: bigram bits, tag ratios, lemma flags, question
// mark and nonverbal flags. Throws EmptySegment for a segment without tokens.
FeatureVector segment_features(const corpus::Segment& seg, const BigramVocabulary& vocab);

// Share of the segment's content tokens (punctuation and nonverbal tokens
// excluded) whose lowercased lemma occurs in the prior turn.
double other_repetition_ratio(const corpus::Segment& seg, std::span<const corpus::Segment* const> prior_turn);

// Indices of the segment's content tokens whose lemma occurs in the prior turn.
std::vector<std::size_t> repeated_tokens(const corpus::Segment& seg,
                                         std::span<const corpus::Segment* const> prior_turn);

double coref_used_ratio(const corpus::Segment& seg);

struct SolutionRepetition {
  double self_rep = 0.0;   // following turn repeating its speaker's earlier turn
  double other_rep = 0.0;  // following turn repeating the target
  bool present = false;    // false when there is no following turn
};

// `earlier_turn` is the following speaker's turn before the target.
SolutionRepetition solution_repetition(const corpus::Segment& target,
                                       std::span<const corpus::Segment* const> earlier_turn,
                                       std::span<const corpus::Segment* const> following_turn);

// Full vector for segment `index` of ds. Context comes from the adjacent
// other-speaker turns, never from gold roles.
FeatureVector extract_linguistic(const corpus::Dataset& ds, std::size_t index, const BigramVocabulary& vocab);

std::vector<std::string> linguistic_feature_names(const BigramVocabulary& vocab);
FeatureScope linguistic_scope(std::string_view name);

}  // namespace oir::linguistic
