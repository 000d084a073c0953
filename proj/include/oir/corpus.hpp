#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oir::corpus {

enum class Pos {
  ADJ,
  ADP,
  ADV,
  AUX,
  CCONJ,
  DET,
  INTJ,
  NOUN,
  PRON_Dem,
  PRON_Int,
  PRON_Prs,
  PUNCT,
  SYM,
  VERB,
  COREF,
  OTHER,
};

inline constexpr std::size_t kPosCount = 16;

// The fourteen tags that get per-segment ratio features.
inline constexpr std::array<Pos, 14> kRatioTags = {
    Pos::ADJ,      Pos::ADP,      Pos::ADV,      Pos::AUX,   Pos::CCONJ, Pos::DET,  Pos::INTJ,
    Pos::NOUN,     Pos::PRON_Dem, Pos::PRON_Int, Pos::PRON_Prs, Pos::PUNCT, Pos::SYM, Pos::VERB,
};

std::string_view pos_name(Pos p);
std::optional<Pos> parse_pos(std::string_view s);

enum class Nonverbal { Laugh, Sigh, Breath, MouthNoise };

std::string_view nonverbal_name(Nonverbal n);
std::optional<Nonverbal> parse_nonverbal(std::string_view s);

struct Token {
  std::string text;
  std::string lemma;
  Pos pos = Pos::OTHER;
  bool is_coref = false;
  std::optional<Nonverbal> nonverbal;
  std::optional<double> t_start;
  std::optional<double> t_end;

  bool lexical() const { return !nonverbal.has_value(); }
  // How the token appears in a transcript.
  std::string rendered() const;

  bool operator==(const Token&) const = default;
};

enum class Role { TS, RI, RS, RD };
std::string_view role_name(Role r);
std::optional<Role> parse_role(std::string_view s);

enum class OirType { OpenRequest, RestrictedRequest, RestrictedOffer };
std::string_view oir_type_name(OirType t);
std::optional<OirType> parse_oir_type(std::string_view s);

struct AudioRef {
  std::string path;
  int channel = 0;

  bool operator==(const AudioRef&) const = default;
};

enum class Split { Train, Val, Test };
std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view s);

struct Segment {
  std::string segment_id;
  std::string dialogue_id;
  std::string dyad_id;
  std::string speaker;
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<Token> tokens;
  std::string transcript;
  Role role = Role::RD;
  std::optional<OirType> oir_type;
  std::optional<std::string> sequence_id;
  AudioRef audio_ref;
  // Kept for dialogue context but excluded from classification sampling.
  bool context_only = false;

  double duration() const { return t_end - t_start; }
  // RI and RD segments that are not context-only form the classification sample.
  bool classifiable() const { return !context_only && (role == Role::RI || role == Role::RD); }
  int label() const { return role == Role::RI ? 1 : 0; }

  bool operator==(const Segment&) const = default;
};

// Whitespace join of the tokens' rendered forms.
std::string render_transcript(const std::vector<Token>& tokens);

struct OirSequence {
  std::string sequence_id;
  std::vector<std::string> ts_ids;
  std::vector<std::string> ri_ids;
  std::vector<std::string> rs_ids;
  bool minimal = false;

  bool operator==(const OirSequence&) const = default;
};

class Dataset {
 public:
  Dataset() = default;
  // Sorts segments by (dialogue_id, t_start), checks every invariant and
  // derives the OIR sequences. Throws oir::Error on violation.
  explicit Dataset(std::vector<Segment> segments, std::map<std::string, Split> split_assignment = {});

  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<OirSequence>& sequences() const { return sequences_; }
  const std::map<std::string, Split>& split_assignment() const { return split_; }

  const Segment* find(std::string_view segment_id) const;
  std::size_t index_of(std::string_view segment_id) const;
  const OirSequence* find_sequence(std::string_view sequence_id) const;

  // Indices of the segments of one dialogue in temporal order.
  std::vector<std::size_t> dialogue_indices(std::string_view dialogue_id) const;
  std::vector<std::string> dialogue_ids() const;

  // Turn number of each segment within its dialogue: consecutive segments
  // by the same speaker share a turn.
  int turn_index(std::size_t segment_index) const { return turn_[segment_index]; }

  std::optional<Split> split_of(std::string_view segment_id) const;
  std::vector<std::size_t> classifiable_indices() const;
  std::vector<std::size_t> classifiable_indices(Split split) const;

  bool operator==(const Dataset& other) const {
    return segments_ == other.segments_ && split_ == other.split_;
  }

 private:
  std::vector<Segment> segments_;
  std::vector<OirSequence> sequences_;
  std::map<std::string, Split> split_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
  std::vector<int> turn_;
};

// Segments of the most recent turn by a different speaker before segment
// `index` (in temporal order), skipping the target's own turn. Empty when the
// target opens the dialogue.
std::vector<std::size_t> prior_other_turn(const Dataset& ds, std::size_t index);
// Segments of the first turn by a different speaker after segment `index`.
std::vector<std::size_t> following_other_turn(const Dataset& ds, std::size_t index);

// ---- JSONL interchange -------------------------------------------------------

Dataset parse_corpus(const std::filesystem::path& path);
Dataset parse_corpus_text(std::string_view text);
std::string serialize_corpus(const Dataset& ds);
void write_corpus(const Dataset& ds, const std::filesystem::path& path);

// ---- validation ----------------------------------------------------------------

enum class ViolationRule { MissingComponent, OrderingViolation, SpeakerViolation, SolutionOrdering };
std::string_view violation_name(ViolationRule r);

struct Violation {
  std::string sequence_id;
  ViolationRule rule;
  std::string detail;
};

std::vector<Violation> validate_oir(const Dataset& ds);

// ---- sampling -----------------------------------------------------------------

// Keeps every RI, samples exactly target_rd_count RD segments stratified by
// dyad (largest-remainder allocation) and marks every other segment
// context-only. Nothing is removed, so dialogue context stays intact.
Dataset balance_dataset(const Dataset& ds, std::size_t target_rd_count, std::uint64_t seed);

struct SplitRatios {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
};

// Stratified by label over classifiable segments; OIR sequences are kept
// whole. Context-only segments of a sequence follow their sequence.
Dataset split_dataset(const Dataset& ds, SplitRatios ratios, std::uint64_t seed);

// Largest-remainder apportionment of total over weights; ties go to the
// lower index.
std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<double>& weights);

// A unit that must not be separated by splitting: one OIR sequence or one
// stand-alone RD segment.
struct SampleGroup {
  std::vector<std::size_t> members;      // classifiable segment indices
  std::vector<std::size_t> passengers;   // context-only segments riding along
  int label = 0;
};

std::vector<SampleGroup> sample_groups(const Dataset& ds, const std::vector<std::size_t>& pool);

}  // namespace oir::corpus
