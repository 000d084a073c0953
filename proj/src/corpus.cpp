#include "oir/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "oir/error.hpp"
#include "oir/rng.hpp"

namespace oir::corpus {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, kPosCount> kPosNames = {
    "ADJ",      "ADP",      "ADV",      "AUX",   "CCONJ", "DET",  "INTJ",  "NOUN",
    "PRON_Dem", "PRON_Int", "PRON_Prs", "PUNCT", "SYM",   "VERB", "COREF", "OTHER",
};

constexpr std::array<std::string_view, 4> kNonverbalNames = {"laugh", "sigh", "breath",
                                                             "mouth_noise"};
constexpr std::array<std::string_view, 4> kRoleNames = {"TS", "RI", "RS", "RD"};
constexpr std::array<std::string_view, 3> kOirTypeNames = {"OpenRequest", "RestrictedRequest",
                                                           "RestrictedOffer"};
constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

}  // namespace

std::string_view pos_name(Pos p) { return kPosNames[static_cast<std::size_t>(p)]; }
std::optional<Pos> parse_pos(std::string_view s) { return lookup<Pos>(kPosNames, s); }
std::string_view nonverbal_name(Nonverbal n) { return kNonverbalNames[static_cast<std::size_t>(n)]; }
std::optional<Nonverbal> parse_nonverbal(std::string_view s) {
  return lookup<Nonverbal>(kNonverbalNames, s);
}
std::string_view role_name(Role r) { return kRoleNames[static_cast<std::size_t>(r)]; }
std::optional<Role> parse_role(std::string_view s) { return lookup<Role>(kRoleNames, s); }
std::string_view oir_type_name(OirType t) { return kOirTypeNames[static_cast<std::size_t>(t)]; }
std::optional<OirType> parse_oir_type(std::string_view s) {
  return lookup<OirType>(kOirTypeNames, s);
}
std::string_view split_name(Split s) { return kSplitNames[static_cast<std::size_t>(s)]; }
std::optional<Split> parse_split(std::string_view s) { return lookup<Split>(kSplitNames, s); }

std::string Token::rendered() const {
  if (nonverbal) return "#" + std::string(nonverbal_name(*nonverbal)) + "#";
  return text;
}

std::string render_transcript(const std::vector<Token>& tokens) {
  std::string out;
  for (const Token& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t.rendered();
  }
  return out;
}

// ---- Dataset -------------------------------------------------------------------

namespace {

// Per-segment invariants; returns the offending field name or empty.
std::string segment_violation(const Segment& s) {
  if (s.segment_id.empty()) return "segment_id";
  if (!std::isfinite(s.t_start) || !std::isfinite(s.t_end) || !(s.t_end > s.t_start)) return "t_end";
  if ((s.role == Role::RI) != s.oir_type.has_value()) return "oir_type";
  if ((s.role != Role::RD) != s.sequence_id.has_value()) return "sequence_id";
  if (s.audio_ref.channel < 0) return "audio_ref";
  for (const Token& t : s.tokens) {
    if (t.t_start && t.t_end && *t.t_start > *t.t_end) return "tokens";
    if (t.nonverbal && !t.lemma.empty()) return "tokens";
    if (t.pos == Pos::COREF && !t.is_coref) return "tokens";
  }
  if (s.transcript != render_transcript(s.tokens)) return "transcript";
  return {};
}

}  // namespace

Dataset::Dataset(std::vector<Segment> segments, std::map<std::string, Split> split_assignment)
    : segments_(std::move(segments)), split_(std::move(split_assignment)) {
  std::stable_sort(segments_.begin(), segments_.end(), [](const Segment& a, const Segment& b) {
    if (a.dialogue_id != b.dialogue_id) return a.dialogue_id < b.dialogue_id;
    if (a.t_start != b.t_start) return a.t_start < b.t_start;
    return a.segment_id < b.segment_id;
  });

  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& s = segments_[i];
    if (auto field = segment_violation(s); !field.empty()) {
      throw Error(Errc::DataError, "segment " + s.segment_id + " violates invariant on " + field);
    }
    if (!by_id_.emplace(s.segment_id, i).second) {
      throw Error(Errc::DataError, "duplicate segment_id " + s.segment_id);
    }
  }
  for (const auto& [id, split] : split_) {
    if (!by_id_.contains(id)) throw Error(Errc::DataError, "split assignment for unknown segment " + id);
  }

  turn_.assign(segments_.size(), 0);
  for (std::size_t i = 1; i < segments_.size(); ++i) {
    const Segment& prev = segments_[i - 1];
    const Segment& cur = segments_[i];
    if (prev.dialogue_id != cur.dialogue_id) {
      turn_[i] = 0;
    } else {
      turn_[i] = turn_[i - 1] + (prev.speaker == cur.speaker ? 0 : 1);
    }
  }

  std::map<std::string, OirSequence> seqs;
  for (const Segment& s : segments_) {
    if (!s.sequence_id) continue;
    OirSequence& q = seqs[*s.sequence_id];
    q.sequence_id = *s.sequence_id;
    switch (s.role) {
      case Role::TS: q.ts_ids.push_back(s.segment_id); break;
      case Role::RI: q.ri_ids.push_back(s.segment_id); break;
      case Role::RS: q.rs_ids.push_back(s.segment_id); break;
      case Role::RD: break;
    }
  }
  for (auto& [id, q] : seqs) {
    // A sequence exists by virtue of its repair initiation.
    if (q.ri_ids.empty()) {
      throw Error(Errc::DanglingSequenceRef, "sequence " + id + " is cited but has no RI segment");
    }
    if (!q.ts_ids.empty()) {
      const int ts_turn = turn_[by_id_.at(q.ts_ids.back())];
      const int ri_turn = turn_[by_id_.at(q.ri_ids.front())];
      q.minimal = ri_turn == ts_turn + 1;
    }
    sequences_.push_back(std::move(q));
  }
}

const Segment* Dataset::find(std::string_view segment_id) const {
  auto it = by_id_.find(segment_id);
  return it == by_id_.end() ? nullptr : &segments_[it->second];
}

std::size_t Dataset::index_of(std::string_view segment_id) const {
  auto it = by_id_.find(segment_id);
  if (it == by_id_.end()) throw Error(Errc::MissingSegment, std::string(segment_id));
  return it->second;
}

const OirSequence* Dataset::find_sequence(std::string_view sequence_id) const {
  auto it = std::lower_bound(sequences_.begin(), sequences_.end(), sequence_id,
                             [](const OirSequence& q, std::string_view id) { return q.sequence_id < id; });
  return (it != sequences_.end() && it->sequence_id == sequence_id) ? &*it : nullptr;
}

std::vector<std::size_t> Dataset::dialogue_indices(std::string_view dialogue_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].dialogue_id == dialogue_id) out.push_back(i);
  }
  return out;
}

std::vector<std::string> Dataset::dialogue_ids() const {
  std::vector<std::string> out;
  for (const Segment& s : segments_) {
    if (out.empty() || out.back() != s.dialogue_id) out.push_back(s.dialogue_id);
  }
  return out;
}

std::optional<Split> Dataset::split_of(std::string_view segment_id) const {
  auto it = split_.find(std::string(segment_id));
  if (it == split_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> Dataset::classifiable_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].classifiable()) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Dataset::classifiable_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (!segments_[i].classifiable()) continue;
    auto it = split_.find(segments_[i].segment_id);
    if (it != split_.end() && it->second == split) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> prior_other_turn(const Dataset& ds, std::size_t index) {
  const auto& segs = ds.segments();
  const Segment& target = segs.at(index);
  std::vector<std::size_t> out;
  std::size_t i = index;
  while (i > 0 && segs[i - 1].dialogue_id == target.dialogue_id && segs[i - 1].speaker == target.speaker) --i;
  if (i == 0 || segs[i - 1].dialogue_id != target.dialogue_id) return out;
  const std::string& other = segs[i - 1].speaker;
  while (i > 0 && segs[i - 1].dialogue_id == target.dialogue_id && segs[i - 1].speaker == other) {
    out.push_back(--i);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> following_other_turn(const Dataset& ds, std::size_t index) {
  const auto& segs = ds.segments();
  const Segment& target = segs.at(index);
  std::vector<std::size_t> out;
  std::size_t i = index + 1;
  while (i < segs.size() && segs[i].dialogue_id == target.dialogue_id && segs[i].speaker == target.speaker) ++i;
  if (i >= segs.size() || segs[i].dialogue_id != target.dialogue_id) return out;
  const std::string& other = segs[i].speaker;
  while (i < segs.size() && segs[i].dialogue_id == target.dialogue_id && segs[i].speaker == other) {
    out.push_back(i++);
  }
  return out;
}

// ---- JSONL ---------------------------------------------------------------------

namespace {

const ojson& require(const ojson& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw MalformedRecord(line, key, "missing");
  return *it;
}

std::string get_string(const ojson& obj, const char* key, std::size_t line) {
  const ojson& v = require(obj, key, line);
  if (!v.is_string()) throw MalformedRecord(line, key, "expected string");
  return v.get<std::string>();
}

double get_number(const ojson& obj, const char* key, std::size_t line) {
  const ojson& v = require(obj, key, line);
  if (!v.is_number()) throw MalformedRecord(line, key, "expected number");
  return v.get<double>();
}

std::optional<std::string> get_opt_string(const ojson& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw MalformedRecord(line, key, "expected string or null");
  return it->get<std::string>();
}

std::optional<double> get_opt_number(const ojson& obj, const char* key, std::size_t line,
                                     const char* field) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw MalformedRecord(line, field, "expected number or null");
  return it->get<double>();
}

Token parse_token(const ojson& t, std::size_t line) {
  if (!t.is_object()) throw MalformedRecord(line, "tokens", "token is not an object");
  Token tok;
  auto str = [&](const char* key) {
    auto it = t.find(key);
    if (it == t.end() || !it->is_string()) throw MalformedRecord(line, "tokens", std::string(key));
    return it->get<std::string>();
  };
  tok.text = str("text");
  tok.lemma = str("lemma");
  auto pos = parse_pos(str("pos"));
  if (!pos) throw MalformedRecord(line, "tokens", "unknown pos");
  tok.pos = *pos;
  auto coref = t.find("is_coref");
  if (coref == t.end() || !coref->is_boolean()) throw MalformedRecord(line, "tokens", "is_coref");
  tok.is_coref = coref->get<bool>();
  auto nv = t.find("nonverbal");
  if (nv != t.end() && !nv->is_null()) {
    if (!nv->is_string()) throw MalformedRecord(line, "tokens", "nonverbal");
    tok.nonverbal = parse_nonverbal(nv->get<std::string>());
    if (!tok.nonverbal) throw MalformedRecord(line, "tokens", "unknown nonverbal");
  }
  tok.t_start = get_opt_number(t, "t_start", line, "tokens");
  tok.t_end = get_opt_number(t, "t_end", line, "tokens");
  return tok;
}

Segment parse_segment(const ojson& obj, std::size_t line, std::optional<Split>& split) {
  if (!obj.is_object()) throw MalformedRecord(line, "<record>", "not a JSON object");
  Segment s;
  s.segment_id = get_string(obj, "segment_id", line);
  s.dialogue_id = get_string(obj, "dialogue_id", line);
  s.dyad_id = get_string(obj, "dyad_id", line);
  s.speaker = get_string(obj, "speaker", line);
  s.t_start = get_number(obj, "t_start", line);
  s.t_end = get_number(obj, "t_end", line);
  auto role = parse_role(get_string(obj, "role", line));
  if (!role) throw MalformedRecord(line, "role", "unknown role");
  s.role = *role;
  if (auto t = get_opt_string(obj, "oir_type", line)) {
    s.oir_type = parse_oir_type(*t);
    if (!s.oir_type) throw MalformedRecord(line, "oir_type", "unknown type");
  }
  s.sequence_id = get_opt_string(obj, "sequence_id", line);

  const ojson& audio = require(obj, "audio_ref", line);
  if (!audio.is_object()) throw MalformedRecord(line, "audio_ref", "expected object");
  auto path = audio.find("path");
  auto channel = audio.find("channel");
  if (path == audio.end() || !path->is_string() || channel == audio.end() ||
      !channel->is_number_integer()) {
    throw MalformedRecord(line, "audio_ref", "expected {path, channel}");
  }
  s.audio_ref = AudioRef{path->get<std::string>(), channel->get<int>()};

  const ojson& tokens = require(obj, "tokens", line);
  if (!tokens.is_array()) throw MalformedRecord(line, "tokens", "expected array");
  for (const ojson& t : tokens) s.tokens.push_back(parse_token(t, line));
  s.transcript = get_string(obj, "transcript", line);

  if (auto it = obj.find("context_only"); it != obj.end()) {
    if (!it->is_boolean()) throw MalformedRecord(line, "context_only", "expected boolean");
    s.context_only = it->get<bool>();
  }
  if (auto sp = get_opt_string(obj, "split", line)) {
    split = parse_split(*sp);
    if (!split) throw MalformedRecord(line, "split", "unknown split");
  }

  if (auto field = segment_violation(s); !field.empty()) {
    throw MalformedRecord(line, field, "invariant violated");
  }
  return s;
}

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson to_json(const Segment& s, std::optional<Split> split) {
  ojson o;
  o["segment_id"] = s.segment_id;
  o["dialogue_id"] = s.dialogue_id;
  o["dyad_id"] = s.dyad_id;
  o["speaker"] = s.speaker;
  o["t_start"] = s.t_start;
  o["t_end"] = s.t_end;
  o["role"] = role_name(s.role);
  o["oir_type"] = s.oir_type ? ojson(oir_type_name(*s.oir_type)) : ojson(nullptr);
  o["sequence_id"] = s.sequence_id ? ojson(*s.sequence_id) : ojson(nullptr);
  o["audio_ref"] = ojson{{"path", s.audio_ref.path}, {"channel", s.audio_ref.channel}};
  ojson toks = ojson::array();
  for (const Token& t : s.tokens) {
    ojson jt;
    jt["text"] = t.text;
    jt["lemma"] = t.lemma;
    jt["pos"] = pos_name(t.pos);
    jt["is_coref"] = t.is_coref;
    jt["nonverbal"] = t.nonverbal ? ojson(nonverbal_name(*t.nonverbal)) : ojson(nullptr);
    jt["t_start"] = opt(t.t_start);
    jt["t_end"] = opt(t.t_end);
    toks.push_back(std::move(jt));
  }
  o["tokens"] = std::move(toks);
  o["transcript"] = s.transcript;
  if (s.context_only) o["context_only"] = true;
  if (split) o["split"] = split_name(*split);
  return o;
}

}  // namespace

Dataset parse_corpus_text(std::string_view text) {
  std::vector<Segment> segments;
  std::map<std::string, Split> split;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (eol == text.size()) break;
      continue;
    }
    ojson obj;
    try {
      obj = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedRecord(line_no, "<json>", e.what());
    }
    std::optional<Split> sp;
    Segment s = parse_segment(obj, line_no, sp);
    if (!seen.insert(s.segment_id).second) throw MalformedRecord(line_no, "segment_id", "duplicate id");
    if (sp) split.emplace(s.segment_id, *sp);
    segments.push_back(std::move(s));
    if (eol == text.size()) break;
  }
  return Dataset(std::move(segments), std::move(split));
}

Dataset parse_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open corpus " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_corpus_text(buf.str());
}

std::string serialize_corpus(const Dataset& ds) {
  std::string out;
  for (const Segment& s : ds.segments()) {
    out += to_json(s, ds.split_of(s.segment_id)).dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const Dataset& ds, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << serialize_corpus(ds);
}

// ---- validation ----------------------------------------------------------------

std::string_view violation_name(ViolationRule r) {
  switch (r) {
    case ViolationRule::MissingComponent: return "MissingComponent";
    case ViolationRule::OrderingViolation: return "OrderingViolation";
    case ViolationRule::SpeakerViolation: return "SpeakerViolation";
    case ViolationRule::SolutionOrdering: return "SolutionOrdering";
  }
  return "Unknown";
}

std::vector<Violation> validate_oir(const Dataset& ds) {
  std::vector<Violation> out;
  for (const OirSequence& q : ds.sequences()) {
    if (q.ts_ids.empty()) {
      out.push_back({q.sequence_id, ViolationRule::MissingComponent, "no trouble source"});
      continue;
    }
    std::vector<const Segment*> ts;
    for (const auto& id : q.ts_ids) ts.push_back(ds.find(id));
    for (const auto& id : q.ri_ids) {
      const Segment* ri = ds.find(id);
      const bool after_some_ts = std::any_of(ts.begin(), ts.end(), [&](const Segment* t) {
        return t->dialogue_id == ri->dialogue_id && ri->t_start > t->t_start;
      });
      if (!after_some_ts) {
        out.push_back({q.sequence_id, ViolationRule::OrderingViolation, id + " precedes every TS"});
      }
      const bool self_initiated = std::any_of(ts.begin(), ts.end(),
                                              [&](const Segment* t) { return t->speaker == ri->speaker; });
      if (self_initiated) {
        out.push_back({q.sequence_id, ViolationRule::SpeakerViolation, id + " shares the TS speaker"});
      }
    }
    const Segment* first_ri = ds.find(q.ri_ids.front());
    for (const auto& id : q.rs_ids) {
      if (ds.find(id)->t_start < first_ri->t_start) {
        out.push_back({q.sequence_id, ViolationRule::SolutionOrdering, id + " precedes the RI"});
      }
    }
  }
  return out;
}

// ---- sampling -----------------------------------------------------------------

std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<double>& weights) {
  std::vector<std::size_t> out(weights.size(), 0);
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || sum <= 0.0) return out;
  std::vector<double> frac(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[i] = exact - static_cast<double>(out[i]);
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < total && k < order.size(); ++k, ++assigned) ++out[order[k]];
  return out;
}

Dataset balance_dataset(const Dataset& ds, std::size_t target_rd_count, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> rd_by_dyad;
  std::size_t available = 0;
  for (std::size_t i = 0; i < ds.segments().size(); ++i) {
    if (ds.segments()[i].role == Role::RD) {
      rd_by_dyad[ds.segments()[i].dyad_id].push_back(i);
      ++available;
    }
  }
  if (available < target_rd_count) {
    throw Error(Errc::InsufficientRD, "requested " + std::to_string(target_rd_count) + " RD segments, " +
                                          std::to_string(available) + " available");
  }

  std::vector<double> weights;
  for (const auto& [dyad, idx] : rd_by_dyad) weights.push_back(static_cast<double>(idx.size()));
  const auto quotas = largest_remainder(target_rd_count, weights);

  std::vector<bool> keep(ds.segments().size(), false);
  Rng rng(seed);
  std::size_t d = 0;
  for (auto& [dyad, idx] : rd_by_dyad) {
    std::vector<std::size_t> pool = idx;
    rng.shuffle(std::span<std::size_t>(pool));
    for (std::size_t k = 0; k < quotas[d]; ++k) keep[pool[k]] = true;
    ++d;
  }

  std::vector<Segment> out = ds.segments();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].context_only = !(out[i].role == Role::RI || keep[i]);
  }
  return Dataset(std::move(out));
}

std::vector<SampleGroup> sample_groups(const Dataset& ds, const std::vector<std::size_t>& pool) {
  std::vector<SampleGroup> groups;
  std::map<std::string, std::size_t> by_sequence;
  for (std::size_t i : pool) {
    const Segment& s = ds.segments()[i];
    if (s.sequence_id) {
      auto [it, inserted] = by_sequence.emplace(*s.sequence_id, groups.size());
      if (inserted) groups.push_back(SampleGroup{{}, {}, 1});
      groups[it->second].members.push_back(i);
    } else {
      groups.push_back(SampleGroup{{i}, {}, s.label()});
    }
  }
  for (const auto& [seq_id, g] : by_sequence) {
    const OirSequence* q = ds.find_sequence(seq_id);
    for (const auto* ids : {&q->ts_ids, &q->ri_ids, &q->rs_ids}) {
      for (const auto& id : *ids) {
        const std::size_t idx = ds.index_of(id);
        if (std::find(groups[g].members.begin(), groups[g].members.end(), idx) == groups[g].members.end()) {
          groups[g].passengers.push_back(idx);
        }
      }
    }
  }
  return groups;
}

Dataset split_dataset(const Dataset& ds, SplitRatios ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0) {
    throw Error(Errc::BadRatios, "split ratios must be non-negative and sum to 1");
  }
  const auto groups = sample_groups(ds, ds.classifiable_indices());
  const std::vector<double> weights = {ratios.train, ratios.val, ratios.test};

  std::map<std::string, Split> assignment;
  Rng rng(seed);
  for (int label : {1, 0}) {
    std::vector<std::size_t> ids;
    std::size_t members = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (groups[g].label == label) {
        ids.push_back(g);
        members += groups[g].members.size();
      }
    }
    if (members == 0) {
      throw Error(Errc::EmptyClass, label == 1 ? "no RI segments to split" : "no RD segments to split");
    }
    const auto target = largest_remainder(members, weights);
    std::array<std::size_t, 3> filled{0, 0, 0};
    rng.shuffle(std::span<std::size_t>(ids));
    for (std::size_t g : ids) {
      std::size_t best = 0;
      double best_deficit = -1e300;
      for (std::size_t k = 0; k < 3; ++k) {
        if (weights[k] <= 0.0) continue;
        const double deficit = static_cast<double>(target[k]) - static_cast<double>(filled[k]);
        if (deficit > best_deficit) {
          best_deficit = deficit;
          best = k;
        }
      }
      filled[best] += groups[g].members.size();
      const Split split = static_cast<Split>(best);
      for (std::size_t i : groups[g].members) assignment[ds.segments()[i].segment_id] = split;
      for (std::size_t i : groups[g].passengers) assignment[ds.segments()[i].segment_id] = split;
    }
  }
  return Dataset(ds.segments(), std::move(assignment));
}

}  // namespace oir::corpus
