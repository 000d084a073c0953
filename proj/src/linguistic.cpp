#include "oir/linguistic.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "oir/error.hpp"
#include "oir/rng.hpp"

namespace oir::linguistic {

namespace {

constexpr const char* kLemmas[] = {"wat", "kunnen", "zitten", "zijn", "nog", "wachten", "aan"};
constexpr corpus::Nonverbal kNonverbals[] = {corpus::Nonverbal::Laugh, corpus::Nonverbal::Sigh,
                                             corpus::Nonverbal::Breath, corpus::Nonverbal::MouthNoise};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool content_token(const corpus::Token& t) { return t.lexical() && t.pos != Pos::PUNCT; }

std::string match_key(const corpus::Token& t) { return lower(t.lemma.empty() ? t.text : t.lemma); }

std::set<std::string> lemma_set(std::span<const corpus::Segment* const> segs) {
  std::set<std::string> out;
  for (const corpus::Segment* s : segs) {
    for (const corpus::Token& t : s->tokens) {
      if (content_token(t)) out.insert(match_key(t));
    }
  }
  return out;
}

// Fraction of content tokens of `segs` whose lemma is in `pool`; nullopt
// when `segs` has no content tokens.
std::optional<double> repeated_fraction(std::span<const corpus::Segment* const> segs,
                                        const std::set<std::string>& pool) {
  std::size_t hit = 0, total = 0;
  for (const corpus::Segment* s : segs) {
    for (const corpus::Token& t : s->tokens) {
      if (!content_token(t)) continue;
      ++total;
      if (pool.count(match_key(t))) ++hit;
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(hit) / static_cast<double>(total);
}

std::string bigram_key(const std::pair<Pos, Pos>& p) {
  return std::string(corpus::pos_name(p.first)) + "\x1f" + std::string(corpus::pos_name(p.second));
}

}  // namespace

std::string BigramVocabulary::version() const {
  std::string s;
  for (const auto& p : pairs) s += bigram_key(p) + "\x1e";
  return hex64(fnv1a64(s));
}

bool BigramVocabulary::contains(Pos a, Pos b) const {
  return std::find(pairs.begin(), pairs.end(), std::pair(a, b)) != pairs.end();
}

std::string bigram_feature_name(Pos a, Pos b) {
  return "bigram_" + std::string(corpus::pos_name(a)) + "__" + std::string(corpus::pos_name(b));
}

std::vector<Pos> pos_sequence(const corpus::Segment& seg) {
  std::vector<Pos> out;
  for (const corpus::Token& t : seg.tokens) {
    if (t.lexical()) out.push_back(t.pos);
  }
  return out;
}

BigramVocabulary select_frequent_bigrams(const corpus::Dataset& ds, std::span<const std::size_t> train,
                                         std::size_t k) {
  if (k < 2) throw Error(Errc::BadConfig, "bigram vocabulary needs k >= 2");
  std::map<std::pair<Pos, Pos>, std::size_t> df;
  std::vector<std::string> ids;
  for (std::size_t i : train) {
    const corpus::Segment& seg = ds.segments().at(i);
    ids.push_back(seg.segment_id);
    const auto seq = pos_sequence(seg);
    std::set<std::pair<Pos, Pos>> seen;
    for (std::size_t j = 0; j + 1 < seq.size(); ++j) seen.emplace(seq[j], seq[j + 1]);
    for (const auto& p : seen) ++df[p];
  }
  std::vector<std::pair<std::pair<Pos, Pos>, std::size_t>> ranked(df.begin(), df.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return bigram_key(a.first) < bigram_key(b.first);
  });

  BigramVocabulary v;
  for (const auto& [p, n] : ranked) {
    if (v.pairs.size() == k) break;
    v.pairs.push_back(p);
  }
  for (const auto& anchor : kAnchorBigrams) {
    if (!v.contains(anchor.first, anchor.second)) v.pairs.push_back(anchor);
  }
  std::sort(ids.begin(), ids.end());
  std::string joined;
  for (const auto& id : ids) joined += id + "\n";
  v.source_hash = hex64(fnv1a64(joined));
  return v;
}

std::string vocabulary_json(const BigramVocabulary& v) {
  nlohmann::ordered_json j;
  j["version"] = v.version();
  j["source_hash"] = v.source_hash;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& [a, b] : v.pairs) arr.push_back({corpus::pos_name(a), corpus::pos_name(b)});
  j["bigrams"] = arr;
  return j.dump(2) + "\n";
}

BigramVocabulary parse_vocabulary_json(const std::string& text) {
  BigramVocabulary v;
  try {
    const auto j = nlohmann::json::parse(text);
    v.source_hash = j.at("source_hash").get<std::string>();
    for (const auto& pair : j.at("bigrams")) {
      auto a = corpus::parse_pos(pair.at(0).get<std::string>());
      auto b = corpus::parse_pos(pair.at(1).get<std::string>());
      if (!a || !b) throw Error(Errc::DataError, "unknown POS tag in bigram vocabulary");
      v.pairs.emplace_back(*a, *b);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::DataError, std::string("bad bigram vocabulary: ") + e.what());
  }
  return v;
}

void write_vocabulary(const BigramVocabulary& v, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << vocabulary_json(v);
}

BigramVocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_vocabulary_json(ss.str());
}

FeatureVector segment_features(const corpus::Segment& seg, const BigramVocabulary& vocab) {
  if (seg.tokens.empty()) throw Error(Errc::EmptySegment, "segment " + seg.segment_id + " has no tokens");
  FeatureVector fv;

  const auto seq = pos_sequence(seg);
  std::set<std::pair<Pos, Pos>> present;
  for (std::size_t j = 0; j + 1 < seq.size(); ++j) present.emplace(seq[j], seq[j + 1]);
  for (const auto& [a, b] : vocab.pairs) fv.set(bigram_feature_name(a, b), present.count({a, b}) ? 1.0 : 0.0);

  for (Pos tag : corpus::kRatioTags) {
    const std::string name = "ratio_" + std::string(corpus::pos_name(tag));
    if (seq.empty()) {
      fv.set_missing(name);
      fv.mutable_values().back() = 0.0;
      continue;
    }
    const auto n = std::count(seq.begin(), seq.end(), tag);
    fv.set(name, static_cast<double>(n) / static_cast<double>(seq.size()));
  }

  std::set<std::string> lemmas;
  for (const corpus::Token& t : seg.tokens) {
    if (t.lexical()) lemmas.insert(lower(t.lemma));
  }
  for (const char* l : kLemmas) fv.set(std::string("contains_") + l, lemmas.count(l) ? 1.0 : 0.0);

  bool question = false;
  for (auto it = seg.tokens.rbegin(); it != seg.tokens.rend(); ++it) {
    if (it->lexical()) {
      question = !it->text.empty() && it->text.back() == '?';
      break;
    }
  }
  fv.set("ends_with_question_mark", question ? 1.0 : 0.0);

  for (corpus::Nonverbal nv : kNonverbals) {
    const bool has = std::any_of(seg.tokens.begin(), seg.tokens.end(),
                                 [&](const corpus::Token& t) { return t.nonverbal == nv; });
    fv.set("contains_" + std::string(corpus::nonverbal_name(nv)), has ? 1.0 : 0.0);
  }
  return fv;
}

double other_repetition_ratio(const corpus::Segment& seg, std::span<const corpus::Segment* const> prior_turn) {
  const corpus::Segment* self[] = {&seg};
  return repeated_fraction(self, lemma_set(prior_turn)).value_or(0.0);
}

std::vector<std::size_t> repeated_tokens(const corpus::Segment& seg,
                                         std::span<const corpus::Segment* const> prior_turn) {
  const auto pool = lemma_set(prior_turn);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < seg.tokens.size(); ++i) {
    if (content_token(seg.tokens[i]) && pool.count(match_key(seg.tokens[i]))) out.push_back(i);
  }
  return out;
}

double coref_used_ratio(const corpus::Segment& seg) {
  std::size_t coref = 0, total = 0;
  for (const corpus::Token& t : seg.tokens) {
    if (!content_token(t)) continue;
    ++total;
    if (t.is_coref) ++coref;
  }
  return total ? static_cast<double>(coref) / static_cast<double>(total) : 0.0;
}

SolutionRepetition solution_repetition(const corpus::Segment& target,
                                       std::span<const corpus::Segment* const> earlier_turn,
                                       std::span<const corpus::Segment* const> following_turn) {
  SolutionRepetition r;
  const corpus::Segment* self[] = {&target};
  const auto self_rep = repeated_fraction(following_turn, lemma_set(earlier_turn));
  const auto other_rep = repeated_fraction(following_turn, lemma_set(self));
  if (!self_rep) return r;
  r.present = true;
  r.self_rep = *self_rep;
  r.other_rep = *other_rep;
  return r;
}

namespace {

std::vector<const corpus::Segment*> pointers(const corpus::Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<const corpus::Segment*> out;
  for (std::size_t i : idx) out.push_back(&ds.segments()[i]);
  return out;
}

}  // namespace

FeatureVector extract_linguistic(const corpus::Dataset& ds, std::size_t index, const BigramVocabulary& vocab) {
  const corpus::Segment& seg = ds.segments().at(index);
  FeatureVector fv = segment_features(seg, vocab);

  const auto prior_idx = corpus::prior_other_turn(ds, index);
  const auto prior = pointers(ds, prior_idx);
  if (prior.empty()) {
    fv.set_missing("other_repetition_ratio");
    fv.mutable_values().back() = 0.0;
  } else {
    fv.set("other_repetition_ratio", other_repetition_ratio(seg, prior));
  }
  fv.set("coref_used_ratio", coref_used_ratio(seg));

  const auto following = pointers(ds, corpus::following_other_turn(ds, index));
  // The following speaker's own earlier turn is the prior other-speaker turn
  // when the same person produced it.
  std::vector<const corpus::Segment*> earlier;
  if (!following.empty() && !prior.empty() && prior.front()->speaker == following.front()->speaker) earlier = prior;
  const SolutionRepetition rep = solution_repetition(seg, earlier, following);
  if (rep.present) {
    fv.set("other_speaker_self_rep_ratio", rep.self_rep);
    fv.set("other_speaker_other_rep_ratio", rep.other_rep);
  } else {
    fv.set_missing("other_speaker_self_rep_ratio");
    fv.mutable_values().back() = 0.0;
    fv.set_missing("other_speaker_other_rep_ratio");
    fv.mutable_values().back() = 0.0;
  }
  return fv;
}

std::vector<std::string> linguistic_feature_names(const BigramVocabulary& vocab) {
  std::vector<std::string> names;
  for (const auto& [a, b] : vocab.pairs) names.push_back(bigram_feature_name(a, b));
  for (Pos tag : corpus::kRatioTags) names.push_back("ratio_" + std::string(corpus::pos_name(tag)));
  for (const char* l : kLemmas) names.push_back(std::string("contains_") + l);
  names.push_back("ends_with_question_mark");
  for (corpus::Nonverbal nv : kNonverbals) names.push_back("contains_" + std::string(corpus::nonverbal_name(nv)));
  names.push_back("other_repetition_ratio");
  names.push_back("coref_used_ratio");
  names.push_back("other_speaker_self_rep_ratio");
  names.push_back("other_speaker_other_rep_ratio");
  return names;
}

FeatureScope linguistic_scope(std::string_view name) {
  if (name == "other_repetition_ratio" || name == "coref_used_ratio") return FeatureScope::Past;
  if (name == "other_speaker_self_rep_ratio" || name == "other_speaker_other_rep_ratio") return FeatureScope::Future;
  return FeatureScope::Current;
}

}  // namespace oir::linguistic
