#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "oir/context.hpp"
#include "oir/error.hpp"
#include "oir/linguistic.hpp"
#include "oir/prosody.hpp"
#include "oir/rng.hpp"

using namespace oir;
using namespace oir::context;
using oir::test::seg;

namespace {

corpus::Segment words(const std::string& id, std::size_t n, double t) {
  std::string spec;
  for (std::size_t k = 0; k < n; ++k) spec += id + "w" + std::to_string(k) + " ";
  return seg(id, "d", "A", t, t + 0.5, oir::test::toks(spec));
}

std::vector<corpus::Segment> random_dialogue(Rng& rng, std::size_t n) {
  std::vector<corpus::Segment> v;
  for (std::size_t k = 0; k < n; ++k) v.push_back(words("s" + std::to_string(k), 1 + rng.below(12), static_cast<double>(k)));
  return v;
}

// Segments the budget admits, by walking the expansion order i-1, i+1, i-2, ...
std::set<std::size_t> expected_members(const std::vector<corpus::Segment>& segs, std::size_t i, const ContextConfig& c) {
  const bool past = c.mode == Mode::Past || c.mode == Mode::Full;
  const bool future = c.mode == Mode::Future || c.mode == Mode::Full;
  const std::size_t limit = c.window ? static_cast<std::size_t>(*c.window) : segs.size();
  std::vector<std::size_t> order;
  for (std::size_t j = 1; j <= limit; ++j) {
    if (past && j <= i) order.push_back(i - j);
    if (future && i + j < segs.size()) order.push_back(i + j);
  }
  std::set<std::size_t> in = {i};
  std::size_t used = segs[i].tokens.size();
  for (std::size_t k : order) {
    const std::size_t cost = segs[k].tokens.size() + 1;
    if (used + cost > static_cast<std::size_t>(c.max_tokens)) break;
    used += cost;
    in.insert(k);
  }
  return in;
}

}  // namespace

TEST_SUITE("context") {
  TEST_CASE("window zero and Current give the target alone") {
    const std::vector<corpus::Segment> v = {words("a", 3, 0), words("b", 2, 1), words("c", 4, 2)};
    for (const ContextConfig c : {ContextConfig{Mode::Full, 0}, ContextConfig{Mode::Current, 5}}) {
      const auto s = assemble_micro_context(v, 1, c);
      CHECK(s.tokens == std::vector<std::string>{kCls, "bw0", "bw1", kEos});
      CHECK(s.segment_ids == std::vector<std::string>{"b"});
    }
  }

  TEST_CASE("window one, Full, ample budget") {
    const std::vector<corpus::Segment> v = {words("a", 1, 0), words("b", 1, 1), words("c", 1, 2), words("d", 1, 3)};
    const auto s = assemble_micro_context(v, 1, {Mode::Full, 1});
    CHECK(s.text() == "[CLS] aw0 [SEP] bw0 [SEP] cw0 [EOS]");
    CHECK(s.target_position == 1);
  }

  TEST_CASE("tight budget drops the last added neighbour") {
    const std::vector<corpus::Segment> v = {words("a", 6, 0), words("b", 4, 1), words("c", 6, 2)};
    const auto s = assemble_micro_context(v, 1, {Mode::Full, std::nullopt, 10});
    CHECK(s.segment_ids == std::vector<std::string>{"b"});
    const auto wider = assemble_micro_context(v, 1, {Mode::Full, std::nullopt, 11});
    CHECK(wider.segment_ids == std::vector<std::string>{"a", "b"});
  }

  TEST_CASE("errors") {
    const std::vector<corpus::Segment> v = {words("a", 5, 0)};
    CHECK_THROWS_WITH_AS(assemble_micro_context(v, 1, {}), doctest::Contains("IndexOutOfRange"), Error);
    CHECK_THROWS_WITH_AS(assemble_micro_context(v, 0, {Mode::Full, 2, 4}), doctest::Contains("TargetExceedsBudget"),
                         Error);
    CHECK_THROWS_WITH_AS(assemble_micro_context(v, 0, {Mode::Full, 2, 2}), doctest::Contains("BadConfig"), Error);
    CHECK_THROWS_WITH_AS(assemble_micro_context(v, 0, {Mode::Full, -1}), doctest::Contains("BadConfig"), Error);
  }

  TEST_CASE("randomized properties over 1000 cases") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto segs = random_dialogue(rng, 1 + rng.below(15));
      const std::size_t i = rng.below(segs.size());
      ContextConfig c;
      c.mode = static_cast<Mode>(rng.below(4));
      c.window = rng.bernoulli(0.3) ? std::nullopt : std::optional<int>(static_cast<int>(rng.below(5)));
      c.max_tokens = static_cast<int>(segs[i].tokens.size() + rng.below(40));
      if (c.max_tokens < 3) c.max_tokens = 3;
      if (static_cast<int>(segs[i].tokens.size()) > c.max_tokens) continue;
      const auto s = assemble_micro_context(segs, i, c);
      CAPTURE(trial);

      REQUIRE(s.tokens.size() >= 3);
      CHECK(s.tokens.front() == kCls);
      CHECK(s.tokens.back() == kEos);
      CHECK(s.tokens.size() <= static_cast<std::size_t>(c.max_tokens) + 2);

      // Chronological, contiguous, target complete.
      std::vector<std::size_t> idx;
      for (const auto& id : s.segment_ids) idx.push_back(std::stoul(id.substr(1)));
      CHECK(std::is_sorted(idx.begin(), idx.end()));
      CHECK(s.segment_ids[s.target_position] == segs[i].segment_id);
      for (const auto& t : segs[i].tokens) CHECK(std::count(s.tokens.begin(), s.tokens.end(), t.text) == 1);

      for (std::size_t k : idx) {
        if (c.mode == Mode::Past) CHECK(segs[k].t_start <= segs[i].t_start);
        if (c.mode == Mode::Future) CHECK(segs[k].t_start >= segs[i].t_start);
        if (c.mode == Mode::Current || c.window == 0) CHECK(k == i);
      }

      const auto want = expected_members(segs, i, c);
      CHECK(std::set<std::size_t>(idx.begin(), idx.end()) == want);

      // A larger budget keeps everything already included.
      ContextConfig bigger = c;
      bigger.max_tokens += static_cast<int>(1 + rng.below(20));
      const auto s2 = assemble_micro_context(segs, i, bigger);
      for (const auto& id : s.segment_ids) {
        CHECK(std::find(s2.segment_ids.begin(), s2.segment_ids.end(), id) != s2.segment_ids.end());
      }
    }
  }

  TEST_CASE("dataset overload stays within the dialogue") {
    std::vector<corpus::Segment> v = {seg("a", "d1", "A", 0, 1, oir::test::toks("een")),
                                      seg("b", "d2", "A", 0, 1, oir::test::toks("twee")),
                                      seg("c", "d2", "B", 1.5, 2, oir::test::toks("drie"))};
    const corpus::Dataset ds(v);
    const auto s = assemble_micro_context(ds, ds.index_of("b"), {Mode::Full, std::nullopt});
    CHECK(s.segment_ids == std::vector<std::string>{"b", "c"});
  }

  TEST_CASE("labels") {
    CHECK(ContextConfig{Mode::Full, 2}.label() == "Full(2)");
    CHECK(ContextConfig{Mode::Past, std::nullopt}.label() == "Past(max)");
    CHECK(ContextConfig{Mode::Current, 0}.label() == "Current");
  }

  TEST_CASE("cross-segment masking by mode") {
    FeatureVector fv;
    for (const auto& n : prosody::prosodic_feature_names()) fv.set(n, 1.0);
    linguistic::BigramVocabulary vocab;
    vocab.pairs.assign(std::begin(linguistic::kAnchorBigrams), std::end(linguistic::kAnchorBigrams));
    for (const auto& n : linguistic::linguistic_feature_names(vocab)) fv.set(n, 1.0);

    const auto full = select_cross_segment_features({Mode::Full, 2}, fv);
    CHECK(full.values() == fv.values());
    CHECK(full.present() == fv.present());

    const auto cur = select_cross_segment_features({Mode::Current, 0}, fv);
    const auto past = select_cross_segment_features({Mode::Past, 2}, fv);
    const auto fut = select_cross_segment_features({Mode::Future, 2}, fv);
    CHECK_FALSE(past.is_present("other_speaker_self_rep_ratio"));
    CHECK(fut.is_present("other_speaker_self_rep_ratio"));
    CHECK(past.is_present("other_repetition_ratio"));
    CHECK_FALSE(fut.is_present("other_repetition_ratio"));
    CHECK(past.is_present("latency_prev"));
    CHECK_FALSE(past.is_present("latency_next"));
    CHECK(fut.is_present("latency_next"));
    std::size_t cross = 0;
    for (std::size_t k = 0; k < fv.size(); ++k) {
      const auto scope = feature_scope(fv.names()[k]);
      if (scope == FeatureScope::Current) {
        CHECK(cur.present()[k] == 1);
      } else {
        ++cross;
        CHECK(cur.present()[k] == 0);
      }
    }
    CHECK(cross >= 10);
  }

  TEST_CASE("context JSONL lines") {
    const auto ds = oir::test::open_request_example();
    const auto dir = std::filesystem::temp_directory_path() / "oir_ctx";
    write_context_jsonl(ds, {Mode::Past, 2}, {ds.index_of("ri")}, dir / "c.jsonl");
    std::ifstream in(dir / "c.jsonl");
    std::string line;
    REQUIRE(std::getline(in, line));
    const auto j = nlohmann::json::parse(line);
    CHECK(j["segment_id"] == "ri");
    CHECK(j["context_text"] == "[CLS] op dat driehoek [SEP] wat zei je ? [EOS]");
    CHECK(j["segments"] == nlohmann::json::array({"ts", "ri"}));
    CHECK_FALSE(std::getline(in, line));
  }
}
