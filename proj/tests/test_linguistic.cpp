#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "oir/error.hpp"
#include "oir/linguistic.hpp"
#include "oir/rng.hpp"
#include "oir/synth.hpp"

using namespace oir;
using namespace oir::linguistic;
using corpus::Pos;
using corpus::Role;
using oir::test::seg;
using oir::test::toks;

namespace {

std::vector<const corpus::Segment*> ptrs(const corpus::Dataset& ds, std::initializer_list<const char*> ids) {
  std::vector<const corpus::Segment*> v;
  for (const char* id : ids) v.push_back(ds.find(id));
  return v;
}

BigramVocabulary anchors_only() {
  const corpus::Dataset empty;
  return select_frequent_bigrams(empty, {}, 2);
}

}  // namespace

TEST_SUITE("linguistic") {
  TEST_CASE("open-request example under lemma matching") {
    const auto ds = oir::test::open_request_example();
    const auto& ri = *ds.find("ri");
    const auto& rs = *ds.find("rs");
    CHECK(other_repetition_ratio(rs, ptrs(ds, {"ts"})) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(other_repetition_ratio(ri, ptrs(ds, {"ts"})) == 0.0);

    BigramVocabulary vocab = anchors_only();
    vocab.pairs.push_back({Pos::PRON_Int, Pos::VERB});
    const auto fv = segment_features(ri, vocab);
    CHECK(fv.value("ends_with_question_mark") == 1.0);
    CHECK(fv.value("contains_wat") == 1.0);
    CHECK(fv.value(bigram_feature_name(Pos::PRON_Int, Pos::VERB)) == 1.0);

    const auto sr = solution_repetition(ri, ptrs(ds, {"ts"}), ptrs(ds, {"rs"}));
    CHECK(sr.present);
    CHECK(sr.self_rep == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(sr.other_rep == 0.0);

    // The dataset-level extractor finds the same turns on its own.
    const auto full = extract_linguistic(ds, ds.index_of("ri"), vocab);
    CHECK(full.value("other_speaker_self_rep_ratio") == doctest::Approx(2.0 / 3.0));
    CHECK(full.value("other_speaker_other_rep_ratio") == 0.0);
    CHECK(full.value("other_repetition_ratio") == 0.0);
  }

  TEST_CASE("question mark glued to the last word counts") {
    const auto s = seg("x", "d", "A", 0, 1, toks("wat/wat/PRON_Int zei/zeggen/VERB je?/je/PRON_Prs"));
    CHECK(segment_features(s, anchors_only()).value("ends_with_question_mark") == 1.0);
  }

  TEST_CASE("repeated tokens index content tokens") {
    const auto ds = oir::test::open_request_example();
    CHECK(repeated_tokens(*ds.find("rs"), ptrs(ds, {"ts"})) == std::vector<std::size_t>{0, 2});
    CHECK(repeated_tokens(*ds.find("ri"), ptrs(ds, {"ts"})).empty());
  }

  TEST_CASE("repetition edge cases") {
    const auto a = seg("a", "d", "A", 0, 1, toks("de/de/DET grote/groot/ADJ vorm/vorm/NOUN ././PUNCT"));
    const auto b = seg("b", "d", "B", 1, 2, toks("Groot/groot/ADJ !/!/PUNCT"));
    const corpus::Segment* pa[] = {&a};
    CHECK(other_repetition_ratio(a, pa) == 1.0);
    CHECK(other_repetition_ratio(b, pa) == 1.0);  // lowercased lemma, punctuation ignored
    CHECK(other_repetition_ratio(a, {}) == 0.0);
    const auto sr = solution_repetition(a, {}, {});
    CHECK_FALSE(sr.present);
    CHECK(sr.self_rep == 0.0);
    const corpus::Segment* echo[] = {&a};
    CHECK(solution_repetition(a, {}, echo).other_rep == 1.0);
  }

  TEST_CASE("repetition is monotone in the prior turn") {
    Rng rng(3);
    const char* words[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int trial = 0; trial < 200; ++trial) {
      auto random_seg = [&](const char* id, std::size_t n) {
        std::string spec;
        for (std::size_t i = 0; i < n; ++i) {
          const char* w = words[rng.below(8)];
          spec += std::string(w) + "/" + w + "/NOUN ";
        }
        return seg(id, "d", "A", 0, 1, toks(spec));
      };
      const auto target = random_seg("t", 1 + rng.below(6));
      auto prior = random_seg("p", 1 + rng.below(4));
      const corpus::Segment* p1[] = {&prior};
      const double before = other_repetition_ratio(target, p1);
      const char* w = words[rng.below(8)];
      prior.tokens.push_back(oir::test::tok(w, w, Pos::NOUN));
      const double after = other_repetition_ratio(target, p1);
      CHECK(after >= before);
      CHECK(after <= 1.0);
    }
  }

  TEST_CASE("coref ratio") {
    CHECK(coref_used_ratio(seg("x", "d", "A", 0, 1, toks("ik/ik/PRON_Prs zie/zien/VERB"))) == 0.0);
    CHECK(coref_used_ratio(seg("x", "d", "A", 0, 1, toks("zie/zien/VERB hem/hem/COREF die/die/COREF ja/ja/INTJ ././PUNCT"))) ==
          0.5);
    CHECK(coref_used_ratio(seg("x", "d", "A", 0, 1, toks("hem/hem/COREF"))) == 1.0);
  }

  TEST_CASE("tag ratios sum to one over tagged tokens") {
    const auto s = seg("x", "d", "A", 0, 1,
                       toks("ik/ik/PRON_Prs zie/zien/VERB de/de/DET grote/groot/ADJ vorm/vorm/NOUN ././PUNCT"));
    const auto fv = segment_features(s, anchors_only());
    double sum = 0.0;
    for (Pos p : corpus::kRatioTags) {
      const double r = fv.value("ratio_" + std::string(corpus::pos_name(p)));
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
      sum += r;
    }
    CHECK(sum == doctest::Approx(1.0));
    CHECK(fv.value(bigram_feature_name(Pos::PRON_Prs, Pos::VERB)) == 1.0);
    CHECK(fv.value(bigram_feature_name(Pos::VERB, Pos::COREF)) == 0.0);
  }

  TEST_CASE("degenerate segments") {
    const auto one = seg("x", "d", "A", 0, 1, toks("ja/ja/INTJ"));
    const auto fv = segment_features(one, anchors_only());
    for (const auto& [a, b] : anchors_only().pairs) CHECK(fv.value(bigram_feature_name(a, b)) == 0.0);

    corpus::Token laugh;
    laugh.text = "#laugh#";
    laugh.nonverbal = corpus::Nonverbal::Laugh;
    const auto only_laugh = seg("y", "d", "A", 0, 1, {laugh});
    const auto lf = segment_features(only_laugh, anchors_only());
    CHECK(lf.value("contains_laugh") == 1.0);
    CHECK(lf.value("ratio_NOUN") == 0.0);
    CHECK(lf.value("ends_with_question_mark") == 0.0);

    const auto empty = seg("z", "d", "A", 0, 1, {});
    CHECK_THROWS_WITH_AS(segment_features(empty, anchors_only()), doctest::Contains("EmptySegment"), Error);
  }

  TEST_CASE("vocabulary selection") {
    const auto s = seg("x", "d", "A", 0, 1, toks("wat/wat/PRON_Int zei/zeggen/VERB"));
    const corpus::Dataset one({s});
    const std::size_t idx[] = {0};
    const auto v = select_frequent_bigrams(one, idx, 2);
    CHECK(v.contains(Pos::PRON_Int, Pos::VERB));
    CHECK(v.contains(Pos::PRON_Prs, Pos::VERB));
    CHECK(v.contains(Pos::VERB, Pos::COREF));

    synth::SynthOptions o;
    o.n_dialogues = 8;
    o.seed = 2;
    const auto sc = synth::synth_corpus(o);
    std::vector<std::size_t> all(sc.dataset.segments().size());
    std::iota(all.begin(), all.end(), 0);
    const auto v1 = select_frequent_bigrams(sc.dataset, all, 20);
    const auto v2 = select_frequent_bigrams(sc.dataset, all, 20);
    CHECK(v1.pairs == v2.pairs);
    CHECK(v1.version() == v2.version());
    CHECK(v1.pairs.size() >= 20);
    CHECK(v1.pairs.size() <= 22);
    std::set<std::pair<Pos, Pos>> uniq(v1.pairs.begin(), v1.pairs.end());
    CHECK(uniq.size() == v1.pairs.size());

    const auto back = parse_vocabulary_json(vocabulary_json(v1));
    CHECK(back.pairs == v1.pairs);
    CHECK(back.source_hash == v1.source_hash);
  }

  TEST_CASE("noise-free synthetic RIs show every lexical cue") {
    synth::SynthOptions o;
    o.n_dialogues = 10;
    o.ri_fraction = 0.5;
    o.noise_level = 0.0;
    o.seed = 1;
    const auto sc = synth::synth_corpus(o);
    const auto& ds = sc.dataset;
    std::vector<std::size_t> all(ds.segments().size());
    std::iota(all.begin(), all.end(), 0);
    const auto vocab = select_frequent_bigrams(ds, all, 20);
    std::size_t n = 0, detected = 0;
    for (std::size_t i = 0; i < ds.segments().size(); ++i) {
      if (ds.segments()[i].role != Role::RI) continue;
      ++n;
      const auto fv = extract_linguistic(ds, i, vocab);
      detected += fv.value("ends_with_question_mark") == 1.0 && fv.value("contains_wat") == 1.0 &&
                  fv.value("other_repetition_ratio") > 0.0;
    }
    REQUIRE(n > 0);
    CHECK(detected == n);
  }

  TEST_CASE("features ignore unrelated records") {
    auto base = oir::test::open_request_example();
    std::vector<corpus::Segment> more = base.segments();
    more.push_back(seg("o1", "d2", "C", 0, 1, toks("wat/wat/PRON_Int ?/?/PUNCT")));
    more.push_back(seg("o2", "d2", "D", 1.5, 2, toks("op/op/ADP")));
    const corpus::Dataset big(more);
    const auto vocab = anchors_only();
    const auto a = extract_linguistic(base, base.index_of("ri"), vocab);
    const auto b = extract_linguistic(big, big.index_of("ri"), vocab);
    CHECK(a.values() == b.values());
    CHECK(a.names() == linguistic_feature_names(vocab));
  }
}
