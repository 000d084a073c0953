#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oir/corpus.hpp"

namespace oir::test {

inline corpus::Token tok(std::string text, std::string lemma, corpus::Pos pos) {
  corpus::Token t;
  t.text = std::move(text);
  t.lemma = std::move(lemma);
  t.pos = pos;
  t.is_coref = pos == corpus::Pos::COREF;
  return t;
}

// Tokens from "text/lemma/POS" triples separated by spaces; a bare word is
// its own lemma with POS OTHER.
inline std::vector<corpus::Token> toks(const std::string& spec) {
  std::vector<corpus::Token> out;
  std::istringstream in(spec);
  std::string w;
  while (in >> w) {
    const auto a = w.find('/');
    if (a == std::string::npos) {
      out.push_back(tok(w, w, corpus::Pos::OTHER));
      continue;
    }
    const auto b = w.find('/', a + 1);
    out.push_back(tok(w.substr(0, a), w.substr(a + 1, b - a - 1), corpus::parse_pos(w.substr(b + 1)).value()));
  }
  return out;
}

inline corpus::Segment seg(std::string id, std::string dialogue, std::string speaker, double t0, double t1,
                           std::vector<corpus::Token> tokens, corpus::Role role = corpus::Role::RD,
                           std::optional<std::string> sequence = std::nullopt,
                           std::optional<corpus::OirType> type = std::nullopt) {
  corpus::Segment s;
  s.segment_id = std::move(id);
  s.dialogue_id = std::move(dialogue);
  s.dyad_id = "dy_" + s.dialogue_id;
  s.speaker = std::move(speaker);
  s.t_start = t0;
  s.t_end = t1;
  s.tokens = std::move(tokens);
  s.transcript = corpus::render_transcript(s.tokens);
  s.role = role;
  s.sequence_id = std::move(sequence);
  if (role == corpus::Role::RI && !type) type = corpus::OirType::OpenRequest;
  s.oir_type = type;
  s.audio_ref = {"audio/" + s.dialogue_id + ".wav", 0};
  return s;
}

// Open-request example: TS "op dat driehoek", RI "wat zei je?", RS "op die driehoek".
inline corpus::Dataset open_request_example() {
  using corpus::Role;
  std::vector<corpus::Segment> v;
  v.push_back(seg("ts", "d1", "A", 0.0, 1.0, toks("op/op/ADP dat/dat/PRON_Dem driehoek/driehoek/NOUN"), Role::TS, "q1"));
  v.push_back(seg("ri", "d1", "B", 1.3, 2.0, toks("wat/wat/PRON_Int zei/zeggen/VERB je/je/PRON_Prs ?/?/PUNCT"),
                  Role::RI, "q1", corpus::OirType::OpenRequest));
  v.push_back(seg("rs", "d1", "A", 2.2, 3.0, toks("op/op/ADP die/die/PRON_Dem driehoek/driehoek/NOUN"), Role::RS, "q1"));
  return corpus::Dataset(std::move(v));
}

}  // namespace oir::test
