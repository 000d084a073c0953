#include "oir/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "oir/error.hpp"
#include "oir/rng.hpp"

namespace oir::synth {

using corpus::Nonverbal;
using corpus::Pos;
using corpus::Role;
using corpus::Segment;
using corpus::Token;

namespace {

struct Word {
  const char* text;
  const char* lemma;
  Pos pos;
};

constexpr Word kDets[] = {{"de", "de", Pos::DET}, {"het", "het", Pos::DET}, {"een", "een", Pos::DET}};
constexpr Word kAdjs[] = {{"rode", "rood", Pos::ADJ},    {"blauwe", "blauw", Pos::ADJ}, {"groene", "groen", Pos::ADJ},
                          {"gele", "geel", Pos::ADJ},    {"grote", "groot", Pos::ADJ},  {"kleine", "klein", Pos::ADJ},
                          {"lange", "lang", Pos::ADJ},   {"smalle", "smal", Pos::ADJ}};
constexpr Word kNouns[] = {{"driehoek", "driehoek", Pos::NOUN}, {"cirkel", "cirkel", Pos::NOUN},
                           {"vierkant", "vierkant", Pos::NOUN}, {"ster", "ster", Pos::NOUN},
                           {"blok", "blok", Pos::NOUN},         {"lijn", "lijn", Pos::NOUN},
                           {"hoek", "hoek", Pos::NOUN},         {"kant", "kant", Pos::NOUN},
                           {"vorm", "vorm", Pos::NOUN},         {"rand", "rand", Pos::NOUN},
                           {"punt", "punt", Pos::NOUN},         {"pijl", "pijl", Pos::NOUN},
                           {"boog", "boog", Pos::NOUN},         {"kruis", "kruis", Pos::NOUN}};
constexpr Word kVerbs[] = {{"leg", "leggen", Pos::VERB},     {"pak", "pakken", Pos::VERB},
                           {"zie", "zien", Pos::VERB},       {"draai", "draaien", Pos::VERB},
                           {"schuif", "schuiven", Pos::VERB}, {"zet", "zetten", Pos::VERB}};
constexpr Word kInfinitives[] = {{"zetten", "zetten", Pos::VERB}, {"leggen", "leggen", Pos::VERB},
                                 {"draaien", "draaien", Pos::VERB}, {"schuiven", "schuiven", Pos::VERB}};
constexpr Word kProns[] = {{"ik", "ik", Pos::PRON_Prs}, {"je", "je", Pos::PRON_Prs}, {"we", "we", Pos::PRON_Prs}};
constexpr Word kAdvs[] = {{"hier", "hier", Pos::ADV}, {"daar", "daar", Pos::ADV},   {"nu", "nu", Pos::ADV},
                          {"ook", "ook", Pos::ADV},   {"links", "links", Pos::ADV}, {"rechts", "rechts", Pos::ADV},
                          {"boven", "boven", Pos::ADV}};
constexpr Word kAdps[] = {{"op", "op", Pos::ADP}, {"naast", "naast", Pos::ADP}, {"onder", "onder", Pos::ADP},
                          {"bij", "bij", Pos::ADP}, {"aan", "aan", Pos::ADP}};
constexpr Word kAuxs[] = {{"kan", "kunnen", Pos::AUX}, {"moet", "moeten", Pos::AUX}, {"mag", "mogen", Pos::AUX}};
constexpr Word kIntjs[] = {{"ja", "ja", Pos::INTJ}, {"oke", "oke", Pos::INTJ}, {"nee", "nee", Pos::INTJ},
                           {"uh", "uh", Pos::INTJ}};

template <std::size_t N>
const Word& pick(Rng& rng, const Word (&list)[N]) {
  return list[rng.below(N)];
}

Token tok(const Word& w) {
  Token t;
  t.text = w.text;
  t.lemma = w.lemma;
  t.pos = w.pos;
  return t;
}

Token tok(const char* text, const char* lemma, Pos pos) { return tok(Word{text, lemma, pos}); }

Token punct(const char* p) { return tok(p, p, Pos::PUNCT); }

Token coref(const char* text) {
  Token t = tok(text, text, Pos::COREF);
  t.is_coref = true;
  return t;
}

Token nonverbal(Nonverbal n) {
  Token t;
  t.nonverbal = n;
  t.pos = Pos::OTHER;
  t.text = "#" + std::string(corpus::nonverbal_name(n)) + "#";
  return t;
}

using Tokens = std::vector<Token>;

// Noun phrase whose content lemmas avoid `avoid`.
Tokens noun_phrase(Rng& rng, const std::set<std::string>& avoid = {}) {
  Tokens np;
  const Word* det = &pick(rng, kDets);
  for (int tries = 0; tries < 8 && avoid.count(det->lemma); ++tries) det = &pick(rng, kDets);
  np.push_back(tok(*det));
  if (rng.bernoulli(0.7)) {
    const Word* adj = &pick(rng, kAdjs);
    for (int tries = 0; tries < 16 && avoid.count(adj->lemma); ++tries) adj = &pick(rng, kAdjs);
    np.push_back(tok(*adj));
  }
  const Word* noun = &pick(rng, kNouns);
  for (int tries = 0; tries < 32 && avoid.count(noun->lemma); ++tries) noun = &pick(rng, kNouns);
  np.push_back(tok(*noun));
  return np;
}

void append(Tokens& out, const Tokens& more) { out.insert(out.end(), more.begin(), more.end()); }

std::set<std::string> lemmas_of(const Tokens& toks) {
  std::set<std::string> s;
  for (const auto& t : toks) {
    if (t.lexical() && t.pos != Pos::PUNCT) s.insert(t.lemma);
  }
  return s;
}

// An ordinary declarative. `np_out` receives its first noun phrase.
Tokens declarative(Rng& rng, const std::set<std::string>& avoid, Tokens* np_out = nullptr, bool allow_short = true) {
  Tokens out;
  int tmpl = static_cast<int>(rng.below(allow_short ? 7 : 3));
  Tokens np = noun_phrase(rng, avoid);
  switch (tmpl) {
    case 0:  // ik leg de rode cirkel op het vierkant .
      out.push_back(tok(pick(rng, kProns)));
      out.push_back(tok(pick(rng, kVerbs)));
      append(out, np);
      out.push_back(tok(pick(rng, kAdps)));
      append(out, noun_phrase(rng, avoid));
      break;
    case 1:  // ja en dan pak je de ster .
      out.push_back(tok(pick(rng, kIntjs)));
      out.push_back(tok("en", "en", Pos::CCONJ));
      out.push_back(tok(pick(rng, kAdvs)));
      out.push_back(tok(pick(rng, kVerbs)));
      out.push_back(tok(pick(rng, kProns)));
      append(out, np);
      break;
    case 2:  // je kan de driehoek hier zetten .
      out.push_back(tok(pick(rng, kProns)));
      out.push_back(tok(pick(rng, kAuxs)));
      append(out, np);
      out.push_back(tok(pick(rng, kAdvs)));
      out.push_back(tok(pick(rng, kInfinitives)));
      break;
    case 3:  // oke .
      out.push_back(tok(pick(rng, kIntjs)));
      np.clear();
      break;
    case 4:  // de blauwe ster daar .
      append(out, np);
      out.push_back(tok(pick(rng, kAdvs)));
      break;
    case 5:  // die is groot .
      out.push_back(tok("die", "die", Pos::PRON_Dem));
      out.push_back(tok("is", "zijn", Pos::AUX));
      out.push_back(tok(pick(rng, kAdjs)));
      np.clear();
      break;
    default:  // ik leg hem naast de lijn .
      out.push_back(tok(pick(rng, kProns)));
      out.push_back(tok(pick(rng, kVerbs)));
      out.push_back(coref("hem"));
      out.push_back(tok(pick(rng, kAdps)));
      append(out, np);
      break;
  }
  if (rng.bernoulli(0.08)) {
    const Nonverbal nv[] = {Nonverbal::Laugh, Nonverbal::Breath, Nonverbal::Sigh, Nonverbal::MouthNoise};
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(rng.below(out.size() + 1)), nonverbal(nv[rng.below(4)]));
  }
  out.push_back(punct("."));
  if (np_out) *np_out = np;
  return out;
}

// A regular segment that nonetheless asks a "wat" question.
Tokens wat_question(Rng& rng) {
  Tokens out;
  out.push_back(tok("wat", "wat", Pos::PRON_Int));
  if (rng.bernoulli(0.5)) {
    out.push_back(tok("doen", "doen", Pos::VERB));
    out.push_back(tok("we", "we", Pos::PRON_Prs));
    out.push_back(tok(pick(rng, kAdvs)));
  } else {
    out.push_back(tok(pick(rng, kAuxs)));
    out.push_back(tok("ik", "ik", Pos::PRON_Prs));
    out.push_back(tok("daarna", "daarna", Pos::ADV));
  }
  out.push_back(punct("?"));
  return out;
}

Tokens repair_initiation(Rng& rng, const PlantedCues& cues, const Tokens& ts_np, const std::set<std::string>& ts_lemmas,
                         corpus::OirType& type) {
  Tokens out;
  Tokens np = cues.repetition && !ts_np.empty() ? ts_np : noun_phrase(rng, ts_lemmas);
  if (cues.lexical) {
    out.push_back(tok("wat", "wat", Pos::PRON_Int));
    if (!cues.repetition && rng.bernoulli(0.5)) {
      out.push_back(tok("zei", "zeggen", Pos::VERB));
      out.push_back(tok("je", "je", Pos::PRON_Prs));
      type = corpus::OirType::OpenRequest;
    } else {
      out.push_back(tok("bedoel", "bedoelen", Pos::VERB));
      out.push_back(tok("je", "je", Pos::PRON_Prs));
      out.push_back(tok("met", "met", Pos::ADP));
      append(out, np);
      type = corpus::OirType::RestrictedRequest;
    }
    out.push_back(punct("?"));
    return out;
  }
  type = corpus::OirType::RestrictedOffer;
  if (cues.repetition) {
    append(out, np);
    if (rng.bernoulli(0.5)) out.push_back(tok(pick(rng, kAdvs)));
    out.push_back(punct("."));
    return out;
  }
  return declarative(rng, ts_lemmas);
}

// ---- audio ---------------------------------------------------------------------

struct Contour {
  double base_hz = 120.0;
  double offset_st = 0.0;
  double declination = -1.5;  // st/s
  double rise = 0.0;          // st/s over the final stretch
  double rise_dur = 0.0;
  double gain_db = 0.0;
};

double round4(double t) { return std::round(t * 1e4) / 1e4; }

struct Renderer {
  int sr;
  std::vector<float> samples;

  std::size_t index(double t) const { return static_cast<std::size_t>(std::llround(t * sr)); }
  void ensure(std::size_t n) {
    if (samples.size() < n) samples.resize(n, 0.0f);
  }
};

// Lays out the tokens from `t0`, renders them and fills token and segment
// times. Returns the segment end time.
double render_segment(Segment& seg, const Contour& c, double t0, bool allow_pause, Rng& rng, Renderer& r) {
  struct Piece {
    std::size_t token;
    double start, end;
    int syllables;
  };
  std::vector<Piece> pieces;
  double t = t0 + 0.05;
  const auto pause_at = allow_pause && seg.tokens.size() > 4 && rng.bernoulli(0.25)
                            ? static_cast<std::ptrdiff_t>(1 + rng.below(seg.tokens.size() - 3))
                            : -1;
  for (std::size_t k = 0; k < seg.tokens.size(); ++k) {
    Token& tk = seg.tokens[k];
    if (tk.lexical() && tk.pos == Pos::PUNCT) continue;
    if (static_cast<std::ptrdiff_t>(k) == pause_at) t += rng.uniform(0.3, 0.5);
    int syl = 1;
    double dur;
    if (tk.nonverbal) {
      dur = rng.uniform(0.25, 0.35);
      syl = 0;
    } else {
      syl = tk.text.size() > 4 ? 2 : 1;
      dur = 0;
      for (int s = 0; s < syl; ++s) dur += rng.uniform(0.15, 0.21);
    }
    const double start = round4(t);
    const double end = round4(t + dur);
    tk.t_start = start;
    tk.t_end = end;
    pieces.push_back({k, start, end, syl});
    t = end + 0.04;
  }
  seg.t_start = round4(t0);
  seg.t_end = round4(pieces.empty() ? t0 + 0.3 : pieces.back().end + 0.05);
  const double D = seg.t_end - seg.t_start;

  r.ensure(r.index(seg.t_end) + 1);
  const double amp = 0.22 * std::pow(10.0, c.gain_db / 20.0);
  double phase = 0.0;
  double last_t = seg.t_start;
  for (const auto& p : pieces) {
    const std::size_t a = r.index(p.start), b = r.index(p.end);
    if (p.syllables == 0) {
      for (std::size_t i = a; i < b; ++i) r.samples[i] += static_cast<float>(0.04 * rng.normal());
      continue;
    }
    const double syl_len = (p.end - p.start) / p.syllables;
    phase += 2 * std::numbers::pi * c.base_hz * (p.start - last_t);
    for (std::size_t i = a; i < b; ++i) {
      const double ti = static_cast<double>(i) / r.sr;
      const double tau = ti - seg.t_start;
      double st = c.offset_st + c.declination * tau + 0.4 * std::sin(2 * std::numbers::pi * 1.3 * tau);
      if (c.rise != 0.0) st += c.rise * std::max(0.0, tau - (D - c.rise_dur));
      const double f0 = c.base_hz * std::exp2(st / 12.0);
      phase += 2 * std::numbers::pi * f0 / r.sr;
      const double u = std::fmod(ti - p.start, syl_len) / syl_len;
      const double env = 0.15 + 0.85 * std::sin(std::numbers::pi * u);
      // sin p + 0.5 sin 2p + 0.3 sin 3p
      const double sp = std::sin(phase), cp = std::cos(phase);
      const double v = sp + sp * cp + 0.3 * (3 * sp - 4 * sp * sp * sp);
      r.samples[i] += static_cast<float>(amp * env * v / 1.8);
    }
    last_t = p.end;
  }
  return seg.t_end;
}

}  // namespace

SynthCorpus synth_corpus(const SynthOptions& opt) {
  if (!(opt.ri_fraction > 0.0 && opt.ri_fraction < 1.0)) throw Error(Errc::BadConfig, "ri_fraction must be in (0, 1)");
  if (!(opt.noise_level >= 0.0 && opt.noise_level <= 1.0)) throw Error(Errc::BadConfig, "noise_level must be in [0, 1]");
  if (opt.turns_per_dialogue < 3) throw Error(Errc::BadConfig, "dialogues need at least 3 turns");
  if (opt.sample_rate < 16000) throw Error(Errc::BadConfig, "sample rate must be at least 16000");

  enum class Kind { Normal, TS, RI, RS };
  const std::size_t T = opt.turns_per_dialogue;
  const double noise = opt.noise_level;
  Rng plan_rng(opt.seed ^ 0x706c616eULL);

  // Plan the turn kinds first so hard RIs can be drawn over the whole corpus.
  std::vector<std::vector<Kind>> plans;
  std::vector<std::pair<std::size_t, std::size_t>> ri_slots;
  const double expected = opt.ri_fraction * static_cast<double>(T) / (1.0 + 2.0 * opt.ri_fraction);
  for (std::size_t d = 0; d < opt.n_dialogues; ++d) {
    std::vector<Kind> kinds(T, Kind::Normal);
    const auto n_ri = static_cast<std::size_t>(std::floor(expected + plan_rng.uniform()));
    std::vector<std::size_t> cand;
    for (std::size_t i = 1; i + 1 < T; ++i) cand.push_back(i);
    plan_rng.shuffle(std::span(cand));
    std::size_t placed = 0;
    for (std::size_t i : cand) {
      if (placed == n_ri) break;
      if (kinds[i - 1] != Kind::Normal || kinds[i] != Kind::Normal || kinds[i + 1] != Kind::Normal) continue;
      kinds[i - 1] = Kind::TS;
      kinds[i] = Kind::RI;
      kinds[i + 1] = Kind::RS;
      ++placed;
    }
    for (std::size_t i = 0; i < T; ++i) {
      if (kinds[i] == Kind::RI) ri_slots.emplace_back(d, i);
    }
    plans.push_back(std::move(kinds));
  }
  std::set<std::pair<std::size_t, std::size_t>> hard;
  {
    auto slots = ri_slots;
    plan_rng.shuffle(std::span(slots));
    for (std::size_t k = 0; k < std::min(opt.hard_ri, slots.size()); ++k) hard.insert(slots[k]);
  }

  SynthCorpus out;
  std::vector<Segment> segments;
  char buf[64];
  for (std::size_t d = 0; d < opt.n_dialogues; ++d) {
    Rng rng(opt.seed * 1000003ULL + d);
    const std::size_t dyad = d / 2;
    std::snprintf(buf, sizeof buf, "dy%03zu", dyad);
    const std::string dyad_id = buf;
    std::snprintf(buf, sizeof buf, "d%04zu", d);
    const std::string dialogue_id = buf;
    const std::string wav_path = "audio/" + dialogue_id + ".wav";

    // Speakers keep their voices across the dyad's dialogues.
    Rng voice(opt.seed ^ (0x766f696365ULL + dyad));
    double base[2];
    for (double& b : base) b = voice.bernoulli(0.5) ? voice.uniform(95, 135) : voice.uniform(175, 235);
    const std::string speakers[2] = {dyad_id + "_A", dyad_id + "_B"};

    Renderer r{opt.sample_rate, {}};
    double t = 0.3;
    int seg_no = 0;
    Tokens last_np;
    std::set<std::string> last_lemmas;
    std::string seq_id;
    const auto& kinds = plans[d];
    for (std::size_t turn = 0; turn < T; ++turn) {
      const int who = static_cast<int>((turn + (d % 2)) % 2);
      const Kind kind = kinds[turn];
      // Only non-target turns get a second segment, so turn structure
      // carries no label information.
      const std::size_t n_segs = (kind == Kind::TS || kind == Kind::RS) && rng.bernoulli(0.2) ? 2 : 1;
      Tokens turn_np;
      std::set<std::string> turn_lemmas;
      if (kind == Kind::TS) {
        std::snprintf(buf, sizeof buf, "%s_q%02zu", dialogue_id.c_str(), turn);
        seq_id = buf;
      }
      for (std::size_t k = 0; k < n_segs; ++k) {
        Segment seg;
        std::snprintf(buf, sizeof buf, "%s_s%03d", dialogue_id.c_str(), seg_no++);
        seg.segment_id = buf;
        seg.dialogue_id = dialogue_id;
        seg.dyad_id = dyad_id;
        seg.speaker = speakers[who];
        seg.audio_ref = {wav_path, 0};

        Contour c;
        c.base_hz = base[who];
        c.offset_st = rng.normal() * (1.0 + noise);
        c.declination = -1.5 + 0.5 * rng.normal();
        const double rise_len = 0.5;
        auto plant_rise = [&] {
          c.offset_st = 3.0 + 0.5 * rng.normal();
          c.rise = 12.0 * (1.0 - 0.5 * noise * rng.uniform());
          c.rise_dur = rise_len;
          c.gain_db = 2.0;
        };

        Tokens np;
        switch (kind) {
          case Kind::Normal:
            seg.role = Role::RD;
            seg.tokens = rng.bernoulli(0.15 * noise) ? wat_question(rng) : declarative(rng, last_lemmas, &np);
            if (rng.bernoulli(0.15 * noise)) plant_rise();
            break;
          case Kind::TS:
            seg.role = Role::TS;
            seg.tokens = declarative(rng, last_lemmas, &np, k > 0);
            seg.sequence_id = seq_id;
            break;
          case Kind::RI: {
            seg.role = Role::RI;
            seg.sequence_id = seq_id;
            const bool is_hard = hard.count({d, turn}) > 0;
            PlantedCues cues;
            if (!is_hard) {
              cues.lexical = !rng.bernoulli(noise);
              cues.prosodic = !rng.bernoulli(noise);
              cues.repetition = !rng.bernoulli(noise);
            }
            corpus::OirType type{};
            seg.tokens = repair_initiation(rng, cues, last_np, last_lemmas, type);
            seg.oir_type = type;
            if (cues.prosodic) plant_rise();
            out.cues[seg.segment_id] = cues;
            if (is_hard) out.hard_ri_ids.push_back(seg.segment_id);
            break;
          }
          case Kind::RS:
            seg.role = Role::RS;
            seg.sequence_id = seq_id;
            seg.tokens = declarative(rng, last_lemmas, &np);
            break;
        }
        seg.transcript = corpus::render_transcript(seg.tokens);
        const double end = render_segment(seg, c, t, kind == Kind::Normal, rng, r);
        if (!np.empty() && turn_np.empty()) turn_np = np;
        for (const auto& l : lemmas_of(seg.tokens)) turn_lemmas.insert(l);
        t = end + (k + 1 < n_segs ? rng.uniform(0.25, 0.4) : std::clamp(0.45 + 0.15 * rng.normal(), 0.1, 1.0));
        segments.push_back(std::move(seg));
      }
      last_np = turn_np;
      last_lemmas = turn_lemmas;
    }
    r.ensure(r.index(t + 0.3));
    const double noise_sd = 0.002 + 0.006 * noise;
    Rng hiss(opt.seed ^ (0x6869737300ULL + d));
    for (float& s : r.samples) s += static_cast<float>(noise_sd * hiss.normal());
    audio::WavData wav;
    wav.sample_rate = opt.sample_rate;
    wav.channels = 1;
    wav.interleaved = std::move(r.samples);
    out.audio.emplace(wav_path, std::move(wav));
  }
  out.dataset = corpus::Dataset(std::move(segments));
  return out;
}

void write_synth(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "audio");
  corpus::write_corpus(corpus.dataset, dir / "corpus.jsonl");
  for (const auto& [path, wav] : corpus.audio) audio::write_wav(dir / path, wav);
}

void register_audio(SynthCorpus& corpus, audio::AudioSource& source) {
  for (auto& [path, wav] : corpus.audio) source.put(path, std::move(wav));
  corpus.audio.clear();
}

}  // namespace oir::synth
