// Acceptance suite: one PASS/FAIL line per criterion. Exit status is 0 only
// when every criterion passes. An optional argument selects criteria whose
// name contains it.

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>

#include "fixtures.hpp"
#include "oir/context.hpp"
#include "oir/corpus.hpp"
#include "oir/embeddings.hpp"
#include "oir/error.hpp"
#include "oir/eval.hpp"
#include "oir/explain.hpp"
#include "oir/kernels.hpp"
#include "oir/linguistic.hpp"
#include "oir/metrics.hpp"
#include "oir/model.hpp"
#include "oir/pipeline.hpp"
#include "oir/prosody.hpp"
#include "oir/rng.hpp"
#include "oir/synth.hpp"
#include "support.hpp"

using namespace oir;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("FAILED " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- DSP -----------------------------------------------------------------------------

Outcome dsp() {
  using namespace prosody;
  using oir::test::concat, oir::test::glide, oir::test::silence, oir::test::tone;
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();

  auto voiced_mean = [](const PitchTrack& t) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t.voiced[i]) {
        s += t.f0[i];
        ++n;
      }
    }
    return n ? s / static_cast<double>(n) : 0.0;
  };

  const auto pure = tone(220, 1.0);
  const auto track = track_pitch(pure);
  const double f0 = voiced_mean(track);
  o.check(std::abs(f0 - 220) <= 2.0, fmt::format("220 Hz tone pitch {:.3f}", f0));
  o.note(fmt::format("tone f0 {:.2f} Hz", f0));

  const auto slope = pitch_stats(track_pitch(glide(100, 200, 1.0))).get("pitch_slope");
  o.check(slope && std::abs(*slope - 12.0) <= 0.5, "octave glide slope");
  if (slope) o.note(fmt::format("glide {:.3f} st/s", *slope));

  const auto vq = voice_quality(pure, track);
  o.check(vq.jitter < 0.5, fmt::format("jitter {:.4f} %", vq.jitter));
  o.check(vq.hnr > 25.0, fmt::format("HNR {:.2f} dB", vq.hnr));
  o.note(fmt::format("jitter {:.3f} %, HNR {:.1f} dB", vq.jitter, vq.hnr));

  const auto gap = concat({tone(200, 1.0), silence(0.3), tone(200, 1.0)});
  const auto pa = detect_pauses(intensity_track(gap), gap.duration());
  const bool one_short = pa.pauses.size() == 1 && pa.pauses[0].category == PauseCategory::Short &&
                         std::abs(pa.pauses[0].duration - 0.3) <= 0.02;
  o.check(one_short, fmt::format("0.3 s gap -> {} pauses", pa.pauses.size()));
  if (!pa.pauses.empty()) o.note(fmt::format("gap {:.3f} s", pa.pauses[0].duration));

  const auto loud = track_pitch(tone(180, 1.0, 0.6));
  const auto soft = track_pitch(tone(180, 1.0, 0.3));
  double worst = 0;
  bool same_voicing = loud.size() == soft.size();
  for (std::size_t i = 0; same_voicing && i < loud.size(); ++i) {
    same_voicing = loud.voiced[i] == soft.voiced[i];
    worst = std::max(worst, std::abs(loud.f0[i] - soft.f0[i]));
  }
  o.check(same_voicing && worst <= 0.1, fmt::format("amplitude invariance {:.4f} Hz", worst));

  const double t = seconds_since(t0);
  o.check(t < 30.0, fmt::format("runtime {:.1f} s", t));
  return o;
}

// ---- semitone and normalization math --------------------------------------------------

Outcome normalization() {
  using namespace prosody;
  Outcome o;
  o.check(hz_to_semitones(200, 100) == 12.0, "octave is 12");
  for (double f : {55.0, 97.0, 123.4, 261.63, 880.0, 4186.0}) {
    o.check(hz_to_semitones(2 * f, f) == 12.0, fmt::format("octave at {}", f));
    for (double g : {61.0, 150.0, 333.3}) {
      o.check(std::abs(hz_to_semitones(f, g) + hz_to_semitones(g, f)) < 1e-12, "antisymmetry");
    }
  }
  const auto n = normalize_to_baseline(220, ChannelStats{180, 20, 140, 240});
  o.check(std::abs(n.z_score - 2.0) < 1e-9, fmt::format("z {:.12f}", n.z_score));
  o.check(std::abs(n.rel_change - 200.0 / 9.0) < 1e-9, fmt::format("rel_change {:.12f}", n.rel_change));
  o.check(std::abs(n.range_pos - 0.8) < 1e-9, fmt::format("range_pos {:.12f}", n.range_pos));
  o.note(fmt::format("z {:.6f}, rel {:.6f} %, pos {:.6f}", n.z_score, n.rel_change, n.range_pos));
  return o;
}

// ---- linguistic ------------------------------------------------------------------------

Outcome linguistic_oracle() {
  using corpus::Pos;
  Outcome o;
  const auto ds = oir::test::open_request_example();
  const corpus::Segment* ts[] = {ds.find("ts")};
  const double rep = linguistic::other_repetition_ratio(*ds.find("rs"), ts);
  o.check(std::abs(rep - 2.0 / 3.0) < 1e-12, fmt::format("RS vs TS repetition {}", rep));

  linguistic::BigramVocabulary vocab;
  vocab.pairs.assign(std::begin(linguistic::kAnchorBigrams), std::end(linguistic::kAnchorBigrams));
  const auto fv = linguistic::segment_features(*ds.find("ri"), vocab);
  o.check(fv.value("ends_with_question_mark") == 1.0, "ends_with_question_mark");
  o.check(fv.value("contains_wat") == 1.0, "contains_wat");

  // Same RI written as in a transcript, question mark attached to the last word.
  const auto glued = oir::test::seg("g", "d", "B", 0, 1,
                                    oir::test::toks("wat/wat/PRON_Int zei/zeggen/VERB je?/je/PRON_Prs"));
  const auto gv = linguistic::segment_features(glued, vocab);
  o.check(gv.value("ends_with_question_mark") == 1.0 && gv.value("contains_wat") == 1.0, "glued question mark");
  o.note(fmt::format("repetition {:.6f}", rep));
  return o;
}

// ---- context ---------------------------------------------------------------------------

Outcome context_properties() {
  using namespace context;
  Outcome o;
  Rng rng(20240501);
  std::size_t cases = 0, violations = 0;
  auto fail = [&](bool ok) {
    if (!ok) ++violations;
  };
  while (cases < 1000) {
    std::vector<corpus::Segment> segs;
    const std::size_t n = 1 + rng.below(16);
    for (std::size_t k = 0; k < n; ++k) {
      std::string spec;
      const std::size_t len = 1 + rng.below(14);
      for (std::size_t w = 0; w < len; ++w) spec += "s" + std::to_string(k) + "w" + std::to_string(w) + " ";
      segs.push_back(oir::test::seg("s" + std::to_string(k), "d", k % 2 ? "A" : "B", static_cast<double>(k),
                                    static_cast<double>(k) + 0.5, oir::test::toks(spec)));
    }
    const std::size_t i = rng.below(n);
    ContextConfig c;
    c.mode = static_cast<Mode>(rng.below(4));
    c.window = rng.bernoulli(0.3) ? std::nullopt : std::optional<int>(static_cast<int>(rng.below(5)));
    c.max_tokens = std::max<int>(3, static_cast<int>(segs[i].tokens.size() + rng.below(50)));
    if (segs[i].tokens.size() > static_cast<std::size_t>(c.max_tokens)) continue;
    ++cases;
    const auto s = assemble_micro_context(segs, i, c);

    fail(s.tokens.size() <= static_cast<std::size_t>(c.max_tokens) + 2);
    fail(s.tokens.front() == kCls && s.tokens.back() == kEos);
    std::vector<std::size_t> idx;
    for (const auto& id : s.segment_ids) idx.push_back(std::stoul(id.substr(1)));
    for (std::size_t k : idx) {
      if (c.mode == Mode::Past) fail(segs[k].t_start <= segs[i].t_start);
      if (c.mode == Mode::Future) fail(segs[k].t_start >= segs[i].t_start);
    }
    if (c.window == 0 || c.mode == Mode::Current) fail(idx == std::vector<std::size_t>{i});

    // Expansion-order oracle: the admitted set is the longest fitting prefix,
    // so the segments left out are the last ones added.
    const bool past = c.mode == Mode::Past || c.mode == Mode::Full;
    const bool future = c.mode == Mode::Future || c.mode == Mode::Full;
    const std::size_t limit = c.window ? static_cast<std::size_t>(*c.window) : n;
    std::set<std::size_t> want = {i};
    std::size_t used = segs[i].tokens.size();
    bool stop = false;
    for (std::size_t j = 1; j <= limit && !stop; ++j) {
      for (int side = 0; side < 2 && !stop; ++side) {
        if (side == 0 && !(past && j <= i)) continue;
        if (side == 1 && !(future && i + j < n)) continue;
        const std::size_t k = side == 0 ? i - j : i + j;
        if (used + segs[k].tokens.size() + 1 > static_cast<std::size_t>(c.max_tokens)) {
          stop = true;
        } else {
          used += segs[k].tokens.size() + 1;
          want.insert(k);
        }
      }
    }
    fail(std::set<std::size_t>(idx.begin(), idx.end()) == want);
    // Target contiguous and complete.
    std::size_t pos = 1;
    for (std::size_t p = 0; p < s.target_position; ++p) pos += segs[idx[p]].tokens.size() + 1;
    for (const auto& t : segs[i].tokens) fail(s.tokens[pos++] == t.text);
  }
  o.check(violations == 0, fmt::format("{} property violations", violations));
  o.note(fmt::format("{} randomized cases", cases));
  return o;
}

// ---- model -----------------------------------------------------------------------------

template <typename T>
model::Sample<T> random_sample(Rng& rng, const model::ModelConfig& cfg, const model::InputDims& dims, int label) {
  model::Sample<T> s;
  for (model::Modality m : model::kAllModalities) {
    if (!cfg.enabled(m)) continue;
    auto& v = s.inputs[static_cast<std::size_t>(m)];
    v.resize(dims[static_cast<std::size_t>(m)]);
    for (T& x : v) x = static_cast<T>(rng.normal());
  }
  s.label = label;
  return s;
}

Outcome model_correctness() {
  using namespace model;
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  constexpr InputDims dims = {5, 4, 3, 6};

  // Gradient check in 64-bit for both fusion layouts.
  double worst = 0;
  std::size_t min_checked = SIZE_MAX;
  for (bool cross : {false, true}) {
    ModelConfig c;
    c.d_shared = 8;
    c.n_heads = 2;
    c.dropout = 0.0;
    c.seed = 7;
    c.cross_attention = cross;
    c.project_text_in_head = cross;
    FusionNet<double> net(c, dims);
    Rng rng(11);
    std::vector<Sample<double>> data;
    for (int i = 0; i < 3; ++i) data.push_back(random_sample<double>(rng, c, dims, i % 2));
    std::vector<const Sample<double>*> batch;
    for (const auto& s : data) batch.push_back(&s);
    std::vector<double> grad;
    net.loss(batch, &grad);
    Rng pick(3);
    for (const auto& g : net.groups()) {
      std::vector<std::size_t> idx(g.size());
      std::iota(idx.begin(), idx.end(), g.offset);
      pick.shuffle(std::span(idx));
      idx.resize(std::min<std::size_t>(idx.size(), 25));
      min_checked = std::min(min_checked, idx.size() == g.size() ? std::size_t{25} : idx.size());
      for (std::size_t i : idx) {
        const double keep = net.params()[i];
        const double h = 1e-5;
        net.params()[i] = keep + h;
        const double up = net.loss(batch, nullptr);
        net.params()[i] = keep - h;
        const double down = net.loss(batch, nullptr);
        net.params()[i] = keep;
        const double numeric = (up - down) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
        worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
      }
    }
  }
  o.check(worst < 1e-4, fmt::format("gradient relative error {:.3g}", worst));
  o.check(min_checked >= 25, "25 parameters per group (or the whole group)");
  o.note(fmt::format("max grad rel err {:.2e}", worst));

  // Permutation invariance of the modality tokens.
  double perm = 0;
  {
    ModelConfig c;
    c.d_shared = 8;
    c.n_heads = 2;
    c.seed = 5;
    FusionNet<double> net(c, dims);
    Rng rng(8);
    for (int trial = 0; trial < 5; ++trial) {
      const auto s = random_sample<double>(rng, c, dims, 0);
      const double ref = net.logit(s);
      std::vector<std::size_t> order = {0, 1, 2, 3};
      while (std::next_permutation(order.begin(), order.end())) {
        FusionNet<double>::Pass pass;
        pass.order = &order;
        perm = std::max(perm, std::abs(net.logit(s, pass) - ref));
      }
    }
  }
  o.check(perm < 1e-6, fmt::format("permutation deviation {:.3g}", perm));

  // Seed determinism.
  {
    ModelConfig c;
    c.d_shared = 8;
    c.n_heads = 2;
    c.seed = 42;
    c.max_epochs = 4;
    Rng rng(2);
    std::vector<Sample<float>> tr, va;
    for (int i = 0; i < 24; ++i) tr.push_back(random_sample<float>(rng, c, dims, i % 2));
    for (int i = 0; i < 8; ++i) va.push_back(random_sample<float>(rng, c, dims, i % 2));
    const auto a = serialize_checkpoint(make_checkpoint(train<float>(c, dims, tr, va).net, "{}"));
    const auto b = serialize_checkpoint(make_checkpoint(train<float>(c, dims, tr, va).net, "{}"));
    o.check(a == b, "identical checkpoints for one seed");
  }

  // Separable set.
  {
    ModelConfig c;
    c.d_shared = 16;
    c.n_heads = 4;
    c.batch_size = 4;
    c.patience = 19;
    c.seed = 3;
    c.modalities = {Modality::Ling, Modality::Pros};
    Rng rng(17);
    std::vector<Sample<float>> data;
    for (int i = 0; i < 16; ++i) {
      const int y = i % 2;
      auto s = random_sample<float>(rng, c, dims, y);
      s.inputs[2][0] = y ? 2.0f : -2.0f;
      data.push_back(s);
    }
    const auto res = train<float>(c, dims, data, {});
    std::vector<int> preds, golds;
    for (const auto& s : data) {
      preds.push_back(res.net.probability(s) >= 0.5f ? 1 : 0);
      golds.push_back(s.label);
    }
    const double f1 = eval::compute_metrics(preds, golds).macro_f1;
    o.check(res.history.size() <= 20 && f1 == 100.0, fmt::format("separable train F1 {:.2f}", f1));
    o.note(fmt::format("separable F1 {:.0f} after {} epochs", f1, res.history.size()));
  }

  const double t = seconds_since(t0);
  o.check(t < 120.0, fmt::format("runtime {:.1f} s", t));
  return o;
}

// ---- metrics ---------------------------------------------------------------------------

Outcome metrics_examples() {
  Outcome o;
  auto build = [](std::initializer_list<std::array<int, 3>> cells) {
    std::pair<std::vector<int>, std::vector<int>> pg;
    for (const auto& [p, g, n] : cells) {
      for (int i = 0; i < n; ++i) {
        pg.first.push_back(p);
        pg.second.push_back(g);
      }
    }
    return pg;
  };
  auto expect = [&](const char* name, const eval::Metrics& m, double p, double r, double f) {
    o.check(std::abs(m.precision - p) < 0.01 && std::abs(m.recall - r) < 0.01 && std::abs(m.macro_f1 - f) < 0.01,
            fmt::format("{}: {:.4f}/{:.4f}/{:.4f}", name, m.precision, m.recall, m.macro_f1));
  };
  const auto perfect = build({{1, 1, 5}, {0, 0, 5}});
  expect("perfect", eval::compute_metrics(perfect.first, perfect.second), 100, 100, 100);
  const auto eighty = build({{1, 1, 8}, {1, 0, 2}, {0, 1, 2}, {0, 0, 8}});
  expect("80/80/80", eval::compute_metrics(eighty.first, eighty.second), 80, 80, 80);
  const auto allpos = build({{1, 1, 3}, {1, 0, 3}});
  const auto m = eval::compute_metrics(allpos.first, allpos.second);
  expect("50/100/33.33", m, 50, 100, 33.33);
  return o;
}

// ---- explainability --------------------------------------------------------------------

Outcome explainability() {
  using namespace explain;
  Outcome o;
  auto rows = [](std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> r(n, std::vector<double>(d));
    for (auto& row : r) for (double& v : row) v = rng.normal();
    return r;
  };
  auto names = [](std::size_t d) {
    std::vector<std::string> n;
    for (std::size_t i = 0; i < d; ++i) n.push_back("f" + std::to_string(i));
    return n;
  };

  // Efficiency on a 12-feature nonlinear model, exact mode.
  auto f12 = [](std::span<const double> x) {
    double s = std::tanh(x[0] * x[1] - 0.5 * x[2]);
    for (std::size_t i = 3; i < 12; ++i) s += 0.1 * static_cast<double>(i) * x[i] * (i % 3 == 0 ? x[i - 1] : 1.0);
    return s;
  };
  const auto bg12 = rows(20, 12, 1);
  double eff = 0;
  bool all_exact = true;
  for (const auto& x : rows(5, 12, 2)) {
    const auto a = shap_values(f12, bg12, x, column_players(names(12)));
    all_exact = all_exact && a.exact;
    eff = std::max(eff, std::abs(a.base_value + std::accumulate(a.phi.begin(), a.phi.end(), 0.0) - f12(x)));
  }
  o.check(all_exact && eff < 1e-6, fmt::format("efficiency gap {:.3g}", eff));

  // Linear model against the closed form.
  const std::vector<double> w = {0.5, -1.5, 2.0, 0.0, 0.25, 1.0};
  auto lin = [&](std::span<const double> x) {
    double s = 0.3;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
    return s;
  };
  const auto bg6 = rows(30, 6, 3);
  const std::vector<double> x6 = {0.4, -1.0, 2.2, 7.0, 0.0, -0.3};
  const auto la = shap_values(lin, bg6, x6, column_players(names(6)));
  double lin_err = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double mean = 0;
    for (const auto& b : bg6) mean += b[i];
    mean /= static_cast<double>(bg6.size());
    lin_err = std::max(lin_err, std::abs(la.phi[i] - w[i] * (x6[i] - mean)));
  }
  o.check(lin_err < 1e-6, fmt::format("linear error {:.3g}", lin_err));

  // Sampling against exact on the 8-feature toy.
  auto toy8 = [](std::span<const double> x) {
    return std::tanh(0.8 * x[0] - 0.5 * x[1] + 0.3 * x[2] * x[3]) + 0.2 * x[4] * x[5] - 0.1 * x[6] +
           0.05 * x[7] * x[7];
  };
  const auto bg8 = rows(25, 8, 5);
  const std::vector<double> x8 = {1.2, -0.7, 0.9, 1.5, -1.1, 0.8, 2.0, -1.3};
  const auto exact = shap_values(toy8, bg8, x8, column_players(names(8)));
  ShapOptions so;
  so.exact_max = 0;
  so.n_samples = 2000;
  so.seed = 9;
  const auto approx = shap_values(toy8, bg8, x8, column_players(names(8)), so);
  double samp = 0;
  for (std::size_t i = 0; i < 8; ++i) samp = std::max(samp, std::abs(approx.phi[i] - exact.phi[i]));
  o.check(!approx.exact && samp < 0.02, fmt::format("sampling deviation {:.4f}", samp));

  // Synergy.
  const auto bg4 = rows(100, 4, 7);
  const auto inst = rows(40, 4, 8);
  const auto pl = column_players(names(4));
  auto add = [](std::span<const double> x) { return std::sin(x[0]) + x[1] * x[1] + 0.5 * x[2]; };
  auto mul = [](std::span<const double> x) { return x[0] * x[1] + 0.5 * x[2]; };
  const double s_add = synergy(add, bg4, inst, pl, 0, 1, 50, 1);
  const double s_mul = synergy(mul, bg4, inst, pl, 0, 1, 50, 1);
  o.check(std::abs(s_add) <= 0.01, fmt::format("additive synergy {:.4f}", s_add));
  o.check(s_mul > 0.1, fmt::format("multiplicative synergy {:.4f}", s_mul));
  o.note(fmt::format("eff {:.1e}, lin {:.1e}, samp {:.4f}, syn {:.4f}/{:.3f}", eff, lin_err, samp, s_add, s_mul));
  return o;
}

// ---- end to end ------------------------------------------------------------------------

Outcome end_to_end() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthOptions so;
  so.n_dialogues = 200;
  so.noise_level = 0.3;
  so.seed = 42;
  auto sc = synth::synth_corpus(so);
  audio::AudioSource src;
  synth::register_audio(sc, src);
  std::size_t n_ri = 0;
  for (const auto& s : sc.dataset.segments()) n_ri += s.role == corpus::Role::RI;
  const auto ds = corpus::split_dataset(corpus::balance_dataset(sc.dataset, n_ri, 42), {}, 42);
  const auto cls = ds.classifiable_indices();
  auto pros = pipeline::extract_prosody_table(ds, src, cls, 1);
  pipeline::impute_speaker_baseline(pros, ds);
  const auto vocab = linguistic::select_frequent_bigrams(ds, ds.classifiable_indices(corpus::Split::Train));
  const auto ling = pipeline::extract_linguistic_table(ds, vocab, cls);
  const eval::ExperimentData data(ds, std::move(pros), ling);
  o.note(fmt::format("{} classifiable segments, features in {:.0f} s", cls.size(), seconds_since(t0)));

  model::ModelConfig cfg;
  cfg.d_shared = 64;
  cfg.lr = 1e-3;
  const std::vector<eval::Variant> variants = {
      eval::find_variant("Text_Ling"),
      eval::find_variant("Audio_Pros"),
      eval::find_variant("Multi_LingPros"),
      eval::find_variant("Multi_Ours"),
      eval::find_variant("Multi_Ours", eval::parse_context("Current")),
      eval::find_variant("Multi_Ours", eval::parse_context("Future(max)")),
  };
  int a_hold = 0, b_hold = 0, c_hold = 0, full_cur = 0, cur_fut = 0;
  double gap_fc = 0, gap_cf = 0;
  const int n_seeds = 5;
  for (int sd = 42; sd < 42 + n_seeds; ++sd) {
    cfg.seed = static_cast<std::uint64_t>(sd);
    const auto r = eval::run_scenarios(data, variants, cfg, 10, static_cast<std::uint64_t>(sd), 1);
    const double text = r[0].macro_f1.mean, audio = r[1].macro_f1.mean, lp = r[2].macro_f1.mean;
    const double full = r[3].macro_f1.mean, cur = r[4].macro_f1.mean, fut = r[5].macro_f1.mean;
    const bool a = lp >= std::max(text, audio);
    const bool b = full >= cur && cur >= fut;
    const bool c = full >= 90.0;
    a_hold += a;
    b_hold += b;
    c_hold += c;
    full_cur += full >= cur;
    cur_fut += cur >= fut;
    gap_fc += (full - cur) / n_seeds;
    gap_cf += (cur - fut) / n_seeds;
    std::cout << fmt::format(
        "    seed {}: Text_Ling {:.2f} Audio_Pros {:.2f} Multi_LingPros {:.2f} | Full(2) {:.2f} Current {:.2f} "
        "Future(max) {:.2f} | a {} b {} c {}\n",
        sd, text, audio, lp, full, cur, fut, a ? "y" : "n", b ? "y" : "n", c ? "y" : "n");
    std::cout.flush();
  }
  o.check(a_hold >= 4, fmt::format("(a) multimodal >= best unimodal in {}/5 seeds", a_hold));
  o.check(b_hold >= 4, fmt::format("(b) Full(2) >= Current >= Future in {}/5 seeds", b_hold));
  o.check(c_hold >= 4, fmt::format("(c) Multi_Ours >= 90 in {}/5 seeds", c_hold));
  o.note(fmt::format("a {}/5, b {}/5, c {}/5", a_hold, b_hold, c_hold));
  o.note(fmt::format("Full>=Current {}/5 (mean gap {:+.2f}), Current>=Future {}/5 (mean gap {:+.2f})", full_cur, gap_fc,
                     cur_fut, gap_cf));
  const double t = seconds_since(t0);
  o.check(t < 600.0, fmt::format("runtime {:.0f} s", t));
  o.note(fmt::format("{:.0f} s", t));
  return o;
}

// ---- format round trips ----------------------------------------------------------------

Outcome round_trips() {
  Outcome o;
  synth::SynthOptions so;
  so.n_dialogues = 8;
  so.noise_level = 0.5;
  so.seed = 3;
  const auto sc = synth::synth_corpus(so);
  const auto ds = corpus::split_dataset(sc.dataset, {}, 1);
  const auto text = corpus::serialize_corpus(ds);
  const auto back = corpus::parse_corpus_text(text);
  o.check(back == ds && corpus::serialize_corpus(back) == text, "corpus JSONL round trip");

  Rng rng(5);
  embeddings::EmbeddingStore store(embeddings::Modality::Text, 24, "fixture");
  for (int i = 0; i < 50; ++i) {
    std::vector<float> v(24);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    store.insert("s" + std::to_string(i), v);
  }
  const auto bytes = embeddings::serialize_emb1(store);
  const auto eback = embeddings::parse_emb1(bytes);
  o.check(eback == store && embeddings::serialize_emb1(eback) == bytes, "EMB1 round trip");

  // Named errors for known defects.
  auto emb_code = [](std::vector<std::uint8_t> b) -> std::string {
    try {
      embeddings::parse_emb1(b);
    } catch (const Error& e) {
      return errc_name(e.code());
    }
    return "none";
  };
  auto bad = bytes;
  bad[1] = 'X';
  o.check(emb_code(bad) == "BadMagic", "EMB1 bad magic");
  o.check(emb_code({bytes.begin(), bytes.end() - 3}) == "TruncatedFile", "EMB1 truncation");
  auto corpus_code = [](const std::string& t) -> std::string {
    try {
      corpus::parse_corpus_text(t);
    } catch (const Error& e) {
      return errc_name(e.code());
    }
    return "none";
  };
  const auto first_line = text.substr(0, text.find('\n') + 1);
  std::string no_role = first_line;
  no_role.replace(no_role.find("\"role\""), 6, "\"rolx\"");
  o.check(corpus_code(no_role) == "MalformedRecord", "corpus missing field");

  // Random corruption never escapes as anything but a library error.
  std::size_t crashes = 0, trials = 0;
  for (int i = 0; i < 400; ++i) {
    std::string t = text.substr(0, std::min<std::size_t>(text.size(), 6000));
    auto b = bytes;
    for (int k = 0; k < 1 + static_cast<int>(rng.below(4)); ++k) {
      t[rng.below(t.size())] = static_cast<char>(rng.below(256));
      b[rng.below(b.size())] = static_cast<std::uint8_t>(rng.below(256));
    }
    if (rng.bernoulli(0.3)) t.resize(rng.below(t.size()));
    if (rng.bernoulli(0.3)) b.resize(rng.below(b.size()));
    for (int which = 0; which < 2; ++which) {
      ++trials;
      try {
        if (which == 0) corpus::parse_corpus_text(t);
        else embeddings::parse_emb1(b);
      } catch (const Error&) {
      } catch (...) {
        ++crashes;
      }
    }
  }
  o.check(crashes == 0, fmt::format("{} corrupted inputs escaped as non-library errors", crashes));
  o.note(fmt::format("{} corrupted inputs handled", trials));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string filter = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"dsp-oracles", dsp},
      {"semitone-normalization", normalization},
      {"linguistic-oracles", linguistic_oracle},
      {"context-assembler", context_properties},
      {"model-correctness", model_correctness},
      {"metrics-examples", metrics_examples},
      {"explainability", explainability},
      {"end-to-end-synthetic", end_to_end},
      {"format-round-trips", round_trips},
  };
  std::cout << "SIMD kernels: " << simd::isa_name(simd::active().isa) << "\n";
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!filter.empty() && name.find(filter) == std::string::npos) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.notes.push_back(std::string("exception: ") + e.what());
    }
    std::string detail;
    for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::cout << fmt::format("{} {} ({:.1f} s) {}\n", o.pass ? "PASS" : "FAIL", name, seconds_since(t0), detail);
    std::cout.flush();
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
