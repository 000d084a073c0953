// oirtool: command-line entry point for the OIR detection pipeline.

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "oir/config.hpp"
#include "oir/context.hpp"
#include "oir/corpus.hpp"
#include "oir/embeddings.hpp"
#include "oir/error.hpp"
#include "oir/eval.hpp"
#include "oir/explain.hpp"
#include "oir/linguistic.hpp"
#include "oir/pipeline.hpp"
#include "oir/rng.hpp"
#include "oir/synth.hpp"

namespace fs = std::filesystem;
using namespace oir;

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> threads;
  std::string data;  // defaults to out
};

// Shared state of one invocation.
struct Run {
  Globals g;
  config::Config cfg;
  config::RunManifest manifest;
  fs::path out;
  fs::path data;

  std::uint64_t seed() const {
    if (g.seed) return *g.seed;
    if (auto s = cfg.get_int("global", "seed")) return static_cast<std::uint64_t>(*s);
    return kDefaultSeed;
  }
  int threads() const {
    if (g.threads) return std::max(1, *g.threads);
    if (auto t = cfg.get_int("global", "threads")) return std::max<int>(1, static_cast<int>(*t));
    return 1;
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = out / name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error(Errc::Io, "cannot write " + p.string());
    f << content;
    manifest.outputs.push_back(name);
  }
  void output(const std::string& name) { manifest.outputs.push_back(name); }

  void finish() {
    manifest.finished = config::utc_timestamp();
    std::sort(manifest.outputs.begin(), manifest.outputs.end());
    manifest.outputs.erase(std::unique(manifest.outputs.begin(), manifest.outputs.end()), manifest.outputs.end());
    manifest.write(out);
  }
};

Run start(const Globals& g, const std::string& command) {
  Run r;
  r.g = g;
  if (!g.config_path.empty()) {
    r.cfg = config::Config::load(g.config_path);
    r.manifest.inputs[g.config_path] = config::file_hash(g.config_path);
  }
  r.out = g.out;
  r.data = g.data.empty() ? r.out : fs::path(g.data);
  fs::create_directories(r.out);
  r.manifest.command = command;
  r.manifest.config_hash = r.cfg.hash();
  r.manifest.seeds["global"] = r.seed();
  r.manifest.versions["oir"] = config::kVersion;
  r.manifest.started = config::utc_timestamp();
  return r;
}

fs::path need(const fs::path& p) {
  if (!fs::exists(p)) throw Error(Errc::Io, "missing input " + p.string());
  return p;
}

corpus::Dataset load_corpus(Run& r, const fs::path& path) {
  need(path);
  r.manifest.add_input(path);
  try {
    return corpus::parse_corpus(path);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + std::string(e.what()).substr(std::string(errc_name(e.code())).size() + 2));
  }
}

corpus::Dataset load_data_corpus(Run& r) { return load_corpus(r, r.data / "corpus.jsonl"); }

// Training rows: the train split, or every classifiable segment of an unsplit corpus.
std::vector<std::size_t> train_indices(const corpus::Dataset& ds) {
  return ds.split_assignment().empty() ? ds.classifiable_indices() : ds.classifiable_indices(corpus::Split::Train);
}

std::vector<std::size_t> split_indices(const corpus::Dataset& ds, corpus::Split s) {
  return ds.split_assignment().empty() ? std::vector<std::size_t>{} : ds.classifiable_indices(s);
}

// Test rows; an unsplit corpus is evaluated on everything it has.
std::vector<std::size_t> test_indices(const corpus::Dataset& ds) {
  return ds.split_assignment().empty() ? ds.classifiable_indices() : ds.classifiable_indices(corpus::Split::Test);
}

FeatureTable prosodic_table(Run& r, const corpus::Dataset& ds) {
  const fs::path p = r.data / "prosodic.csv";
  if (fs::exists(p)) {
    r.manifest.add_input(p);
    return read_feature_csv(p);
  }
  audio::AudioSource src(r.data);
  auto t = pipeline::extract_prosody_table(ds, src, ds.classifiable_indices(), r.threads());
  pipeline::impute_speaker_baseline(t, ds);
  r.manifest.parameters["prosodic_features"] = "extracted on the fly";
  return t;
}

linguistic::BigramVocabulary vocabulary(Run& r, const corpus::Dataset& ds) {
  const fs::path p = r.data / "vocab.json";
  if (fs::exists(p)) {
    r.manifest.add_input(p);
    return linguistic::read_vocabulary(p);
  }
  const auto k = r.cfg.get_int("linguistic", "bigrams").value_or(20);
  return linguistic::select_frequent_bigrams(ds, train_indices(ds), static_cast<std::size_t>(k));
}

FeatureTable linguistic_table(Run& r, const corpus::Dataset& ds) {
  const fs::path p = r.data / "linguistic.csv";
  if (fs::exists(p)) {
    r.manifest.add_input(p);
    return read_feature_csv(p);
  }
  r.manifest.parameters["linguistic_features"] = "extracted on the fly";
  return pipeline::extract_linguistic_table(ds, vocabulary(r, ds), ds.classifiable_indices());
}

eval::EmbeddingOptions embedding_options(Run& r, const std::string& flag_dir, bool lenient) {
  eval::EmbeddingOptions o;
  std::string dir = flag_dir;
  if (dir.empty()) dir = r.cfg.get_string("embeddings", "dir").value_or("");
  const std::string source = r.cfg.get_string("embeddings", "source").value_or(dir.empty() ? "fixture" : "files");
  if (source == "files") {
    o.dir = dir.empty() ? r.data : fs::path(dir);
  } else if (source != "fixture") {
    throw Error(Errc::BadConfig, "[embeddings] source must be \"fixture\" or \"files\"");
  }
  o.strict = !lenient && r.cfg.get_bool("embeddings", "strict").value_or(true);
  o.text_dim = static_cast<std::uint32_t>(r.cfg.get_int("embeddings", "text_dim").value_or(64));
  o.audio_dim = static_cast<std::uint32_t>(r.cfg.get_int("embeddings", "audio_dim").value_or(32));
  o.seed = r.seed();
  r.manifest.parameters["embeddings"] = o.dir.empty() ? "fixture" : o.dir.string();
  return o;
}

model::ModelConfig model_config(const Run& r) {
  model::ModelConfig m;
  const auto& c = r.cfg;
  if (auto v = c.get_int("model", "d_shared")) m.d_shared = static_cast<int>(*v);
  if (auto v = c.get_int("model", "n_heads")) m.n_heads = static_cast<int>(*v);
  if (auto v = c.get_double("model", "dropout")) m.dropout = *v;
  if (auto v = c.get_double("model", "lr")) m.lr = *v;
  if (auto v = c.get_double("model", "weight_decay")) m.weight_decay = *v;
  if (auto v = c.get_double("model", "warmup_fraction")) m.warmup_fraction = *v;
  if (auto v = c.get_int("model", "max_epochs")) m.max_epochs = static_cast<int>(*v);
  if (auto v = c.get_int("model", "patience")) m.patience = static_cast<int>(*v);
  if (auto v = c.get_int("model", "batch_size")) m.batch_size = static_cast<int>(*v);
  if (auto v = c.get_bool("model", "cross_attention")) m.cross_attention = *v;
  if (auto v = c.get_bool("model", "project_text_in_head")) m.project_text_in_head = *v;
  m.seed = r.seed();
  return m;
}

eval::Variant variant_of(const std::string& name, const std::string& ctx) {
  return eval::find_variant(name, ctx.empty() ? std::nullopt : std::optional(eval::parse_context(ctx)));
}

void record_variant(Run& r, const eval::Variant& v, const model::ModelConfig& m) {
  r.manifest.parameters["variant"] = v.name;
  r.manifest.parameters["context"] = v.context.label();
  r.manifest.parameters["model_config"] = m.to_json();
}

std::string predictions_csv(const corpus::Dataset& ds, const eval::SampleSet& set, const std::vector<double>& p) {
  std::string s = "segment_id,label,probability\n";
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto& seg = ds.segments()[set.indices[k]];
    s += fmt::format("{},{},{:.6f}\n", seg.segment_id, seg.label(), p[k]);
  }
  return s;
}

eval::TrainedModel load_model(Run& r, const std::string& path) {
  need(path);
  r.manifest.add_input(path);
  return eval::from_checkpoint(model::read_checkpoint(path));
}

// ---- explain --------------------------------------------------------------------------

struct ExplainOptions {
  std::size_t instances = 30;
  std::size_t samples = 1000;
  std::size_t background = 100;
  std::size_t synergy_instances = 30;
  std::size_t synergy_draws = 20;
  std::size_t synergy_top = 10;
};

ExplainOptions explain_options(const Run& r) {
  ExplainOptions o;
  const auto& c = r.cfg;
  auto get = [&](const char* key, std::size_t& dst) {
    if (auto v = c.get_int("explain", key)) dst = static_cast<std::size_t>(std::max<std::int64_t>(0, *v));
  };
  get("instances", o.instances);
  get("n_samples", o.samples);
  get("background", o.background);
  get("synergy_instances", o.synergy_instances);
  get("synergy_draws", o.synergy_draws);
  get("synergy_top", o.synergy_top);
  return o;
}

void run_explain(Run& r, const eval::ExperimentData& data, const eval::TrainedModel& m, const ExplainOptions& o) {
  const auto& ds = data.dataset();
  const auto bg_pool = eval::build_samples(data, m.plan, train_indices(ds));
  const auto ex = eval::make_explainer(m, bg_pool, o.background, r.seed());
  auto targets = eval::build_samples(data, m.plan, test_indices(ds));
  if (targets.samples.empty()) throw Error(Errc::EmptyInput, "no instances to explain");

  std::vector<std::size_t> pick(targets.samples.size());
  std::iota(pick.begin(), pick.end(), 0);
  Rng rng(r.seed() ^ 0x6578706cULL);
  rng.shuffle(std::span(pick));
  pick.resize(std::min(pick.size(), o.instances));
  std::sort(pick.begin(), pick.end());

  std::vector<explain::Attribution> atts;
  std::vector<std::vector<double>> xs;
  for (std::size_t k : pick) {
    const auto x = ex.flatten(targets.samples[k]);
    explain::ShapOptions so;
    so.n_samples = o.samples;
    so.seed = r.seed() + k;
    auto a = explain::shap_values(ex.fn, ex.background, x, ex.players, so);
    a.instance_id = ds.segments()[targets.indices[k]].segment_id;
    atts.push_back(std::move(a));
    xs.push_back(x);
  }
  explain::write_attributions(atts, r.out / "attributions.jsonl");
  r.output("attributions.jsonl");
  r.write("top10.csv", explain::ranking_csv(explain::top_k(atts, 10)));
  r.write("top20.csv", explain::ranking_csv(explain::top_k(atts, 20)));

  // Synergy between the highest-ranked linguistic and prosodic features.
  const auto ranking = explain::top_k(atts, ex.players.size());
  std::vector<std::size_t> rows, cols;
  for (const auto& f : ranking) {
    for (std::size_t p = 0; p < ex.players.size(); ++p) {
      if (ex.players[p].name != f.name) continue;
      if (ex.groups[p] == explain::Group::Linguistic && rows.size() < o.synergy_top) rows.push_back(p);
      if (ex.groups[p] == explain::Group::Prosodic && cols.size() < o.synergy_top) cols.push_back(p);
    }
  }
  if (!rows.empty() && !cols.empty()) {
    std::vector<std::vector<double>> inst(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(
                                                                       std::min(xs.size(), o.synergy_instances)));
    const auto sm =
        explain::synergy_matrix(ex.fn, ex.background, inst, ex.players, ex.groups, rows, cols, o.synergy_draws, r.seed());
    r.write("synergy_raw.csv", explain::synergy_csv(sm, false));
    r.write("synergy_scaled.csv", explain::synergy_csv(sm, true));
  }
  r.manifest.parameters["explain_instances"] = std::to_string(atts.size());
  r.manifest.parameters["explain_samples"] = std::to_string(o.samples);
  r.manifest.parameters["explain_background"] = std::to_string(ex.background.size());
}

// ---- subcommands ------------------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 10;
  double noise = 0.0;
  double ri_fraction = 0.3;
  std::size_t turns = 12;
  std::size_t hard = 0;
};

void cmd_synth(const Globals& g, SynthArgs a, CLI::App& sub) {
  Run r = start(g, "synth");
  auto flag = [&](const char* name) { return sub.count(name) > 0; };
  if (!flag("--n")) a.n = static_cast<std::size_t>(r.cfg.get_int("synth", "n").value_or(static_cast<std::int64_t>(a.n)));
  if (!flag("--noise")) a.noise = r.cfg.get_double("synth", "noise").value_or(a.noise);
  if (!flag("--ri-fraction")) a.ri_fraction = r.cfg.get_double("synth", "ri_fraction").value_or(a.ri_fraction);
  if (!flag("--turns")) {
    a.turns = static_cast<std::size_t>(r.cfg.get_int("synth", "turns").value_or(static_cast<std::int64_t>(a.turns)));
  }
  if (!flag("--hard-ri")) {
    a.hard = static_cast<std::size_t>(r.cfg.get_int("synth", "hard_ri").value_or(static_cast<std::int64_t>(a.hard)));
  }
  synth::SynthOptions o;
  o.n_dialogues = a.n;
  o.noise_level = a.noise;
  o.ri_fraction = a.ri_fraction;
  o.turns_per_dialogue = a.turns;
  o.hard_ri = a.hard;
  o.seed = r.seed();
  const auto sc = synth::synth_corpus(o);
  synth::write_synth(sc, r.out);
  r.output("corpus.jsonl");
  for (const auto& [path, wav] : sc.audio) r.output(path);
  nlohmann::ordered_json cues;
  for (const auto& [id, c] : sc.cues) {
    cues[id] = {{"lexical", c.lexical}, {"prosodic", c.prosodic}, {"repetition", c.repetition}};
  }
  nlohmann::ordered_json j;
  j["cues"] = cues;
  j["hard_ri"] = sc.hard_ri_ids;
  r.write("cues.json", j.dump(2) + "\n");
  r.manifest.parameters = {{"n", std::to_string(a.n)},
                           {"noise", format_double(a.noise)},
                           {"ri_fraction", format_double(a.ri_fraction)},
                           {"turns", std::to_string(a.turns)},
                           {"hard_ri", std::to_string(a.hard)}};
  r.finish();
  std::cout << fmt::format("wrote {} segments in {} dialogues to {}\n", sc.dataset.segments().size(), a.n,
                           r.out.string());
}

struct IngestArgs {
  std::string corpus;
  std::optional<std::size_t> target_rd;
  bool no_balance = false;
  std::vector<double> ratios;
};

void cmd_ingest(const Globals& g, const IngestArgs& a) {
  Run r = start(g, "ingest");
  const fs::path src = a.corpus.empty() ? r.data / "corpus.jsonl" : fs::path(a.corpus);
  corpus::Dataset ds = load_corpus(r, src);
  const auto violations = corpus::validate_oir(ds);
  nlohmann::ordered_json vj = nlohmann::ordered_json::array();
  for (const auto& v : violations) {
    vj.push_back({{"sequence_id", v.sequence_id}, {"rule", corpus::violation_name(v.rule)}, {"detail", v.detail}});
  }

  std::size_t n_ri = 0, n_rd = 0;
  for (const auto& s : ds.segments()) {
    n_ri += s.role == corpus::Role::RI && !s.context_only;
    n_rd += s.role == corpus::Role::RD && !s.context_only;
  }
  const bool balance = !a.no_balance && r.cfg.get_bool("ingest", "balance").value_or(true);
  std::size_t target = n_ri;
  if (a.target_rd) target = *a.target_rd;
  else if (auto t = r.cfg.get_int("ingest", "target_rd")) target = static_cast<std::size_t>(*t);
  if (balance) ds = corpus::balance_dataset(ds, target, r.seed());

  std::vector<double> ratios = a.ratios;
  if (ratios.empty()) ratios = r.cfg.get_doubles("ingest", "ratios").value_or(std::vector<double>{0.7, 0.15, 0.15});
  if (ratios.size() != 3) throw Error(Errc::BadConfig, "split ratios need three values (train, val, test)");
  ds = corpus::split_dataset(ds, {ratios[0], ratios[1], ratios[2]}, r.seed());
  corpus::write_corpus(ds, r.out / "corpus.jsonl");
  r.output("corpus.jsonl");

  nlohmann::ordered_json summary;
  summary["segments"] = ds.segments().size();
  summary["sequences"] = ds.sequences().size();
  summary["ri"] = n_ri;
  summary["rd_available"] = n_rd;
  summary["rd_kept"] = balance ? target : n_rd;
  for (auto s : {corpus::Split::Train, corpus::Split::Val, corpus::Split::Test}) {
    summary["classifiable_" + std::string(corpus::split_name(s))] = ds.classifiable_indices(s).size();
  }
  summary["violations"] = vj;
  r.write("ingest_report.json", summary.dump(2) + "\n");
  r.manifest.parameters = {{"balance", balance ? "true" : "false"},
                           {"target_rd", std::to_string(target)},
                           {"ratios", fmt::format("{},{},{}", ratios[0], ratios[1], ratios[2])}};
  r.finish();
  std::cout << fmt::format("{} segments, {} RI, {} sequence violations\n", ds.segments().size(), n_ri,
                           violations.size());
}

void cmd_extract(const Globals& g, const std::string& kind) {
  Run r = start(g, "extract " + kind);
  const auto ds = load_data_corpus(r);
  const auto targets = ds.classifiable_indices();
  if (kind == "prosody") {
    audio::AudioSource src(r.data);
    auto t = pipeline::extract_prosody_table(ds, src, targets, r.threads());
    pipeline::impute_speaker_baseline(t, ds);
    write_feature_csv(t, r.out / "prosodic.csv");
    r.output("prosodic.csv");
    std::cout << fmt::format("prosodic features for {} segments\n", t.ids.size());
  } else {
    const auto k = r.cfg.get_int("linguistic", "bigrams").value_or(20);
    const auto vocab = linguistic::select_frequent_bigrams(ds, train_indices(ds), static_cast<std::size_t>(k));
    linguistic::write_vocabulary(vocab, r.out / "vocab.json");
    r.output("vocab.json");
    const auto t = pipeline::extract_linguistic_table(ds, vocab, targets);
    write_feature_csv(t, r.out / "linguistic.csv");
    r.output("linguistic.csv");
    r.manifest.versions["bigram_vocabulary"] = vocab.version();
    std::cout << fmt::format("linguistic features for {} segments\n", t.ids.size());
  }
  r.manifest.parameters["threads"] = std::to_string(r.threads());
  r.finish();
}

void cmd_context(const Globals& g, const std::string& ctx) {
  Run r = start(g, "context");
  const auto ds = load_data_corpus(r);
  auto cfg = eval::parse_context(ctx);
  if (auto t = r.cfg.get_int("context", "max_tokens")) cfg.max_tokens = static_cast<int>(*t);
  cfg.check();
  const std::string name = "context_" + eval::context_tag(cfg) + ".jsonl";
  context::write_context_jsonl(ds, cfg, ds.classifiable_indices(), r.out / name);
  r.output(name);
  r.manifest.parameters["context"] = cfg.label();
  r.finish();
}

void cmd_embed_import(const Globals& g, const std::string& text, const std::string& audio, const std::string& ctx,
                      bool lenient) {
  Run r = start(g, "embed-import");
  if (text.empty() == audio.empty()) throw Error(Errc::BadConfig, "give exactly one of --text or --audio");
  const auto ds = load_data_corpus(r);
  const fs::path src = need(text.empty() ? audio : text);
  r.manifest.add_input(src);
  const auto store = embeddings::load_embeddings(src);
  const auto want = text.empty() ? embeddings::Modality::Audio : embeddings::Modality::Text;
  if (store.modality() != want) {
    throw Error(Errc::DataError, src.string() + " holds " + std::string(embeddings::modality_name(store.modality())) +
                                     " embeddings");
  }
  std::size_t missing = 0;
  std::string first;
  for (std::size_t i : ds.classifiable_indices()) {
    const auto& id = ds.segments()[i].segment_id;
    if (!store.contains(id)) {
      if (first.empty()) first = id;
      ++missing;
    }
  }
  if (missing && !lenient) {
    throw Error(Errc::MissingSegment, fmt::format("{}: no vector for {} segments (first: {})", src.string(), missing, first));
  }
  if (missing) std::cerr << fmt::format("warning: {} segments have no vector and will be excluded\n", missing);
  const std::string name = text.empty() ? "audio.emb1" : "text_" + eval::context_tag(eval::parse_context(ctx)) + ".emb1";
  fs::copy_file(src, r.out / name, fs::copy_options::overwrite_existing);
  r.output(name);
  r.manifest.parameters = {{"model_tag", store.model_tag()},
                           {"dim", std::to_string(store.dim())},
                           {"vectors", std::to_string(store.size())},
                           {"missing", std::to_string(missing)}};
  r.finish();
}

struct ModelArgs {
  std::string variant = "Multi_Ours";
  std::string context;
  std::string embeddings;
  bool lenient = false;
};

void cmd_train(const Globals& g, const ModelArgs& a) {
  Run r = start(g, "train");
  const auto ds = load_data_corpus(r);
  const eval::ExperimentData data(ds, prosodic_table(r, ds), linguistic_table(r, ds),
                                  embedding_options(r, a.embeddings, a.lenient));
  const auto v = variant_of(a.variant, a.context);
  const auto m = model_config(r);
  record_variant(r, v, m);
  const auto tm = eval::train_model(data, v, m, train_indices(ds), split_indices(ds, corpus::Split::Val));
  model::write_checkpoint(eval::to_checkpoint(tm), r.out / "model.oirm");
  r.output("model.oirm");
  eval::RunResult rr;
  rr.variant = v;
  rr.histories.push_back(tm.history);
  r.write("history.csv", eval::history_csv({rr}));
  r.finish();
  std::cout << fmt::format("trained {} ({}) for {} epochs\n", v.name, v.context.label(), tm.history.size());
}

void cmd_cv(const Globals& g, const ModelArgs& a, std::optional<int> k_flag) {
  Run r = start(g, "cv");
  const auto ds = load_data_corpus(r);
  const eval::ExperimentData data(ds, prosodic_table(r, ds), linguistic_table(r, ds),
                                  embedding_options(r, a.embeddings, a.lenient));
  const auto v = variant_of(a.variant, a.context);
  const auto m = model_config(r);
  record_variant(r, v, m);
  const int k = k_flag.value_or(static_cast<int>(r.cfg.get_int("cv", "k").value_or(10)));
  r.manifest.parameters["k"] = std::to_string(k);
  const std::vector<eval::RunResult> runs = {eval::cross_validate(data, v, m, k, r.seed())};
  r.write("metrics.csv", eval::metrics_csv(runs));
  r.write("metrics.md", eval::metrics_markdown(runs));
  r.write("history.csv", eval::history_csv(runs));
  r.finish();
  std::cout << eval::metrics_markdown(runs);
}

void cmd_evaluate(const Globals& g, const ModelArgs& a, const std::string& model_path) {
  Run r = start(g, "evaluate");
  const auto ds = load_data_corpus(r);
  const auto tm = load_model(r, model_path);
  const eval::ExperimentData data(ds, prosodic_table(r, ds), linguistic_table(r, ds),
                                  embedding_options(r, a.embeddings, a.lenient));
  const auto set = eval::build_samples(data, tm.plan, test_indices(ds));
  if (set.samples.empty()) throw Error(Errc::EmptyInput, "no test samples");
  const auto p = eval::predict(tm, set);
  std::vector<int> golds;
  for (const auto& s : set.samples) golds.push_back(s.label);
  std::string csv = "model,context,threshold_rule,threshold,precision,recall,macro_f1,f1_ri,f1_rd\n";
  std::string md = "| Threshold | Precision | Recall | Macro-F1 |\n|---|---|---|---|\n";
  for (auto [rule, t] : {std::pair{"fixed", 0.5}, std::pair{"validation", tm.threshold}}) {
    const auto mt = eval::compute_metrics(eval::threshold(p, t), golds);
    for (const auto& w : mt.warnings) std::cerr << "warning: " << w << "\n";
    csv += fmt::format("{},{},{},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f}\n", tm.plan.variant.name,
                       tm.plan.variant.context.label(), rule, t, mt.precision, mt.recall, mt.macro_f1, mt.f1_positive,
                       mt.f1_negative);
    md += fmt::format("| {} ({:.3f}) | {:.2f} | {:.2f} | {:.2f} |\n", rule, t, mt.precision, mt.recall, mt.macro_f1);
  }
  r.write("metrics.csv", csv);
  r.write("metrics.md", md);
  r.write("predictions.csv", predictions_csv(ds, set, p));
  r.finish();
  std::cout << md;
}

void cmd_scenarios(const Globals& g, const ModelArgs& a, int rq, std::optional<int> k_flag) {
  Run r = start(g, "scenarios");
  r.manifest.parameters["rq"] = std::to_string(rq);
  const auto ds = load_data_corpus(r);
  const eval::ExperimentData data(ds, prosodic_table(r, ds), linguistic_table(r, ds),
                                  embedding_options(r, a.embeddings, a.lenient));
  const auto m = model_config(r);
  r.manifest.parameters["model_config"] = m.to_json();
  if (rq == 3) {
    const auto v = eval::find_variant("Multi_Ours");
    const auto tm = eval::train_model(data, v, m, train_indices(ds), split_indices(ds, corpus::Split::Val));
    model::write_checkpoint(eval::to_checkpoint(tm), r.out / "model.oirm");
    r.output("model.oirm");
    run_explain(r, data, tm, explain_options(r));
    r.finish();
    return;
  }
  const int k = k_flag.value_or(static_cast<int>(r.cfg.get_int("cv", "k").value_or(10)));
  r.manifest.parameters["k"] = std::to_string(k);
  const auto variants = rq == 4 ? eval::context_variants() : eval::modality_variants();
  const auto runs = eval::run_scenarios(data, variants, m, k, r.seed(), r.threads());
  r.write("metrics.csv", eval::metrics_csv(runs));
  r.write("metrics.md", eval::metrics_markdown(runs));
  r.write("history.csv", eval::history_csv(runs));
  r.finish();
  std::cout << eval::metrics_markdown(runs);
}

void cmd_explain(const Globals& g, const ModelArgs& a, const std::string& model_path) {
  Run r = start(g, "explain");
  const auto ds = load_data_corpus(r);
  const auto tm = load_model(r, model_path);
  const eval::ExperimentData data(ds, prosodic_table(r, ds), linguistic_table(r, ds),
                                  embedding_options(r, a.embeddings, a.lenient));
  run_explain(r, data, tm, explain_options(r));
  r.finish();
}

void cmd_report_errors(const Globals& g, const ModelArgs& a, const std::string& model_path) {
  Run r = start(g, "report-errors");
  const auto ds = load_data_corpus(r);
  const auto tm = load_model(r, model_path);
  const eval::ExperimentData data(ds, prosodic_table(r, ds), linguistic_table(r, ds),
                                  embedding_options(r, a.embeddings, a.lenient));
  const auto set = eval::build_samples(data, tm.plan, test_indices(ds));
  const auto p = eval::predict(tm, set);
  const auto names = eval::handcrafted_names(tm.plan);
  std::vector<eval::ReportItem> items;
  for (std::size_t k = 0; k < p.size(); ++k) {
    items.push_back({set.indices[k], p[k], names, eval::handcrafted_values(set.samples[k])});
  }
  const auto rep = eval::error_report(ds, items, 0.5);
  r.write("errors.md", eval::error_report_markdown(rep));
  r.write("errors.json", eval::error_report_json(rep));
  r.finish();
  std::cout << fmt::format("FN rate {:.2f} % ({} of {} RIs)\n", rep.fn_rate, rep.false_negatives, rep.positives);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Other-initiated repair detection: corpus ingestion, feature extraction, training and analysis"};
  app.name("oirtool");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "TOML configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for every random choice (default 42)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for extraction and scenario fan-out")
      ->check(CLI::PositiveNumber);
  app.add_option("--data", g.data, "Prepared data directory (default: the output directory)");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus with planted repair cues");
  synth_cmd->add_option("--n", sa.n, "Number of dialogues")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", sa.noise, "Probability of dropping each cue family")->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--ri-fraction", sa.ri_fraction, "Approximate RI share of RI+RD segments");
  synth_cmd->add_option("--turns", sa.turns, "Turns per dialogue")->check(CLI::Range(3, 10000));
  synth_cmd->add_option("--hard-ri", sa.hard, "RIs with every cue removed");

  IngestArgs ia;
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse, validate, balance and split a corpus");
  ingest_cmd->add_option("--corpus", ia.corpus, "Corpus JSONL (default: <data>/corpus.jsonl)");
  ingest_cmd->add_option("--target-rd", ia.target_rd, "RD segments to keep (default: the RI count)");
  ingest_cmd->add_flag("--no-balance", ia.no_balance, "Keep every RD segment");
  ingest_cmd->add_option("--ratios", ia.ratios, "Train, val and test fractions")->expected(3)->delimiter(',');

  std::string kind;
  auto* extract_cmd = app.add_subcommand("extract", "Extract handcrafted features");
  extract_cmd->add_option("kind", kind, "prosody or linguistic")
      ->required()
      ->check(CLI::IsMember({"prosody", "linguistic"}));

  std::string ctx_label = "Full(2)";
  auto* context_cmd = app.add_subcommand("context", "Write micro-context JSONL for the embedding exporter");
  context_cmd->add_option("--context", ctx_label, "Context configuration, e.g. Full(2), Past(max), Current")
      ->capture_default_str();

  std::string emb_text, emb_audio, emb_ctx = "Full(2)";
  bool emb_lenient = false;
  auto* import_cmd = app.add_subcommand("embed-import", "Validate and install an EMB1 embedding file");
  import_cmd->add_option("--text", emb_text, "Text embeddings (EMB1)");
  import_cmd->add_option("--audio", emb_audio, "Audio embeddings (EMB1)");
  import_cmd->add_option("--context", emb_ctx, "Context the text embeddings were computed on")->capture_default_str();
  import_cmd->add_flag("--lenient", emb_lenient, "Accept files that miss segments; they are excluded later");

  ModelArgs ma;
  std::string model_path;
  std::optional<int> k_flag;
  int rq = 1;
  auto add_model_args = [&](CLI::App* c) {
    c->add_option("--embeddings", ma.embeddings, "Directory with text_<context>.emb1 and audio.emb1");
    c->add_flag("--lenient", ma.lenient, "Drop segments without embeddings instead of failing");
  };
  auto add_variant_args = [&](CLI::App* c) {
    c->add_option("--variant", ma.variant, "Model variant")
        ->check(CLI::IsMember({"Text_Emb", "Audio_Emb", "Multi_Emb", "Text_Ling", "Audio_Pros", "Multi_LingPros",
                               "Multi_Ours"}))
        ->capture_default_str();
    c->add_option("--context", ma.context, "Context configuration (default Full(2))");
  };
  auto* train_cmd = app.add_subcommand("train", "Train one model on the train split");
  add_variant_args(train_cmd);
  add_model_args(train_cmd);
  auto* cv_cmd = app.add_subcommand("cv", "Cross-validate one model over the train split");
  add_variant_args(cv_cmd);
  add_model_args(cv_cmd);
  cv_cmd->add_option("--k", k_flag, "Folds (default 10)")->check(CLI::Range(2, 1000));
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a trained model on the test split");
  eval_cmd->add_option("--model", model_path, "Checkpoint (.oirm)")->required();
  add_model_args(eval_cmd);
  auto* scen_cmd = app.add_subcommand("scenarios", "Run a research-question suite");
  scen_cmd->add_option("--rq", rq, "1 and 2: modality variants; 3: attributions; 4: context variants")
      ->required()
      ->check(CLI::IsMember({1, 2, 3, 4}));
  scen_cmd->add_option("--k", k_flag, "Folds (default 10)")->check(CLI::Range(2, 1000));
  add_model_args(scen_cmd);
  auto* explain_cmd = app.add_subcommand("explain", "Feature attributions and synergy for a trained model");
  explain_cmd->add_option("--model", model_path, "Checkpoint (.oirm)")->required();
  add_model_args(explain_cmd);
  auto* errors_cmd = app.add_subcommand("report-errors", "False-negative analysis on the test split");
  errors_cmd->add_option("--model", model_path, "Checkpoint (.oirm)")->required();
  add_model_args(errors_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth_cmd) cmd_synth(g, sa, *synth_cmd);
    else if (*ingest_cmd) cmd_ingest(g, ia);
    else if (*extract_cmd) cmd_extract(g, kind);
    else if (*context_cmd) cmd_context(g, ctx_label);
    else if (*import_cmd) cmd_embed_import(g, emb_text, emb_audio, emb_ctx, emb_lenient);
    else if (*train_cmd) cmd_train(g, ma);
    else if (*cv_cmd) cmd_cv(g, ma, k_flag);
    else if (*eval_cmd) cmd_evaluate(g, ma, model_path);
    else if (*scen_cmd) cmd_scenarios(g, ma, rq, k_flag);
    else if (*explain_cmd) cmd_explain(g, ma, model_path);
    else if (*errors_cmd) cmd_report_errors(g, ma, model_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == Errc::BadConfig ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
