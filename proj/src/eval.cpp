#include "oir/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include "json.hpp"
#include "oir/error.hpp"
#include "oir/rng.hpp"

namespace oir::eval {

using json = nlohmann::ordered_json;
using model::Modality;

bool Variant::uses(Modality m) const {
  return std::find(modalities.begin(), modalities.end(), m) != modalities.end();
}

std::string context_tag(const context::ContextConfig& cfg) {
  std::string s(context::mode_name(cfg.mode));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (cfg.mode == context::Mode::Current) return s;
  return s + "_" + (cfg.window ? std::to_string(*cfg.window) : std::string("max"));
}

context::ContextConfig parse_context(const std::string& s) {
  std::string mode = s, window;
  if (const auto p = s.find('('); p != std::string::npos && s.back() == ')') {
    mode = s.substr(0, p);
    window = s.substr(p + 1, s.size() - p - 2);
  } else if (const auto u = s.find('_'); u != std::string::npos) {
    mode = s.substr(0, u);
    window = s.substr(u + 1);
  }
  std::string canon = mode;
  std::transform(canon.begin(), canon.end(), canon.begin(), [](unsigned char c) { return std::tolower(c); });
  if (!canon.empty()) canon[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(canon[0])));
  const auto m = context::parse_mode(canon);
  if (!m) throw Error(Errc::BadConfig, "unknown context mode in '" + s + "'");
  context::ContextConfig cfg;
  cfg.mode = *m;
  if (*m == context::Mode::Current) {
    cfg.window = 0;
  } else if (window.empty() || window == "max") {
    cfg.window = window.empty() ? std::optional<int>(2) : std::nullopt;
  } else {
    try {
      std::size_t used = 0;
      cfg.window = std::stoi(window, &used);
      if (used != window.size()) throw std::invalid_argument(window);
    } catch (const std::exception&) {
      throw Error(Errc::BadConfig, "bad context window in '" + s + "'");
    }
  }
  cfg.check();
  return cfg;
}

namespace {

context::ContextConfig ctx(context::Mode m, std::optional<int> w) {
  context::ContextConfig c;
  c.mode = m;
  c.window = w;
  return c;
}

const std::vector<std::pair<std::string, std::vector<Modality>>>& variant_table() {
  static const std::vector<std::pair<std::string, std::vector<Modality>>> t = {
      {"Text_Emb", {Modality::TextEmb}},
      {"Audio_Emb", {Modality::AudioEmb}},
      {"Multi_Emb", {Modality::TextEmb, Modality::AudioEmb}},
      {"Text_Ling", {Modality::Ling}},
      {"Audio_Pros", {Modality::Pros}},
      {"Multi_LingPros", {Modality::Ling, Modality::Pros}},
      {"Multi_Ours", {Modality::TextEmb, Modality::AudioEmb, Modality::Ling, Modality::Pros}},
  };
  return t;
}

}  // namespace

std::vector<Variant> modality_variants() {
  std::vector<Variant> out;
  for (const auto& [name, mods] : variant_table()) out.push_back({name, mods, ctx(context::Mode::Full, 2)});
  return out;
}

std::vector<Variant> context_variants() {
  using M = context::Mode;
  std::vector<Variant> out;
  for (const auto& c : {ctx(M::Past, 2), ctx(M::Past, std::nullopt), ctx(M::Current, 0), ctx(M::Future, std::nullopt),
                        ctx(M::Full, 2), ctx(M::Full, std::nullopt)}) {
    out.push_back(find_variant("Multi_Ours", c));
  }
  return out;
}

Variant find_variant(const std::string& name, const std::optional<context::ContextConfig>& context) {
  for (const auto& [n, mods] : variant_table()) {
    if (n == name) return {n, mods, context.value_or(ctx(context::Mode::Full, 2))};
  }
  throw Error(Errc::BadConfig, "unknown model variant '" + name + "'");
}

// ---- data -----------------------------------------------------------------------------

namespace {

std::map<std::string, std::size_t> row_map(const FeatureTable& t) {
  std::map<std::string, std::size_t> m;
  for (std::size_t r = 0; r < t.ids.size(); ++r) m.emplace(t.ids[r], r);
  return m;
}

}  // namespace

ExperimentData::ExperimentData(const corpus::Dataset& ds, FeatureTable prosodic, FeatureTable linguistic,
                               EmbeddingOptions emb)
    : ds_(&ds), pros_(std::move(prosodic)), ling_(std::move(linguistic)), emb_(std::move(emb)) {
  pros_rows_ = row_map(pros_);
  ling_rows_ = row_map(ling_);
}

std::size_t ExperimentData::prosodic_row(const std::string& id) const {
  const auto it = pros_rows_.find(id);
  if (it == pros_rows_.end()) throw Error(Errc::DataError, "no prosodic features for segment " + id);
  return it->second;
}

std::size_t ExperimentData::linguistic_row(const std::string& id) const {
  const auto it = ling_rows_.find(id);
  if (it == ling_rows_.end()) throw Error(Errc::DataError, "no linguistic features for segment " + id);
  return it->second;
}

const embeddings::EmbeddingStore& ExperimentData::text(const context::ContextConfig& cfg) const {
  std::lock_guard lock(mu_);
  const std::string tag = context_tag(cfg);
  auto& slot = text_[tag];
  if (slot) return *slot;
  if (!emb_.dir.empty()) {
    auto store = embeddings::load_embeddings(emb_.dir / ("text_" + tag + ".emb1"));
    if (store.modality() != embeddings::Modality::Text) {
      throw Error(Errc::DataError, "text_" + tag + ".emb1 does not hold text embeddings");
    }
    slot = std::make_unique<embeddings::EmbeddingStore>(std::move(store));
    return *slot;
  }
  std::map<std::string, std::string> texts;
  for (std::size_t i : ds_->classifiable_indices()) {
    try {
      texts[ds_->segments()[i].segment_id] = context::assemble_micro_context(*ds_, i, cfg).text();
    } catch (const Error& e) {
      // The target alone overflows the budget: it simply has no vector.
      if (e.code() != Errc::TargetExceedsBudget) throw;
    }
  }
  slot = std::make_unique<embeddings::EmbeddingStore>(embeddings::hashed_text_embeddings(texts, emb_.text_dim));
  return *slot;
}

const embeddings::EmbeddingStore& ExperimentData::audio() const {
  std::lock_guard lock(mu_);
  if (audio_) return *audio_;
  if (!emb_.dir.empty()) {
    auto store = embeddings::load_embeddings(emb_.dir / "audio.emb1");
    if (store.modality() != embeddings::Modality::Audio) {
      throw Error(Errc::DataError, "audio.emb1 does not hold audio embeddings");
    }
    audio_ = std::make_unique<embeddings::EmbeddingStore>(std::move(store));
    return *audio_;
  }
  // Fixture: z-scored current-segment prosodic features, statistics from the
  // training split (all rows when the corpus is unsplit).
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < pros_.columns.size(); ++c) {
    if (context::feature_scope(pros_.columns[c]) == FeatureScope::Current) cols.push_back(c);
  }
  const bool split = !ds_->split_assignment().empty();
  std::vector<double> mean(cols.size(), 0.0), sq(cols.size(), 0.0), n(cols.size(), 0.0);
  for (std::size_t r = 0; r < pros_.ids.size(); ++r) {
    if (split && ds_->split_of(pros_.ids[r]) != corpus::Split::Train) continue;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (!pros_.present[r][cols[k]]) continue;
      const double v = pros_.values[r][cols[k]];
      mean[k] += v;
      sq[k] += v * v;
      n[k] += 1;
    }
  }
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (n[k] > 0) {
      mean[k] /= n[k];
      sq[k] = std::sqrt(std::max(0.0, sq[k] / n[k] - mean[k] * mean[k]));
    }
  }
  const double norm = cols.empty() ? 1.0 : 1.0 / std::sqrt(static_cast<double>(cols.size()));
  std::map<std::string, std::vector<double>> summaries;
  for (std::size_t r = 0; r < pros_.ids.size(); ++r) {
    std::vector<double> s(cols.size(), 0.0);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (pros_.present[r][cols[k]] && sq[k] > 1e-12) s[k] = norm * (pros_.values[r][cols[k]] - mean[k]) / sq[k];
    }
    summaries[pros_.ids[r]] = std::move(s);
  }
  audio_ = std::make_unique<embeddings::EmbeddingStore>(
      embeddings::feature_audio_embeddings(summaries, emb_.audio_dim, emb_.seed));
  return *audio_;
}

// ---- feature plans and samples ----------------------------------------------------------

model::InputDims FeaturePlan::dims() const {
  model::InputDims d{};
  if (variant.uses(Modality::TextEmb)) d[0] = text_dim;
  if (variant.uses(Modality::AudioEmb)) d[1] = audio_dim;
  if (variant.uses(Modality::Ling)) d[2] = ling.dim();
  if (variant.uses(Modality::Pros)) d[3] = pros.dim();
  return d;
}

namespace {

json context_json(const context::ContextConfig& c) {
  json j;
  j["mode"] = std::string(context::mode_name(c.mode));
  if (c.window) j["window"] = *c.window; else j["window"] = nullptr;
  j["max_tokens"] = c.max_tokens;
  return j;
}

context::ContextConfig context_from(const json& j) {
  context::ContextConfig c;
  const auto m = context::parse_mode(j.at("mode").get<std::string>());
  if (!m) throw Error(Errc::DataError, "bad context mode in model manifest");
  c.mode = *m;
  if (j.at("window").is_null()) c.window = std::nullopt; else c.window = j.at("window").get<int>();
  c.max_tokens = j.at("max_tokens").get<int>();
  return c;
}

}  // namespace

std::string FeaturePlan::to_json() const {
  json j;
  j["variant"] = variant.name;
  std::vector<std::string> mods;
  for (auto m : variant.modalities) mods.emplace_back(model::modality_name(m));
  j["modalities"] = mods;
  j["context"] = context_json(variant.context);
  j["ling_columns"] = ling_columns;
  j["pros_columns"] = pros_columns;
  j["ling"] = json::parse(ling.to_json());
  j["pros"] = json::parse(pros.to_json());
  j["text_dim"] = text_dim;
  j["audio_dim"] = audio_dim;
  return j.dump();
}

FeaturePlan FeaturePlan::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    FeaturePlan p;
    p.variant.name = j.at("variant").get<std::string>();
    for (const auto& m : j.at("modalities")) {
      const auto mod = model::parse_modality(m.get<std::string>());
      if (!mod) throw Error(Errc::DataError, "unknown modality in model manifest");
      p.variant.modalities.push_back(*mod);
    }
    p.variant.context = context_from(j.at("context"));
    p.ling_columns = j.at("ling_columns").get<std::vector<std::string>>();
    p.pros_columns = j.at("pros_columns").get<std::vector<std::string>>();
    p.ling = model::Standardizer::from_json(j.at("ling").dump());
    p.pros = model::Standardizer::from_json(j.at("pros").dump());
    p.text_dim = j.at("text_dim").get<std::uint32_t>();
    p.audio_dim = j.at("audio_dim").get<std::uint32_t>();
    return p;
  } catch (const json::exception& e) {
    throw Error(Errc::DataError, std::string("bad feature plan: ") + e.what());
  }
}

namespace {

std::vector<std::string> allowed_columns(const FeatureTable& t, const context::ContextConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& c : t.columns) {
    if (context::scope_allowed(cfg.mode, context::feature_scope(c))) out.push_back(c);
  }
  return out;
}

// Values and presence of `columns` for one table row.
void gather(const FeatureTable& t, std::size_t row, const std::vector<std::size_t>& cols, std::vector<double>& v,
            std::vector<std::uint8_t>& p) {
  v.resize(cols.size());
  p.resize(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) {
    v[k] = t.values[row][cols[k]];
    p[k] = t.present[row][cols[k]];
  }
}

std::vector<std::size_t> column_indices(const FeatureTable& t, const std::vector<std::string>& names) {
  std::vector<std::size_t> out;
  for (const auto& n : names) out.push_back(t.column(n));
  return out;
}

model::Standardizer fit_standardizer(const FeatureTable& t, const std::vector<std::string>& names,
                                     const std::vector<std::size_t>& rows) {
  const auto cols = column_indices(t, names);
  std::vector<std::vector<double>> values(rows.size());
  std::vector<std::vector<std::uint8_t>> present(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) gather(t, rows[r], cols, values[r], present[r]);
  model::Standardizer s;
  s.fit(names, values, present);
  return s;
}

}  // namespace

FeaturePlan fit_plan(const ExperimentData& data, const Variant& v, const std::vector<std::size_t>& train) {
  FeaturePlan p;
  p.variant = v;
  const auto& segs = data.dataset().segments();
  if (v.uses(Modality::Ling)) {
    p.ling_columns = allowed_columns(data.linguistic(), v.context);
    std::vector<std::size_t> rows;
    for (std::size_t i : train) rows.push_back(data.linguistic_row(segs[i].segment_id));
    p.ling = fit_standardizer(data.linguistic(), p.ling_columns, rows);
    if (p.ling.dim() == 0) throw Error(Errc::DataError, "every linguistic feature is constant on the training rows");
  }
  if (v.uses(Modality::Pros)) {
    p.pros_columns = allowed_columns(data.prosodic(), v.context);
    std::vector<std::size_t> rows;
    for (std::size_t i : train) rows.push_back(data.prosodic_row(segs[i].segment_id));
    p.pros = fit_standardizer(data.prosodic(), p.pros_columns, rows);
    if (p.pros.dim() == 0) throw Error(Errc::DataError, "every prosodic feature is constant on the training rows");
  }
  if (v.uses(Modality::TextEmb)) p.text_dim = data.text(v.context).dim();
  if (v.uses(Modality::AudioEmb)) p.audio_dim = data.audio().dim();
  return p;
}

SampleSet build_samples(const ExperimentData& data, const FeaturePlan& plan, const std::vector<std::size_t>& indices) {
  const auto& v = plan.variant;
  const embeddings::EmbeddingStore* text = v.uses(Modality::TextEmb) ? &data.text(v.context) : nullptr;
  const embeddings::EmbeddingStore* audio = v.uses(Modality::AudioEmb) ? &data.audio() : nullptr;
  if (text && text->dim() != plan.text_dim) throw Error(Errc::DimMismatch, "text embedding width differs from the model");
  if (audio && audio->dim() != plan.audio_dim) {
    throw Error(Errc::DimMismatch, "audio embedding width differs from the model");
  }
  const auto ling_cols = v.uses(Modality::Ling) ? column_indices(data.linguistic(), plan.ling_columns)
                                                : std::vector<std::size_t>{};
  const auto pros_cols = v.uses(Modality::Pros) ? column_indices(data.prosodic(), plan.pros_columns)
                                                : std::vector<std::size_t>{};
  const bool strict = data.embedding_options().strict;
  SampleSet out;
  std::vector<double> vals;
  std::vector<std::uint8_t> pres;
  auto to_float = [](const std::vector<double>& x) { return std::vector<float>(x.begin(), x.end()); };
  for (std::size_t i : indices) {
    const auto& seg = data.dataset().segments()[i];
    model::Sample<float> s;
    s.label = seg.label();
    bool missing = false;
    for (auto [store, slot] : {std::pair{text, 0}, std::pair{audio, 1}}) {
      if (!store) continue;
      const auto* vec = store->find(seg.segment_id);
      if (!vec) {
        if (strict) store->get(seg.segment_id);  // throws MissingSegment
        missing = true;
        break;
      }
      s.inputs[slot] = *vec;
    }
    if (missing) {
      out.excluded.push_back(seg.segment_id);
      continue;
    }
    if (!ling_cols.empty()) {
      gather(data.linguistic(), data.linguistic_row(seg.segment_id), ling_cols, vals, pres);
      s.inputs[2] = to_float(plan.ling.transform(vals, pres));
    }
    if (!pros_cols.empty()) {
      gather(data.prosodic(), data.prosodic_row(seg.segment_id), pros_cols, vals, pres);
      s.inputs[3] = to_float(plan.pros.transform(vals, pres));
    }
    out.samples.push_back(std::move(s));
    out.indices.push_back(i);
  }
  return out;
}

std::vector<std::string> handcrafted_names(const FeaturePlan& plan) {
  std::vector<std::string> n;
  if (plan.variant.uses(Modality::Ling)) n = plan.ling.output_names;
  if (plan.variant.uses(Modality::Pros)) n.insert(n.end(), plan.pros.output_names.begin(), plan.pros.output_names.end());
  return n;
}

std::vector<double> handcrafted_values(const model::Sample<float>& s) {
  std::vector<double> v(s.inputs[2].begin(), s.inputs[2].end());
  v.insert(v.end(), s.inputs[3].begin(), s.inputs[3].end());
  return v;
}

// ---- training --------------------------------------------------------------------------

namespace {

std::vector<int> labels_of(const SampleSet& s) {
  std::vector<int> y;
  for (const auto& x : s.samples) y.push_back(x.label);
  return y;
}

model::ModelConfig with_variant(model::ModelConfig cfg, const Variant& v) {
  cfg.modalities = v.modalities;
  std::sort(cfg.modalities.begin(), cfg.modalities.end());
  cfg.check();
  return cfg;
}

}  // namespace

TrainedModel train_model(const ExperimentData& data, const Variant& v, const model::ModelConfig& cfg,
                         const std::vector<std::size_t>& train, const std::vector<std::size_t>& val) {
  const model::ModelConfig c = with_variant(cfg, v);
  FeaturePlan plan = fit_plan(data, v, train);
  const SampleSet tr = build_samples(data, plan, train);
  const SampleSet va = build_samples(data, plan, val);
  if (tr.samples.empty()) throw Error(Errc::TooFewSamples, "no training samples");
  auto result = model::train<float>(c, plan.dims(), tr.samples, va.samples);
  double t = 0.5;
  if (!va.samples.empty()) {
    const auto probs = model::predict(result.net, va.samples);
    t = best_threshold(probs, labels_of(va));
  }
  return TrainedModel{std::move(plan), std::move(result.net), std::move(result.history), t};
}

model::Checkpoint to_checkpoint(const TrainedModel& m) {
  json j;
  j["plan"] = json::parse(m.plan.to_json());
  j["threshold"] = m.threshold;
  json hist = json::array();
  for (const auto& e : m.history) {
    hist.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"val_loss", e.val_loss},
                    {"val_macro_f1", e.val_macro_f1},
                    {"lr", e.lr}});
  }
  j["history"] = hist;
  std::vector<std::string> dropped = m.plan.ling.dropped;
  dropped.insert(dropped.end(), m.plan.pros.dropped.begin(), m.plan.pros.dropped.end());
  j["dropped_constant_features"] = dropped;
  return model::make_checkpoint(m.net, j.dump());
}

TrainedModel from_checkpoint(const model::Checkpoint& ck) {
  json j;
  try {
    j = json::parse(ck.manifest_json);
  } catch (const json::exception& e) {
    throw Error(Errc::DataError, std::string("bad checkpoint manifest: ") + e.what());
  }
  if (!j.contains("plan")) throw Error(Errc::DataError, "checkpoint manifest has no feature plan");
  FeaturePlan plan = FeaturePlan::from_json(j["plan"].dump());
  if (plan.dims() != ck.dims) throw Error(Errc::DimMismatch, "feature plan and checkpoint disagree on input widths");
  std::vector<model::EpochRecord> hist;
  for (const auto& e : j.value("history", json::array())) {
    hist.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>(),
                    e.at("val_macro_f1").get<double>(), e.at("lr").get<double>()});
  }
  return TrainedModel{std::move(plan), model::restore<float>(ck), std::move(hist), j.value("threshold", 0.5)};
}

std::vector<double> predict(const TrainedModel& m, const SampleSet& set) { return model::predict(m.net, set.samples); }

RunResult cross_validate(const ExperimentData& data, const Variant& v, const model::ModelConfig& cfg, int k,
                         std::uint64_t seed) {
  const auto& ds = data.dataset();
  const bool split = !ds.split_assignment().empty();
  const auto pool = split ? ds.classifiable_indices(corpus::Split::Train) : ds.classifiable_indices();
  const auto val = split ? ds.classifiable_indices(corpus::Split::Val) : std::vector<std::size_t>{};
  std::vector<int> labels;
  std::vector<std::string> groups;
  for (std::size_t i : pool) {
    const auto& s = ds.segments()[i];
    labels.push_back(s.label());
    groups.push_back(s.sequence_id.value_or(s.segment_id));
  }
  const auto fold_of = model::stratified_group_folds(labels, groups, k, seed);

  RunResult r;
  r.variant = v;
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> train, held;
    for (std::size_t n = 0; n < pool.size(); ++n) (fold_of[n] == f ? held : train).push_back(pool[n]);
    model::ModelConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(f);
    const TrainedModel m = train_model(data, v, c, train, val);
    const SampleSet test = build_samples(data, m.plan, held);
    if (test.samples.empty()) throw Error(Errc::TooFewSamples, "a held-out fold has no usable samples");
    const auto probs = predict(m, test);
    const auto golds = labels_of(test);
    r.folds.push_back(compute_metrics(threshold(probs, 0.5), golds));
    r.folds_tuned.push_back(compute_metrics(threshold(probs, m.threshold), golds));
    r.thresholds.push_back(m.threshold);
    r.histories.push_back(m.history);
  }
  auto agg = [&](const std::vector<Metrics>& ms, double Metrics::*field) {
    std::vector<double> xs;
    for (const auto& m : ms) xs.push_back(m.*field);
    return aggregate(xs);
  };
  r.precision = agg(r.folds, &Metrics::precision);
  r.recall = agg(r.folds, &Metrics::recall);
  r.macro_f1 = agg(r.folds, &Metrics::macro_f1);
  r.macro_f1_tuned = agg(r.folds_tuned, &Metrics::macro_f1);
  return r;
}

std::vector<RunResult> run_scenarios(const ExperimentData& data, const std::vector<Variant>& variants,
                                     const model::ModelConfig& cfg, int k, std::uint64_t seed, int threads) {
  std::vector<std::optional<RunResult>> results(variants.size());
  std::vector<std::optional<Error>> failures(variants.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t n = next++; n < variants.size(); n = next++) {
      try {
        results[n] = cross_validate(data, variants[n], cfg, k, seed);
      } catch (const Error& e) {
        failures[n] = e;
      }
    }
  };
  const auto nt = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), variants.size());
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures) {
    if (f) throw *f;
  }
  std::vector<RunResult> out;
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

std::string metrics_csv(const std::vector<RunResult>& runs) {
  std::string s =
      "model,context,folds,precision_mean,precision_std,recall_mean,recall_std,macro_f1_mean,macro_f1_std,"
      "macro_f1_valthr_mean,macro_f1_valthr_std\n";
  for (const auto& r : runs) {
    s += fmt::format("{},{},{},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f}\n", r.variant.name,
                     r.variant.context.label(), r.folds.size(), r.precision.mean, r.precision.std, r.recall.mean,
                     r.recall.std, r.macro_f1.mean, r.macro_f1.std, r.macro_f1_tuned.mean, r.macro_f1_tuned.std);
  }
  return s;
}

std::string metrics_markdown(const std::vector<RunResult>& runs) {
  std::string s =
      "| Model | Context | Precision | Recall | Macro-F1 | Macro-F1 (val. threshold) |\n"
      "|---|---|---|---|---|---|\n";
  auto pm = [](const Aggregate& a) { return fmt::format("{:.1f} ± {:.1f}", a.mean, a.std); };
  for (const auto& r : runs) {
    s += fmt::format("| {} | {} | {} | {} | {} | {} |\n", r.variant.name, r.variant.context.label(), pm(r.precision),
                     pm(r.recall), pm(r.macro_f1), pm(r.macro_f1_tuned));
  }
  return s;
}

std::string history_csv(const std::vector<RunResult>& runs) {
  std::string s = "model,context,fold,epoch,train_loss,val_loss,val_macro_f1,lr\n";
  for (const auto& r : runs) {
    for (std::size_t f = 0; f < r.histories.size(); ++f) {
      for (const auto& e : r.histories[f]) {
        s += fmt::format("{},{},{},{},{:.6f},{:.6f},{:.4f},{:.8f}\n", r.variant.name, r.variant.context.label(), f + 1,
                         e.epoch, e.train_loss, e.val_loss, e.val_macro_f1, e.lr);
      }
    }
  }
  return s;
}

// ---- error analysis --------------------------------------------------------------------

ErrorReport error_report(const corpus::Dataset& ds, const std::vector<ReportItem>& items, double thr,
                         std::size_t n_salient) {
  ErrorReport r;
  r.threshold = thr;
  for (const auto& it : items) {
    const auto& seg = ds.segments().at(it.index);
    if (seg.label() != 1) continue;
    const std::string type = seg.oir_type ? std::string(corpus::oir_type_name(*seg.oir_type)) : "unknown";
    ++r.positives;
    ++r.positives_by_type[type];
    if (it.probability >= thr) continue;
    ++r.false_negatives;
    ++r.fn_by_type[type];
    ErrorInstance e;
    e.segment_id = seg.segment_id;
    e.transcript = seg.transcript;
    e.probability = it.probability;
    e.oir_type = seg.oir_type;
    std::vector<std::size_t> order;
    for (std::size_t k = 0; k < it.names.size(); ++k) {
      const auto& n = it.names[k];
      if (n.size() > 8 && n.compare(n.size() - 8, 8, "_present") == 0) continue;
      order.push_back(k);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(it.values[a]) > std::abs(it.values[b]); });
    for (std::size_t k = 0; k < std::min(n_salient, order.size()); ++k) {
      e.salient.emplace_back(it.names[order[k]], it.values[order[k]]);
    }
    r.instances.push_back(std::move(e));
  }
  std::sort(r.instances.begin(), r.instances.end(),
            [](const ErrorInstance& a, const ErrorInstance& b) { return a.segment_id < b.segment_id; });
  r.fn_rate = r.positives ? 100.0 * static_cast<double>(r.false_negatives) / static_cast<double>(r.positives) : 0.0;
  return r;
}

std::string error_report_markdown(const ErrorReport& r) {
  std::string s = "# False negatives\n\n";
  s += fmt::format("- gold RIs: {}\n- missed: {}\n- FN rate: {:.2f} %\n- threshold: {:.4f}\n\n", r.positives,
                   r.false_negatives, r.fn_rate, r.threshold);
  s += "| OIR type | RIs | missed |\n|---|---|---|\n";
  for (const auto& [type, n] : r.positives_by_type) {
    const auto it = r.fn_by_type.find(type);
    s += fmt::format("| {} | {} | {} |\n", type, n, it == r.fn_by_type.end() ? 0 : it->second);
  }
  for (const auto& e : r.instances) {
    s += fmt::format("\n## {}\n\n> {}\n\n- probability: {:.4f}\n- type: {}\n", e.segment_id, e.transcript,
                     e.probability, e.oir_type ? std::string(corpus::oir_type_name(*e.oir_type)) : "unknown");
    for (const auto& [name, z] : e.salient) s += fmt::format("- {} = {:+.3f}\n", name, z);
  }
  return s;
}

std::string error_report_json(const ErrorReport& r) {
  json j;
  j["positives"] = r.positives;
  j["false_negatives"] = r.false_negatives;
  j["fn_rate"] = r.fn_rate;
  j["threshold"] = r.threshold;
  j["positives_by_type"] = r.positives_by_type;
  j["fn_by_type"] = r.fn_by_type;
  json inst = json::array();
  for (const auto& e : r.instances) {
    json x;
    x["segment_id"] = e.segment_id;
    x["transcript"] = e.transcript;
    x["probability"] = e.probability;
    if (e.oir_type) x["oir_type"] = std::string(corpus::oir_type_name(*e.oir_type)); else x["oir_type"] = nullptr;
    json sal = json::array();
    for (const auto& [name, z] : e.salient) sal.push_back({{"feature", name}, {"z", z}});
    x["salient"] = sal;
    inst.push_back(std::move(x));
  }
  j["instances"] = inst;
  return j.dump(2) + "\n";
}

// ---- attribution ------------------------------------------------------------------------

std::vector<double> ModelExplainer::flatten(const model::Sample<float>& s) const {
  std::vector<double> x;
  x.reserve(width);
  for (const auto& in : s.inputs) x.insert(x.end(), in.begin(), in.end());
  return x;
}

ModelExplainer make_explainer(const TrainedModel& m, const SampleSet& pool, std::size_t n_background,
                              std::uint64_t seed) {
  ModelExplainer ex;
  const auto dims = m.plan.dims();
  std::array<std::size_t, 4> offset{};
  for (std::size_t k = 0; k < 4; ++k) {
    offset[k] = ex.width;
    ex.width += dims[k];
  }
  if (dims[0]) {
    std::vector<std::size_t> cols(dims[0]);
    std::iota(cols.begin(), cols.end(), offset[0]);
    ex.players.push_back({"text_emb", cols});
    ex.groups.push_back(explain::Group::Other);
  }
  if (dims[1]) {
    std::vector<std::size_t> cols(dims[1]);
    std::iota(cols.begin(), cols.end(), offset[1]);
    ex.players.push_back({"audio_emb", cols});
    ex.groups.push_back(explain::Group::Other);
  }
  auto add_features = [&](const model::Standardizer& st, std::size_t base, explain::Group g) {
    std::map<std::size_t, std::size_t> player_of_source;
    for (std::size_t c = 0; c < st.output_names.size(); ++c) {
      const std::size_t src = st.source[c];
      auto it = player_of_source.find(src);
      if (it == player_of_source.end()) {
        it = player_of_source.emplace(src, ex.players.size()).first;
        ex.players.push_back({st.input_names[src], {}});
        ex.groups.push_back(g);
      }
      ex.players[it->second].columns.push_back(base + c);
    }
  };
  if (dims[2]) add_features(m.plan.ling, offset[2], explain::Group::Linguistic);
  if (dims[3]) add_features(m.plan.pros, offset[3], explain::Group::Prosodic);

  std::vector<std::size_t> order(pool.samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span(order));
  order.resize(std::min(order.size(), n_background));
  std::sort(order.begin(), order.end());
  for (std::size_t k : order) ex.background.push_back(ex.flatten(pool.samples[k]));
  if (ex.background.empty()) throw Error(Errc::EmptyBackground, "no samples for the attribution background");

  const model::FusionNet<float>* net = &m.net;
  ex.fn = [net, dims, offset](std::span<const double> x) {
    model::Sample<float> s;
    for (std::size_t k = 0; k < 4; ++k) {
      s.inputs[k].assign(x.begin() + static_cast<std::ptrdiff_t>(offset[k]),
                         x.begin() + static_cast<std::ptrdiff_t>(offset[k] + dims[k]));
    }
    return static_cast<double>(net->probability(s));
  };
  return ex;
}

}  // namespace oir::eval
