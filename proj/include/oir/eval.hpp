#pragma once

// Experiment runner: model variants, sample assembly from feature tables and
// embeddings, cross-validation, scenario suites and false-negative reports.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "oir/context.hpp"
#include "oir/corpus.hpp"
#include "oir/embeddings.hpp"
#include "oir/explain.hpp"
#include "oir/features.hpp"
#include "oir/metrics.hpp"
#include "oir/model.hpp"

namespace oir::eval {

struct Variant {
  std::string name;
  std::vector<model::Modality> modalities;
  context::ContextConfig context;

  bool uses(model::Modality m) const;
};

// "Full(2)" -> "full_2", "Past(max)" -> "past_max", "Current" -> "current".
std::string context_tag(const context::ContextConfig& cfg);
// Accepts labels ("Full(2)") and tags ("full_2"). Throws BadConfig.
context::ContextConfig parse_context(const std::string& s);

// Text_Emb, Audio_Emb, Multi_Emb, Text_Ling, Audio_Pros, Multi_LingPros,
// Multi_Ours, all under Full(2).
std::vector<Variant> modality_variants();
// Multi_Ours under Past(2), Past(max), Current, Future(max), Full(2), Full(max).
std::vector<Variant> context_variants();
// Name lookup over the modality variants; `context` overrides Full(2).
Variant find_variant(const std::string& name, const std::optional<context::ContextConfig>& context = std::nullopt);

struct EmbeddingOptions {
  // Directory holding text_<context label>.emb1 and audio.emb1. Empty: build
  // fixtures (hashed bag of words over the context text; projected prosodic
  // summaries for audio).
  std::filesystem::path dir;
  bool strict = true;  // a missing vector is MissingSegment; lenient runs drop the segment
  std::uint32_t text_dim = 64;
  std::uint32_t audio_dim = 32;
  std::uint64_t seed = 0;
};

// Everything a run draws on. Feature tables are keyed by segment id.
class ExperimentData {
 public:
  ExperimentData(const corpus::Dataset& ds, FeatureTable prosodic, FeatureTable linguistic,
                 EmbeddingOptions emb = {});

  const corpus::Dataset& dataset() const { return *ds_; }
  const FeatureTable& prosodic() const { return pros_; }
  const FeatureTable& linguistic() const { return ling_; }
  const EmbeddingOptions& embedding_options() const { return emb_; }

  // Row of a segment in the given table; throws DataError when absent.
  std::size_t prosodic_row(const std::string& id) const;
  std::size_t linguistic_row(const std::string& id) const;

  // Cached and safe to call from several threads.
  const embeddings::EmbeddingStore& text(const context::ContextConfig& cfg) const;
  const embeddings::EmbeddingStore& audio() const;

 private:
  const corpus::Dataset* ds_;
  FeatureTable pros_, ling_;
  std::map<std::string, std::size_t> pros_rows_, ling_rows_;
  EmbeddingOptions emb_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::unique_ptr<embeddings::EmbeddingStore>> text_;
  mutable std::unique_ptr<embeddings::EmbeddingStore> audio_;
};

// Handcrafted columns a variant may see and their standardizers, fitted on
// training rows only.
struct FeaturePlan {
  Variant variant;
  std::vector<std::string> ling_columns, pros_columns;
  model::Standardizer ling, pros;
  std::uint32_t text_dim = 0, audio_dim = 0;

  model::InputDims dims() const;
  std::string to_json() const;
  static FeaturePlan from_json(const std::string& text);
};

FeaturePlan fit_plan(const ExperimentData& data, const Variant& v, const std::vector<std::size_t>& train);

struct SampleSet {
  std::vector<model::Sample<float>> samples;
  std::vector<std::size_t> indices;  // dataset index of each sample
  std::vector<std::string> excluded;  // lenient mode: segments without an embedding
};

SampleSet build_samples(const ExperimentData& data, const FeaturePlan& plan, const std::vector<std::size_t>& indices);

// Standardized handcrafted inputs (ling then pros) of one sample, with names.
std::vector<std::string> handcrafted_names(const FeaturePlan& plan);
std::vector<double> handcrafted_values(const model::Sample<float>& s);

struct TrainedModel {
  FeaturePlan plan;
  model::FusionNet<float> net;
  std::vector<model::EpochRecord> history;
  double threshold = 0.5;  // validation-optimal
};

// Trains on `train` with `val` as the early-stopping monitor.
TrainedModel train_model(const ExperimentData& data, const Variant& v, const model::ModelConfig& cfg,
                         const std::vector<std::size_t>& train, const std::vector<std::size_t>& val);

model::Checkpoint to_checkpoint(const TrainedModel& m);
TrainedModel from_checkpoint(const model::Checkpoint& ck);

std::vector<double> predict(const TrainedModel& m, const SampleSet& set);

struct RunResult {
  Variant variant;
  std::vector<Metrics> folds;        // decision threshold 0.5
  std::vector<Metrics> folds_tuned;  // validation-optimal threshold
  std::vector<double> thresholds;
  std::vector<std::vector<model::EpochRecord>> histories;
  Aggregate precision, recall, macro_f1, macro_f1_tuned;
};

// Stratified k folds over the classifiable training split, sequences kept
// whole. Each fold trains from scratch with the validation split as the
// early-stopping monitor and is scored on its held-out part.
RunResult cross_validate(const ExperimentData& data, const Variant& v, const model::ModelConfig& cfg, int k,
                         std::uint64_t seed);

// Runs the variants concurrently (at most `threads` at a time); results
// keep the input order and do not depend on `threads`.
std::vector<RunResult> run_scenarios(const ExperimentData& data, const std::vector<Variant>& variants,
                                     const model::ModelConfig& cfg, int k, std::uint64_t seed, int threads = 1);

std::string metrics_csv(const std::vector<RunResult>& runs);
std::string metrics_markdown(const std::vector<RunResult>& runs);
std::string history_csv(const std::vector<RunResult>& runs);

// ---- false negatives ---------------------------------------------------------------

struct ErrorInstance {
  std::string segment_id;
  std::string transcript;
  double probability = 0.0;
  std::optional<corpus::OirType> oir_type;
  std::vector<std::pair<std::string, double>> salient;  // most deviant standardized features
};

struct ErrorReport {
  std::size_t positives = 0;
  std::size_t false_negatives = 0;
  double fn_rate = 0.0;  // % of gold RIs missed
  double threshold = 0.5;
  std::vector<ErrorInstance> instances;
  std::map<std::string, std::size_t> fn_by_type;
  std::map<std::string, std::size_t> positives_by_type;
};

struct ReportItem {
  std::size_t index = 0;  // into the dataset
  double probability = 0.0;
  std::vector<std::string> names;  // standardized feature names
  std::vector<double> values;
};

ErrorReport error_report(const corpus::Dataset& ds, const std::vector<ReportItem>& items, double threshold = 0.5,
                         std::size_t n_salient = 5);
std::string error_report_markdown(const ErrorReport& r);
std::string error_report_json(const ErrorReport& r);

// ---- attribution over a trained model ----------------------------------------------

// Handcrafted features (value and presence column together) as players, plus
// one block player per enabled embedding.
struct ModelExplainer {
  explain::ModelFn fn;
  std::vector<explain::Player> players;
  std::vector<explain::Group> groups;
  std::vector<std::vector<double>> background;
  std::size_t width = 0;

  std::vector<double> flatten(const model::Sample<float>& s) const;
};

ModelExplainer make_explainer(const TrainedModel& m, const SampleSet& background_pool, std::size_t n_background,
                              std::uint64_t seed);

}  // namespace oir::eval
