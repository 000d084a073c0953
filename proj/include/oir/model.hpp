#pragma once

// Fusion classifier: per-modality projections to a shared width, multihead
// attention over the modality tokens, and a two-layer head on the
// concatenation of the text embedding and the pooled fused vector.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oir/metrics.hpp"
#include "oir/rng.hpp"

namespace oir::model {

enum class Modality { TextEmb = 0, AudioEmb = 1, Ling = 2, Pros = 3 };
inline constexpr std::array<Modality, 4> kAllModalities = {Modality::TextEmb, Modality::AudioEmb, Modality::Ling,
                                                           Modality::Pros};

std::string_view modality_name(Modality m);
std::optional<Modality> parse_modality(std::string_view s);

struct ModelConfig {
  int d_shared = 256;
  int n_heads = 4;
  double dropout = 0.1;
  std::optional<double> lr;  // unset: 2e-5 with embeddings, 1e-3 handcrafted-only
  double weight_decay = 0.01;
  double warmup_fraction = 0.1;
  int max_epochs = 20;
  int patience = 3;
  int batch_size = 16;
  std::uint64_t seed = 0;
  std::vector<Modality> modalities{kAllModalities.begin(), kAllModalities.end()};
  bool cross_attention = false;       // text token as the only query
  bool project_text_in_head = false;  // concatenate the projected text token instead of the raw vector

  bool enabled(Modality m) const;
  double effective_lr() const;
  // Throws BadConfig on inconsistent settings.
  void check() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

using InputDims = std::array<std::size_t, 4>;

template <typename T>
struct Sample {
  std::array<std::vector<T>, 4> inputs;  // indexed by Modality; empty when disabled
  int label = 0;
};

struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool decay = false;

  std::size_t size() const { return rows * cols; }
};

template <typename T>
class FusionNet {
 public:
  FusionNet(const ModelConfig& cfg, const InputDims& dims);

  const ModelConfig& config() const { return cfg_; }
  const InputDims& input_dims() const { return dims_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const ParamGroup& group(std::string_view name) const;
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  std::size_t head_input_dim() const { return head_in_; }
  std::size_t n_tokens() const { return mods_.size(); }

  struct Cache;

  struct Pass {
    Cache* cache = nullptr;
    Rng* dropout = nullptr;                           // null: inference
    const std::vector<std::size_t>* order = nullptr;  // permutation of the modality tokens
  };

  T logit(const Sample<T>& s, const Pass& pass) const;
  T logit(const Sample<T>& s) const { return logit(s, Pass{}); }
  T probability(const Sample<T>& s) const;
  void backward(const Cache& cache, T dlogit, std::vector<T>& grad) const;

  // Mean binary cross-entropy; when grad is given it is overwritten with the
  // mean gradient.
  T loss(std::span<const Sample<T>* const> batch, std::vector<T>* grad, Rng* dropout = nullptr) const;

  std::vector<T> project(const std::vector<T>& x, Modality m) const;
  // Attention block plus mean pooling over the given tokens (inference mode).
  std::vector<T> fuse(const std::vector<std::vector<T>>& tokens) const;

 private:
  std::size_t add_group(std::string name, std::size_t rows, std::size_t cols, bool decay);

  ModelConfig cfg_;
  InputDims dims_;
  std::vector<Modality> mods_;  // enabled, in enum order
  std::vector<ParamGroup> groups_;
  std::vector<T> params_;
  std::size_t head_in_ = 0;
  std::size_t text_dim_in_head_ = 0;
  // group indices
  std::array<std::size_t, 4> proj_w_{}, proj_b_{};
  std::size_t wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_, ln1_g_, ln1_b_, w1_, b1_, w2_, b2_, ln2_g_, ln2_b_, h1_w_,
      h1_b_, h2_w_, h2_b_;
};

class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  // Records one epoch's score; returns true on strict improvement.
  bool update(double score);
  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_score() const { return best_; }
  int epochs() const { return epochs_; }

 private:
  int patience_;
  int epochs_ = 0;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_ = 0.0;
};

// Per-column z-scoring fitted on training rows. Missing cells take the
// column's stored value when finite (an upstream imputation) and the train
// mean otherwise. Presence bits become extra columns. Columns that are
// constant on the training rows are dropped.
struct Standardizer {
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;
  std::vector<std::size_t> source;  // input column of each output
  std::vector<std::uint8_t> is_mask;
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<double> impute;  // present-value mean of the source column
  std::vector<std::string> dropped;

  void fit(const std::vector<std::string>& names, const std::vector<std::vector<double>>& values,
           const std::vector<std::vector<std::uint8_t>>& present);
  std::vector<double> transform(std::span<const double> values, std::span<const std::uint8_t> present) const;
  std::size_t dim() const { return output_names.size(); }

  std::string to_json() const;
  static Standardizer from_json(const std::string& text);
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_macro_f1 = 0.0;
  double lr = 0.0;
};

template <typename T>
struct TrainResult {
  FusionNet<T> net;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

// AdamW with linear warmup/decay, early stopping on validation macro-F1.
// With an empty validation set, the training set is scored instead.
template <typename T>
TrainResult<T> train(const ModelConfig& cfg, const InputDims& dims, const std::vector<Sample<T>>& train_set,
                     const std::vector<Sample<T>>& val_set);

template <typename T>
std::vector<double> predict(const FusionNet<T>& net, const std::vector<Sample<T>>& samples);

// Stratified folds that keep each group whole. Returns the fold index of
// every item. Throws TooFewSamples when a class has fewer than k items.
std::vector<int> stratified_group_folds(const std::vector<int>& labels, const std::vector<std::string>& groups,
                                        int k, std::uint64_t seed);

// Checkpoint: "OIRM", u16 version, u32-prefixed config JSON, u32-prefixed
// manifest JSON, u32 input dims x4, u64 parameter count, float32 parameters.
struct Checkpoint {
  ModelConfig config;
  InputDims dims{};
  std::string manifest_json;
  std::vector<float> params;
};

template <typename T>
Checkpoint make_checkpoint(const FusionNet<T>& net, std::string manifest_json);
template <typename T>
FusionNet<T> restore(const Checkpoint& ck);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace oir::model

namespace oir::model {

// Activations kept from a forward pass for backpropagation.
template <typename T>
struct FusionNet<T>::Cache {
  const Sample<T>* sample = nullptr;
  std::vector<std::size_t> order;   // token row -> index into the enabled modalities
  std::vector<std::size_t> qrows;   // token rows used as queries
  std::size_t text_row = 0;
  bool has_text = false;
  std::vector<T> X, Q, K, V, A, O, Z, mask1, xhat1, inv1, H1, U, F, mask2, xhat2, inv2, H2;
  std::vector<T> pooled, head_in, hid_pre, hid, mask3;
};

}  // namespace oir::model
