#pragma once

// Shapley attributions and pairwise interaction ("synergy") scores for any
// scalar model over a real vector. A feature that is absent takes the value
// of a background sample.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace oir::explain {

using ModelFn = std::function<double(std::span<const double>)>;

// One attribution target: a single input column or a block of columns
// (e.g. a whole embedding) that enters and leaves the coalition together.
struct Player {
  std::string name;
  std::vector<std::size_t> columns;
};

std::vector<Player> column_players(const std::vector<std::string>& names);

struct ShapOptions {
  std::size_t exact_max = 12;  // exact enumeration up to this many players
  std::size_t n_samples = 2000;
  std::uint64_t seed = 0;
};

struct Attribution {
  std::string instance_id;
  double base_value = 0.0;  // mean model output over the background
  double fx = 0.0;          // model output for the instance
  bool exact = false;
  std::vector<std::string> names;
  std::vector<double> phi;
  std::vector<double> ci95;  // half-width per feature; zero in exact mode
};

// Throws EmptyBackground.
Attribution shap_values(const ModelFn& f, const std::vector<std::vector<double>>& background,
                        std::span<const double> x, const std::vector<Player>& players, const ShapOptions& opt = {});

// Mean absolute Shapley interaction of players i and j over the evaluation
// instances, estimated by mixed second differences on sampled coalitions.
// Symmetric in (i, j) for a fixed seed.
double synergy(const ModelFn& f, const std::vector<std::vector<double>>& background,
               const std::vector<std::vector<double>>& instances, const std::vector<Player>& players, std::size_t i,
               std::size_t j, std::size_t draws_per_instance, std::uint64_t seed);

enum class Group { Linguistic, Prosodic, Other };

struct SynergyMatrix {
  std::vector<std::string> rows;  // linguistic
  std::vector<std::string> cols;  // prosodic
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<double>> scaled;  // min-max over all cells
};

// Throws SameModality when a requested pair lies within one group.
SynergyMatrix synergy_matrix(const ModelFn& f, const std::vector<std::vector<double>>& background,
                             const std::vector<std::vector<double>>& instances, const std::vector<Player>& players,
                             const std::vector<Group>& groups, const std::vector<std::size_t>& row_players,
                             const std::vector<std::size_t>& col_players, std::size_t draws_per_instance,
                             std::uint64_t seed);

struct RankedFeature {
  std::string name;
  double mean_abs_phi = 0.0;
  double mean_phi = 0.0;
};

// Ranked by mean |phi| (ties by name), truncated to k.
std::vector<RankedFeature> top_k(std::span<const Attribution> attributions, std::size_t k);

std::string attribution_jsonl_line(const Attribution& a);
void write_attributions(std::span<const Attribution> attributions, const std::filesystem::path& path);
std::string ranking_csv(std::span<const RankedFeature> ranking);
std::string synergy_csv(const SynergyMatrix& m, bool scaled);

}  // namespace oir::explain
