#include "oir/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"
#include "oir/error.hpp"
#include "oir/features.hpp"
#include "oir/rng.hpp"

namespace oir::explain {

std::vector<Player> column_players(const std::vector<std::string>& names) {
  std::vector<Player> out;
  for (std::size_t i = 0; i < names.size(); ++i) out.push_back({names[i], {i}});
  return out;
}

namespace {

void check_inputs(const std::vector<std::vector<double>>& background, std::size_t width,
                  const std::vector<Player>& players) {
  if (background.empty()) throw Error(Errc::EmptyBackground, "background set is empty");
  for (const auto& b : background) {
    if (b.size() != width) throw Error(Errc::DimMismatch, "background row width differs from the instance");
  }
  for (const auto& p : players) {
    for (std::size_t c : p.columns) {
      if (c >= width) throw Error(Errc::DimMismatch, "player " + p.name + " refers past the input width");
    }
  }
}

void put_player(std::vector<double>& z, std::span<const double> src, const Player& p) {
  for (std::size_t c : p.columns) z[c] = src[c];
}

double binom_weight(std::size_t s, std::size_t n) {
  // s! (n - s - 1)! / n!
  return std::exp(std::lgamma(static_cast<double>(s) + 1) + std::lgamma(static_cast<double>(n - s)) -
                  std::lgamma(static_cast<double>(n) + 1));
}

}  // namespace

Attribution shap_values(const ModelFn& f, const std::vector<std::vector<double>>& background,
                        std::span<const double> x, const std::vector<Player>& players, const ShapOptions& opt) {
  check_inputs(background, x.size(), players);
  const std::size_t n = players.size();
  Attribution a;
  a.fx = f(x);
  for (const auto& b : background) a.base_value += f(b);
  a.base_value /= static_cast<double>(background.size());
  for (const auto& p : players) a.names.push_back(p.name);
  a.phi.assign(n, 0.0);
  a.ci95.assign(n, 0.0);
  if (n == 0) return a;

  std::vector<double> z(x.size());
  if (n <= opt.exact_max) {
    a.exact = true;
    const std::size_t subsets = std::size_t{1} << n;
    std::vector<double> v(subsets, 0.0);
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      if (mask == 0) {
        v[mask] = a.base_value;
        continue;
      }
      if (mask == subsets - 1) {
        v[mask] = a.fx;
        continue;
      }
      double acc = 0;
      for (const auto& b : background) {
        z = b;
        for (std::size_t p = 0; p < n; ++p) {
          if (mask >> p & 1) put_player(z, x, players[p]);
        }
        acc += f(z);
      }
      v[mask] = acc / static_cast<double>(background.size());
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t bit = std::size_t{1} << i;
      double phi = 0;
      for (std::size_t mask = 0; mask < subsets; ++mask) {
        if (mask & bit) continue;
        phi += binom_weight(static_cast<std::size_t>(std::popcount(mask)), n) * (v[mask | bit] - v[mask]);
      }
      a.phi[i] = phi;
    }
    return a;
  }

  // Permutation sampling with antithetic (reversed) orderings.
  Rng rng(opt.seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> sum(n, 0.0), sq(n, 0.0), contrib(n);
  const std::size_t pairs = std::max<std::size_t>(1, opt.n_samples / 2);
  for (std::size_t s = 0; s < pairs; ++s) {
    rng.shuffle(std::span(perm));
    const auto& b = background[rng.below(background.size())];
    std::fill(contrib.begin(), contrib.end(), 0.0);
    for (int dir = 0; dir < 2; ++dir) {
      z = b;
      double prev = f(z);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t p = dir == 0 ? perm[k] : perm[n - 1 - k];
        put_player(z, x, players[p]);
        const double cur = f(z);
        contrib[p] += 0.5 * (cur - prev);
        prev = cur;
      }
    }
    for (std::size_t p = 0; p < n; ++p) {
      sum[p] += contrib[p];
      sq[p] += contrib[p] * contrib[p];
    }
  }
  const auto m = static_cast<double>(pairs);
  for (std::size_t p = 0; p < n; ++p) {
    a.phi[p] = sum[p] / m;
    const double var = std::max(0.0, sq[p] / m - a.phi[p] * a.phi[p]);
    a.ci95[p] = 1.96 * std::sqrt(var / m);
  }
  return a;
}

double synergy(const ModelFn& f, const std::vector<std::vector<double>>& background,
               const std::vector<std::vector<double>>& instances, const std::vector<Player>& players, std::size_t i,
               std::size_t j, std::size_t draws_per_instance, std::uint64_t seed) {
  if (instances.empty()) throw Error(Errc::EmptyInput, "no instances for synergy");
  if (i == j || i >= players.size() || j >= players.size()) {
    throw Error(Errc::IndexOutOfRange, "synergy needs two distinct valid players");
  }
  check_inputs(background, instances.front().size(), players);
  if (i > j) std::swap(i, j);
  std::vector<std::size_t> others;
  for (std::size_t p = 0; p < players.size(); ++p) {
    if (p != i && p != j) others.push_back(p);
  }
  double total = 0;
  std::vector<double> z, zi, zj, zij;
  for (std::size_t inst = 0; inst < instances.size(); ++inst) {
    const auto& x = instances[inst];
    Rng rng(seed + inst);
    std::vector<std::size_t> order = others;
    const std::size_t draws = std::max<std::size_t>(1, draws_per_instance);
    double acc = 0;
    for (std::size_t d = 0; d < draws; ++d) {
      // The merged pair sits at a uniform position among the other players;
      // the players ahead of it form the coalition.
      rng.shuffle(std::span(order));
      const auto cut = static_cast<std::size_t>(rng.below(order.size() + 1));
      z = background[rng.below(background.size())];
      for (std::size_t k = 0; k < cut; ++k) put_player(z, x, players[order[k]]);
      zi = z;
      put_player(zi, x, players[i]);
      zj = z;
      put_player(zj, x, players[j]);
      zij = zi;
      put_player(zij, x, players[j]);
      acc += f(zij) - f(zi) - f(zj) + f(z);
    }
    total += std::abs(acc / static_cast<double>(draws));
  }
  return total / static_cast<double>(instances.size());
}

SynergyMatrix synergy_matrix(const ModelFn& f, const std::vector<std::vector<double>>& background,
                             const std::vector<std::vector<double>>& instances, const std::vector<Player>& players,
                             const std::vector<Group>& groups, const std::vector<std::size_t>& row_players,
                             const std::vector<std::size_t>& col_players, std::size_t draws_per_instance,
                             std::uint64_t seed) {
  if (groups.size() != players.size()) throw Error(Errc::LengthMismatch, "one group per player required");
  SynergyMatrix m;
  for (std::size_t r : row_players) m.rows.push_back(players.at(r).name);
  for (std::size_t c : col_players) m.cols.push_back(players.at(c).name);
  double lo = 0, hi = 0;
  bool first = true;
  for (std::size_t r : row_players) {
    std::vector<double> row;
    for (std::size_t c : col_players) {
      if (groups[r] == groups[c]) {
        throw Error(Errc::SameModality, players[r].name + " and " + players[c].name + " share a modality");
      }
      const double v = synergy(f, background, instances, players, r, c, draws_per_instance, seed);
      row.push_back(v);
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
    m.raw.push_back(std::move(row));
  }
  for (const auto& row : m.raw) {
    std::vector<double> sc;
    for (double v : row) sc.push_back(hi > lo ? (v - lo) / (hi - lo) : 0.0);
    m.scaled.push_back(std::move(sc));
  }
  return m;
}

std::vector<RankedFeature> top_k(std::span<const Attribution> attributions, std::size_t k) {
  std::map<std::string, std::pair<double, double>> acc;
  std::map<std::string, std::size_t> count;
  for (const auto& a : attributions) {
    for (std::size_t i = 0; i < a.names.size(); ++i) {
      auto& [abs_sum, sum] = acc[a.names[i]];
      abs_sum += std::abs(a.phi[i]);
      sum += a.phi[i];
      ++count[a.names[i]];
    }
  }
  std::vector<RankedFeature> out;
  for (const auto& [name, sums] : acc) {
    const auto n = static_cast<double>(count[name]);
    out.push_back({name, sums.first / n, sums.second / n});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedFeature& a, const RankedFeature& b) { return a.mean_abs_phi > b.mean_abs_phi; });
  if (out.size() > k) out.resize(k);
  return out;
}

std::string attribution_jsonl_line(const Attribution& a) {
  nlohmann::ordered_json j;
  j["instance_id"] = a.instance_id;
  j["base_value"] = a.base_value;
  j["fx"] = a.fx;
  j["exact"] = a.exact;
  auto phi = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < a.names.size(); ++i) phi[a.names[i]] = a.phi[i];
  j["phi"] = phi;
  if (!a.exact) j["ci95"] = a.ci95;
  return j.dump();
}

void write_attributions(std::span<const Attribution> attributions, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  for (const auto& a : attributions) out << attribution_jsonl_line(a) << '\n';
}

std::string ranking_csv(std::span<const RankedFeature> ranking) {
  std::string s = "rank,feature,mean_abs_phi,mean_phi\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    s += std::to_string(i + 1) + "," + ranking[i].name + "," + format_double(ranking[i].mean_abs_phi) + "," +
         format_double(ranking[i].mean_phi) + "\n";
  }
  return s;
}

std::string synergy_csv(const SynergyMatrix& m, bool scaled) {
  const auto& vals = scaled ? m.scaled : m.raw;
  std::string s = "linguistic";
  for (const auto& c : m.cols) s += "," + c;
  s += "\n";
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    s += m.rows[r];
    for (double v : vals[r]) s += "," + format_double(v);
    s += "\n";
  }
  return s;
}

}  // namespace oir::explain
