#include "oir/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "json.hpp"
#include "oir/error.hpp"
#include "oir/kernels.hpp"

namespace oir::model {

using json = nlohmann::ordered_json;

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::TextEmb: return "text_emb";
    case Modality::AudioEmb: return "audio_emb";
    case Modality::Ling: return "ling";
    case Modality::Pros: return "pros";
  }
  return "?";
}

std::optional<Modality> parse_modality(std::string_view s) {
  for (Modality m : kAllModalities) {
    if (modality_name(m) == s) return m;
  }
  return std::nullopt;
}

// ---- config ----------------------------------------------------------------------

bool ModelConfig::enabled(Modality m) const {
  return std::find(modalities.begin(), modalities.end(), m) != modalities.end();
}

double ModelConfig::effective_lr() const {
  if (lr) return *lr;
  return enabled(Modality::TextEmb) || enabled(Modality::AudioEmb) ? 2e-5 : 1e-3;
}

void ModelConfig::check() const {
  if (d_shared <= 0 || n_heads <= 0 || d_shared % n_heads != 0) {
    throw Error(Errc::BadConfig, "d_shared must be a positive multiple of n_heads");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw Error(Errc::BadConfig, "dropout must be in [0, 1)");
  if (patience >= max_epochs) throw Error(Errc::BadConfig, "patience must be below max_epochs");
  if (batch_size <= 0 || max_epochs <= 0 || patience <= 0) throw Error(Errc::BadConfig, "non-positive training sizes");
  if (modalities.empty()) throw Error(Errc::BadConfig, "at least one modality must be enabled");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) throw Error(Errc::BadConfig, "warmup_fraction must be in [0, 1)");
  if (cross_attention && !enabled(Modality::TextEmb)) {
    throw Error(Errc::BadConfig, "cross attention needs the text embedding as query");
  }
}

std::string ModelConfig::to_json() const {
  json j;
  j["d_shared"] = d_shared;
  j["n_heads"] = n_heads;
  j["dropout"] = dropout;
  j["lr"] = effective_lr();
  j["weight_decay"] = weight_decay;
  j["warmup_fraction"] = warmup_fraction;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  auto mods = json::array();
  for (Modality m : modalities) mods.push_back(modality_name(m));
  j["modalities"] = mods;
  j["cross_attention"] = cross_attention;
  j["project_text_in_head"] = project_text_in_head;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = json::parse(text);
    c.d_shared = j.at("d_shared").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.warmup_fraction = j.at("warmup_fraction").get<double>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.patience = j.at("patience").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.modalities.clear();
    for (const auto& m : j.at("modalities")) {
      auto mod = parse_modality(m.get<std::string>());
      if (!mod) throw Error(Errc::BadConfig, "unknown modality " + m.get<std::string>());
      c.modalities.push_back(*mod);
    }
    c.cross_attention = j.at("cross_attention").get<bool>();
    c.project_text_in_head = j.at("project_text_in_head").get<bool>();
  } catch (const json::exception& e) {
    throw Error(Errc::BadConfig, std::string("bad model config: ") + e.what());
  }
  return c;
}

// ---- dense helpers ---------------------------------------------------------------

namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  return simd::dot(std::span<const T>(a, n), std::span<const T>(b, n));
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  simd::axpy(alpha, std::span<const T>(x, n), std::span<T>(y, n));
}

// y[r] = b[r] + W[r,:] . x
template <typename T>
void linear(const T* W, const T* b, std::size_t rows, std::size_t cols, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = b[r] + dot(W + r * cols, x, cols);
}

// dW += dy x^T, db += dy, dx += W^T dy (dx may be null)
template <typename T>
void linear_back(const T* W, std::size_t rows, std::size_t cols, const T* x, const T* dy, T* dW, T* db, T* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (dy[r] == T(0)) continue;
    axpy(dy[r], x, dW + r * cols, cols);
    db[r] += dy[r];
    if (dx) axpy(dy[r], W + r * cols, dx, cols);
  }
}

template <typename T>
void layer_norm(const T* x, const T* g, const T* b, std::size_t d, T* xhat, T& inv, T* y) {
  T mu = 0;
  for (std::size_t i = 0; i < d; ++i) mu += x[i];
  mu /= static_cast<T>(d);
  T var = 0;
  for (std::size_t i = 0; i < d; ++i) var += (x[i] - mu) * (x[i] - mu);
  var /= static_cast<T>(d);
  inv = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
  for (std::size_t i = 0; i < d; ++i) {
    xhat[i] = (x[i] - mu) * inv;
    y[i] = g[i] * xhat[i] + b[i];
  }
}

template <typename T>
void layer_norm_back(const T* xhat, T inv, const T* g, const T* dy, std::size_t d, T* dg, T* db, T* dx) {
  T m1 = 0, m2 = 0;
  std::vector<T> dxhat(d);
  for (std::size_t i = 0; i < d; ++i) {
    dxhat[i] = dy[i] * g[i];
    dg[i] += dy[i] * xhat[i];
    db[i] += dy[i];
    m1 += dxhat[i];
    m2 += dxhat[i] * xhat[i];
  }
  m1 /= static_cast<T>(d);
  m2 /= static_cast<T>(d);
  for (std::size_t i = 0; i < d; ++i) dx[i] += inv * (dxhat[i] - m1 - xhat[i] * m2);
}

template <typename T>
void dropout_mask(T* mask, std::size_t n, double p, Rng* rng) {
  if (!rng || p <= 0.0) {
    std::fill(mask, mask + n, T(1));
    return;
  }
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < n; ++i) mask[i] = rng->uniform() < p ? T(0) : keep;
}

template <typename T>
T bce_with_logits(T z, int y) {
  return std::max(z, T(0)) - (y ? z : T(0)) + std::log1p(std::exp(-std::abs(z)));
}

template <typename T>
T sigmoid(T z) {
  if (z >= 0) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

}  // namespace

// ---- network ---------------------------------------------------------------------

template <typename T>
std::size_t FusionNet<T>::add_group(std::string name, std::size_t rows, std::size_t cols, bool decay) {
  ParamGroup g{std::move(name), params_.size(), rows, cols, decay};
  params_.resize(params_.size() + g.size(), T(0));
  groups_.push_back(std::move(g));
  return groups_.size() - 1;
}

template <typename T>
const ParamGroup& FusionNet<T>::group(std::string_view name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return g;
  }
  throw Error(Errc::DataError, "no parameter group " + std::string(name));
}

template <typename T>
FusionNet<T>::FusionNet(const ModelConfig& cfg, const InputDims& dims) : cfg_(cfg), dims_(dims) {
  cfg_.check();
  const auto d = static_cast<std::size_t>(cfg_.d_shared);
  for (Modality m : kAllModalities) {
    if (!cfg_.enabled(m)) continue;
    const auto k = static_cast<std::size_t>(m);
    if (dims_[k] == 0) throw Error(Errc::DimMismatch, "enabled modality " + std::string(modality_name(m)) + " has width 0");
    mods_.push_back(m);
    proj_w_[k] = add_group("proj_" + std::string(modality_name(m)) + ".W", d, dims_[k], true);
    proj_b_[k] = add_group("proj_" + std::string(modality_name(m)) + ".b", d, 1, false);
  }
  wq_ = add_group("attn.Wq", d, d, true);
  bq_ = add_group("attn.bq", d, 1, false);
  wk_ = add_group("attn.Wk", d, d, true);
  bk_ = add_group("attn.bk", d, 1, false);
  wv_ = add_group("attn.Wv", d, d, true);
  bv_ = add_group("attn.bv", d, 1, false);
  wo_ = add_group("attn.Wo", d, d, true);
  bo_ = add_group("attn.bo", d, 1, false);
  ln1_g_ = add_group("ln1.gamma", d, 1, false);
  ln1_b_ = add_group("ln1.beta", d, 1, false);
  w1_ = add_group("ffn.W1", d, d, true);
  b1_ = add_group("ffn.b1", d, 1, false);
  w2_ = add_group("ffn.W2", d, d, true);
  b2_ = add_group("ffn.b2", d, 1, false);
  ln2_g_ = add_group("ln2.gamma", d, 1, false);
  ln2_b_ = add_group("ln2.beta", d, 1, false);
  if (cfg_.enabled(Modality::TextEmb)) {
    text_dim_in_head_ = cfg_.project_text_in_head ? d : dims_[static_cast<std::size_t>(Modality::TextEmb)];
  }
  head_in_ = text_dim_in_head_ + d;
  h1_w_ = add_group("head.W1", d, head_in_, true);
  h1_b_ = add_group("head.b1", d, 1, false);
  h2_w_ = add_group("head.W2", 1, d, true);
  h2_b_ = add_group("head.b2", 1, 1, false);

  Rng rng(cfg_.seed ^ 0x6f69726dULL);
  for (const auto& g : groups_) {
    T* p = params_.data() + g.offset;
    if (g.name.ends_with(".gamma")) {
      std::fill(p, p + g.size(), T(1));
    } else if (g.cols > 1 || g.name.ends_with("W2")) {
      const double limit = std::sqrt(6.0 / static_cast<double>(g.rows + g.cols));
      for (std::size_t i = 0; i < g.size(); ++i) p[i] = static_cast<T>(rng.uniform(-limit, limit));
    }
  }
}

template <typename T>
std::vector<T> FusionNet<T>::project(const std::vector<T>& x, Modality m) const {
  const auto k = static_cast<std::size_t>(m);
  if (!cfg_.enabled(m)) throw Error(Errc::MissingModality, std::string(modality_name(m)) + " is not enabled");
  if (x.size() != dims_[k]) throw Error(Errc::DimMismatch, std::string(modality_name(m)) + " input width mismatch");
  const auto& gw = groups_[proj_w_[k]];
  const auto& gb = groups_[proj_b_[k]];
  std::vector<T> y(gw.rows);
  linear(params_.data() + gw.offset, params_.data() + gb.offset, gw.rows, gw.cols, x.data(), y.data());
  for (T& v : y) v = std::tanh(v);
  return y;
}

template <typename T>
T FusionNet<T>::logit(const Sample<T>& s, const Pass& pass) const {
  const auto d = static_cast<std::size_t>(cfg_.d_shared);
  const auto H = static_cast<std::size_t>(cfg_.n_heads);
  const std::size_t dh = d / H;
  const std::size_t n = mods_.size();
  const T* P = params_.data();
  auto at = [&](std::size_t gi) { return P + groups_[gi].offset; };

  Cache local;
  Cache& c = pass.cache ? *pass.cache : local;
  c.sample = &s;
  if (pass.order) {
    if (pass.order->size() != n) throw Error(Errc::DimMismatch, "token order has the wrong length");
    c.order = *pass.order;
  } else {
    c.order.resize(n);
    std::iota(c.order.begin(), c.order.end(), 0);
  }

  c.X.assign(n * d, T(0));
  c.has_text = false;
  for (std::size_t r = 0; r < n; ++r) {
    const Modality m = mods_[c.order[r]];
    const auto& x = s.inputs[static_cast<std::size_t>(m)];
    if (x.empty()) throw Error(Errc::MissingModality, std::string(modality_name(m)) + " input missing");
    const auto t = project(x, m);
    std::copy(t.begin(), t.end(), c.X.begin() + static_cast<std::ptrdiff_t>(r * d));
    if (m == Modality::TextEmb) {
      c.has_text = true;
      c.text_row = r;
    }
  }
  c.qrows.clear();
  if (cfg_.cross_attention) {
    c.qrows.push_back(c.text_row);
  } else {
    for (std::size_t r = 0; r < n; ++r) c.qrows.push_back(r);
  }
  const std::size_t nq = c.qrows.size();

  c.Q.assign(nq * d, T(0));
  c.K.assign(n * d, T(0));
  c.V.assign(n * d, T(0));
  for (std::size_t q = 0; q < nq; ++q) linear(at(wq_), at(bq_), d, d, &c.X[c.qrows[q] * d], &c.Q[q * d]);
  for (std::size_t r = 0; r < n; ++r) {
    linear(at(wk_), at(bk_), d, d, &c.X[r * d], &c.K[r * d]);
    linear(at(wv_), at(bv_), d, d, &c.X[r * d], &c.V[r * d]);
  }

  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  c.A.assign(H * nq * n, T(0));
  c.O.assign(nq * d, T(0));
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t q = 0; q < nq; ++q) {
      T* a = &c.A[(h * nq + q) * n];
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        a[j] = scale * dot(&c.Q[q * d + h * dh], &c.K[j * d + h * dh], dh);
        mx = std::max(mx, a[j]);
      }
      T sum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        a[j] = std::exp(a[j] - mx);
        sum += a[j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        a[j] /= sum;
        axpy(a[j], &c.V[j * d + h * dh], &c.O[q * d + h * dh], dh);
      }
    }
  }

  c.Z.assign(nq * d, T(0));
  c.mask1.resize(nq * d);
  dropout_mask(c.mask1.data(), nq * d, cfg_.dropout, pass.dropout);
  c.xhat1.resize(nq * d);
  c.inv1.resize(nq);
  c.H1.resize(nq * d);
  std::vector<T> r1(d);
  for (std::size_t q = 0; q < nq; ++q) {
    linear(at(wo_), at(bo_), d, d, &c.O[q * d], &c.Z[q * d]);
    for (std::size_t i = 0; i < d; ++i) {
      c.Z[q * d + i] *= c.mask1[q * d + i];
      r1[i] = c.X[c.qrows[q] * d + i] + c.Z[q * d + i];
    }
    layer_norm(r1.data(), at(ln1_g_), at(ln1_b_), d, &c.xhat1[q * d], c.inv1[q], &c.H1[q * d]);
  }

  c.U.resize(nq * d);
  c.F.resize(nq * d);
  c.mask2.resize(nq * d);
  dropout_mask(c.mask2.data(), nq * d, cfg_.dropout, pass.dropout);
  c.xhat2.resize(nq * d);
  c.inv2.resize(nq);
  c.H2.resize(nq * d);
  std::vector<T> relu(d), r2(d);
  for (std::size_t q = 0; q < nq; ++q) {
    linear(at(w1_), at(b1_), d, d, &c.H1[q * d], &c.U[q * d]);
    for (std::size_t i = 0; i < d; ++i) relu[i] = std::max(c.U[q * d + i], T(0));
    linear(at(w2_), at(b2_), d, d, relu.data(), &c.F[q * d]);
    for (std::size_t i = 0; i < d; ++i) {
      c.F[q * d + i] *= c.mask2[q * d + i];
      r2[i] = c.H1[q * d + i] + c.F[q * d + i];
    }
    layer_norm(r2.data(), at(ln2_g_), at(ln2_b_), d, &c.xhat2[q * d], c.inv2[q], &c.H2[q * d]);
  }

  c.pooled.assign(d, T(0));
  for (std::size_t q = 0; q < nq; ++q) axpy(T(1) / static_cast<T>(nq), &c.H2[q * d], c.pooled.data(), d);

  c.head_in.clear();
  if (cfg_.enabled(Modality::TextEmb)) {
    if (cfg_.project_text_in_head) {
      c.head_in.insert(c.head_in.end(), c.X.begin() + static_cast<std::ptrdiff_t>(c.text_row * d),
                       c.X.begin() + static_cast<std::ptrdiff_t>((c.text_row + 1) * d));
    } else {
      const auto& t = s.inputs[static_cast<std::size_t>(Modality::TextEmb)];
      c.head_in.insert(c.head_in.end(), t.begin(), t.end());
    }
  }
  c.head_in.insert(c.head_in.end(), c.pooled.begin(), c.pooled.end());

  c.hid_pre.resize(d);
  c.hid.resize(d);
  c.mask3.resize(d);
  linear(at(h1_w_), at(h1_b_), d, head_in_, c.head_in.data(), c.hid_pre.data());
  dropout_mask(c.mask3.data(), d, cfg_.dropout, pass.dropout);
  for (std::size_t i = 0; i < d; ++i) c.hid[i] = std::max(c.hid_pre[i], T(0)) * c.mask3[i];
  return *at(h2_b_) + dot(at(h2_w_), c.hid.data(), d);
}

template <typename T>
T FusionNet<T>::probability(const Sample<T>& s) const {
  return sigmoid(logit(s));
}

template <typename T>
void FusionNet<T>::backward(const Cache& c, T dlogit, std::vector<T>& grad) const {
  const auto d = static_cast<std::size_t>(cfg_.d_shared);
  const auto H = static_cast<std::size_t>(cfg_.n_heads);
  const std::size_t dh = d / H;
  const std::size_t n = mods_.size();
  const std::size_t nq = c.qrows.size();
  const T* P = params_.data();
  T* G = grad.data();
  auto at = [&](std::size_t gi) { return P + groups_[gi].offset; };
  auto gat = [&](std::size_t gi) { return G + groups_[gi].offset; };

  // head
  *gat(h2_b_) += dlogit;
  axpy(dlogit, c.hid.data(), gat(h2_w_), d);
  std::vector<T> dpre(d);
  for (std::size_t i = 0; i < d; ++i) {
    dpre[i] = c.hid_pre[i] > T(0) ? dlogit * at(h2_w_)[i] * c.mask3[i] : T(0);
  }
  std::vector<T> dhead(head_in_, T(0));
  linear_back(at(h1_w_), d, head_in_, c.head_in.data(), dpre.data(), gat(h1_w_), gat(h1_b_), dhead.data());

  std::vector<T> dX(n * d, T(0));
  if (cfg_.enabled(Modality::TextEmb) && cfg_.project_text_in_head) {
    axpy(T(1), dhead.data(), &dX[c.text_row * d], d);
  }
  const T* dpooled = dhead.data() + text_dim_in_head_;

  std::vector<T> dH1(nq * d, T(0)), dZ(nq * d, T(0));
  std::vector<T> dr(d), dF(d), dU(d), relu(d), drelu(d);
  for (std::size_t q = 0; q < nq; ++q) {
    // LN2
    std::vector<T> dH2(dpooled, dpooled + d);
    for (T& v : dH2) v /= static_cast<T>(nq);
    std::fill(dr.begin(), dr.end(), T(0));
    layer_norm_back(&c.xhat2[q * d], c.inv2[q], at(ln2_g_), dH2.data(), d, gat(ln2_g_), gat(ln2_b_), dr.data());
    // residual into H1 and through the FFN
    axpy(T(1), dr.data(), &dH1[q * d], d);
    for (std::size_t i = 0; i < d; ++i) {
      dF[i] = dr[i] * c.mask2[q * d + i];
      relu[i] = std::max(c.U[q * d + i], T(0));
    }
    std::fill(drelu.begin(), drelu.end(), T(0));
    linear_back(at(w2_), d, d, relu.data(), dF.data(), gat(w2_), gat(b2_), drelu.data());
    for (std::size_t i = 0; i < d; ++i) dU[i] = c.U[q * d + i] > T(0) ? drelu[i] : T(0);
    linear_back(at(w1_), d, d, &c.H1[q * d], dU.data(), gat(w1_), gat(b1_), &dH1[q * d]);
    // LN1
    std::fill(dr.begin(), dr.end(), T(0));
    layer_norm_back(&c.xhat1[q * d], c.inv1[q], at(ln1_g_), &dH1[q * d], d, gat(ln1_g_), gat(ln1_b_), dr.data());
    axpy(T(1), dr.data(), &dX[c.qrows[q] * d], d);
    for (std::size_t i = 0; i < d; ++i) dZ[q * d + i] = dr[i] * c.mask1[q * d + i];
  }

  std::vector<T> dO(nq * d, T(0));
  for (std::size_t q = 0; q < nq; ++q) {
    linear_back(at(wo_), d, d, &c.O[q * d], &dZ[q * d], gat(wo_), gat(bo_), &dO[q * d]);
  }

  std::vector<T> dQ(nq * d, T(0)), dK(n * d, T(0)), dV(n * d, T(0)), dA(n);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t q = 0; q < nq; ++q) {
      const T* a = &c.A[(h * nq + q) * n];
      const T* dout = &dO[q * d + h * dh];
      T s = 0;
      for (std::size_t j = 0; j < n; ++j) {
        dA[j] = dot(dout, &c.V[j * d + h * dh], dh);
        axpy(a[j], dout, &dV[j * d + h * dh], dh);
        s += dA[j] * a[j];
      }
      for (std::size_t j = 0; j < n; ++j) {
        const T ds = a[j] * (dA[j] - s) * scale;
        axpy(ds, &c.K[j * d + h * dh], &dQ[q * d + h * dh], dh);
        axpy(ds, &c.Q[q * d + h * dh], &dK[j * d + h * dh], dh);
      }
    }
  }
  for (std::size_t q = 0; q < nq; ++q) {
    linear_back(at(wq_), d, d, &c.X[c.qrows[q] * d], &dQ[q * d], gat(wq_), gat(bq_), &dX[c.qrows[q] * d]);
  }
  for (std::size_t r = 0; r < n; ++r) {
    linear_back(at(wk_), d, d, &c.X[r * d], &dK[r * d], gat(wk_), gat(bk_), &dX[r * d]);
    linear_back(at(wv_), d, d, &c.X[r * d], &dV[r * d], gat(wv_), gat(bv_), &dX[r * d]);
  }

  // projections
  std::vector<T> dt(d);
  for (std::size_t r = 0; r < n; ++r) {
    const Modality m = mods_[c.order[r]];
    const auto k = static_cast<std::size_t>(m);
    for (std::size_t i = 0; i < d; ++i) {
      const T y = c.X[r * d + i];
      dt[i] = dX[r * d + i] * (T(1) - y * y);
    }
    const auto& x = c.sample->inputs[k];
    const auto& gw = groups_[proj_w_[k]];
    linear_back(at(proj_w_[k]), gw.rows, gw.cols, x.data(), dt.data(), gat(proj_w_[k]), gat(proj_b_[k]),
                static_cast<T*>(nullptr));
  }
}

template <typename T>
T FusionNet<T>::loss(std::span<const Sample<T>* const> batch, std::vector<T>* grad, Rng* dropout) const {
  if (batch.empty()) throw Error(Errc::EmptyInput, "empty batch");
  if (grad) grad->assign(params_.size(), T(0));
  T total = 0;
  Cache cache;
  std::vector<T> local;
  for (const Sample<T>* s : batch) {
    Pass pass;
    pass.cache = grad ? &cache : nullptr;
    pass.dropout = dropout;
    const T z = logit(*s, pass);
    total += bce_with_logits(z, s->label);
    if (grad) backward(cache, sigmoid(z) - static_cast<T>(s->label), *grad);
  }
  const T inv = T(1) / static_cast<T>(batch.size());
  if (grad) {
    for (T& g : *grad) g *= inv;
  }
  return total * inv;
}

template <typename T>
std::vector<T> FusionNet<T>::fuse(const std::vector<std::vector<T>>& tokens) const {
  if (tokens.empty()) throw Error(Errc::EmptyInput, "no modality tokens to fuse");
  const auto d = static_cast<std::size_t>(cfg_.d_shared);
  const auto H = static_cast<std::size_t>(cfg_.n_heads);
  const std::size_t dh = d / H;
  const std::size_t n = tokens.size();
  const T* P = params_.data();
  auto at = [&](std::size_t gi) { return P + groups_[gi].offset; };
  std::vector<T> K(n * d), V(n * d), Q(n * d), O(n * d, T(0)), pooled(d, T(0));
  for (std::size_t r = 0; r < n; ++r) {
    if (tokens[r].size() != d) throw Error(Errc::DimMismatch, "token width differs from d_shared");
    linear(at(wq_), at(bq_), d, d, tokens[r].data(), &Q[r * d]);
    linear(at(wk_), at(bk_), d, d, tokens[r].data(), &K[r * d]);
    linear(at(wv_), at(bv_), d, d, tokens[r].data(), &V[r * d]);
  }
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<T> a(n), z(d), r1(d), h1(d), u(d), f(d), xh(d), h2(d);
  T inv;
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t h = 0; h < H; ++h) {
      T mx = -std::numeric_limits<T>::infinity(), sum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        a[j] = scale * dot(&Q[q * d + h * dh], &K[j * d + h * dh], dh);
        mx = std::max(mx, a[j]);
      }
      for (std::size_t j = 0; j < n; ++j) sum += (a[j] = std::exp(a[j] - mx));
      for (std::size_t j = 0; j < n; ++j) axpy(a[j] / sum, &V[j * d + h * dh], &O[q * d + h * dh], dh);
    }
    linear(at(wo_), at(bo_), d, d, &O[q * d], z.data());
    for (std::size_t i = 0; i < d; ++i) r1[i] = tokens[q][i] + z[i];
    layer_norm(r1.data(), at(ln1_g_), at(ln1_b_), d, xh.data(), inv, h1.data());
    linear(at(w1_), at(b1_), d, d, h1.data(), u.data());
    for (T& v : u) v = std::max(v, T(0));
    linear(at(w2_), at(b2_), d, d, u.data(), f.data());
    for (std::size_t i = 0; i < d; ++i) r1[i] = h1[i] + f[i];
    layer_norm(r1.data(), at(ln2_g_), at(ln2_b_), d, xh.data(), inv, h2.data());
    axpy(T(1) / static_cast<T>(n), h2.data(), pooled.data(), d);
  }
  return pooled;
}

template class FusionNet<float>;
template class FusionNet<double>;

// ---- early stopping --------------------------------------------------------------

bool EarlyStopping::update(double score) {
  ++epochs_;
  if (best_epoch_ == 0 || score > best_) {
    best_ = score;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

// ---- standardizer ----------------------------------------------------------------

void Standardizer::fit(const std::vector<std::string>& names, const std::vector<std::vector<double>>& values,
                       const std::vector<std::vector<std::uint8_t>>& present) {
  *this = Standardizer{};
  input_names = names;
  const std::size_t rows = values.size();
  if (rows == 0) throw Error(Errc::EmptyInput, "no rows to standardize");

  auto add = [&](std::string name, std::size_t c, bool mask, double m, double sd, double imp) {
    if (sd <= 1e-12) {
      dropped.push_back(std::move(name));
      return;
    }
    output_names.push_back(std::move(name));
    source.push_back(c);
    is_mask.push_back(mask ? 1 : 0);
    mean.push_back(m);
    scale.push_back(sd);
    impute.push_back(imp);
  };

  std::vector<double> col(rows);
  for (std::size_t c = 0; c < names.size(); ++c) {
    double sum = 0;
    std::size_t n_present = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (present[r][c]) {
        sum += values[r][c];
        ++n_present;
      }
    }
    if (n_present == 0) {
      dropped.push_back(names[c]);
      dropped.push_back(names[c] + "_present");
      continue;
    }
    const double present_mean = sum / static_cast<double>(n_present);
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = values[r][c];
      col[r] = present[r][c] || std::isfinite(v) ? v : present_mean;
    }
    const double m = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(rows);
    double var = 0;
    for (double v : col) var += (v - m) * (v - m);
    add(names[c], c, false, m, std::sqrt(var / static_cast<double>(rows)), present_mean);

    const double frac = static_cast<double>(n_present) / static_cast<double>(rows);
    add(names[c] + "_present", c, true, frac, std::sqrt(frac * (1.0 - frac)), 0.0);
  }
}

std::vector<double> Standardizer::transform(std::span<const double> values, std::span<const std::uint8_t> present) const {
  if (values.size() != input_names.size() || present.size() != input_names.size()) {
    throw Error(Errc::DimMismatch, "feature row width differs from the fitted columns");
  }
  std::vector<double> out(output_names.size());
  for (std::size_t o = 0; o < out.size(); ++o) {
    const std::size_t c = source[o];
    double v;
    if (is_mask[o]) {
      v = present[c] ? 1.0 : 0.0;
    } else {
      v = present[c] || std::isfinite(values[c]) ? values[c] : impute[o];
    }
    out[o] = (v - mean[o]) / scale[o];
  }
  return out;
}

std::string Standardizer::to_json() const {
  json j;
  j["input_names"] = input_names;
  j["output_names"] = output_names;
  j["source"] = source;
  j["is_mask"] = is_mask;
  j["mean"] = mean;
  j["scale"] = scale;
  j["impute"] = impute;
  j["dropped"] = dropped;
  return j.dump();
}

Standardizer Standardizer::from_json(const std::string& text) {
  Standardizer s;
  try {
    const auto j = json::parse(text);
    s.input_names = j.at("input_names").get<std::vector<std::string>>();
    s.output_names = j.at("output_names").get<std::vector<std::string>>();
    s.source = j.at("source").get<std::vector<std::size_t>>();
    s.is_mask = j.at("is_mask").get<std::vector<std::uint8_t>>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.scale = j.at("scale").get<std::vector<double>>();
    s.impute = j.at("impute").get<std::vector<double>>();
    s.dropped = j.at("dropped").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(Errc::DataError, std::string("bad standardizer: ") + e.what());
  }
  return s;
}

// ---- training --------------------------------------------------------------------

template <typename T>
std::vector<double> predict(const FusionNet<T>& net, const std::vector<Sample<T>>& samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(static_cast<double>(net.probability(s)));
  return out;
}

namespace {

template <typename T>
std::pair<double, double> score(const FusionNet<T>& net, const std::vector<Sample<T>>& set) {
  std::vector<int> preds, golds;
  double loss = 0;
  for (const auto& s : set) {
    const T z = net.logit(s);
    loss += static_cast<double>(bce_with_logits(z, s.label));
    preds.push_back(z >= T(0) ? 1 : 0);
    golds.push_back(s.label);
  }
  return {loss / static_cast<double>(set.size()), eval::compute_metrics(preds, golds).macro_f1};
}

}  // namespace

template <typename T>
TrainResult<T> train(const ModelConfig& cfg, const InputDims& dims, const std::vector<Sample<T>>& train_set,
                     const std::vector<Sample<T>>& val_set) {
  if (train_set.empty()) throw Error(Errc::EmptyInput, "empty training set");
  FusionNet<T> net(cfg, dims);
  TrainResult<T> result{net, {}, 0};
  const std::vector<Sample<T>>& monitor = val_set.empty() ? train_set : val_set;

  const std::size_t n = train_set.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.max_epochs);
  const auto warmup = static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(total_steps)));
  const double base_lr = cfg.effective_lr();
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  auto& p = net.params();
  std::vector<T> m(p.size(), T(0)), v(p.size(), T(0)), grad;
  std::vector<std::uint8_t> decay(p.size(), 0);
  for (const auto& g : net.groups()) {
    if (g.decay) std::fill(decay.begin() + static_cast<std::ptrdiff_t>(g.offset),
                           decay.begin() + static_cast<std::ptrdiff_t>(g.offset + g.size()), 1);
  }

  Rng rng(cfg.seed ^ 0x747261696eULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<const Sample<T>*> batch;
  EarlyStopping stopper(cfg.patience);
  std::size_t step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_loss = 0;
    double lr = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(n, start + bs); ++i) batch.push_back(&train_set[order[i]]);
      epoch_loss += static_cast<double>(net.loss(batch, &grad, &rng)) * static_cast<double>(batch.size());
      ++step;
      lr = step <= warmup && warmup > 0
               ? base_lr * static_cast<double>(step) / static_cast<double>(warmup)
               : base_lr * static_cast<double>(total_steps - step) / static_cast<double>(std::max<std::size_t>(1, total_steps - warmup));
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = static_cast<T>(b1 * static_cast<double>(m[i]) + (1 - b1) * g);
        v[i] = static_cast<T>(b2 * static_cast<double>(v[i]) + (1 - b2) * g * g);
        double upd = (static_cast<double>(m[i]) / bc1) / (std::sqrt(static_cast<double>(v[i]) / bc2) + eps);
        if (decay[i]) upd += cfg.weight_decay * static_cast<double>(p[i]);
        p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * upd);
      }
    }
    const auto [val_loss, val_f1] = score(net, monitor);
    result.history.push_back({epoch, epoch_loss / static_cast<double>(n), val_loss, val_f1, lr});
    if (stopper.update(val_f1)) result.net = net;
    if (stopper.should_stop()) break;
  }
  result.best_epoch = stopper.best_epoch();
  return result;
}

template TrainResult<float> train(const ModelConfig&, const InputDims&, const std::vector<Sample<float>>&,
                                  const std::vector<Sample<float>>&);
template TrainResult<double> train(const ModelConfig&, const InputDims&, const std::vector<Sample<double>>&,
                                   const std::vector<Sample<double>>&);
template std::vector<double> predict(const FusionNet<float>&, const std::vector<Sample<float>>&);
template std::vector<double> predict(const FusionNet<double>&, const std::vector<Sample<double>>&);

// ---- folds -----------------------------------------------------------------------

std::vector<int> stratified_group_folds(const std::vector<int>& labels, const std::vector<std::string>& groups,
                                        int k, std::uint64_t seed) {
  if (labels.size() != groups.size()) throw Error(Errc::LengthMismatch, "labels and groups differ in length");
  if (k < 2) throw Error(Errc::BadConfig, "cross-validation needs k >= 2");
  for (int label : {1, 0}) {
    const auto count = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
    if (count < static_cast<std::size_t>(k)) {
      throw Error(Errc::TooFewSamples, "class " + std::to_string(label) + " has " + std::to_string(count) +
                                           " items, fewer than k = " + std::to_string(k));
    }
  }
  // A group is positive when any member is; groups are stratified by that
  // label and each goes to the fold holding the fewest items of its label.
  std::vector<std::string> names;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& mem = members[groups[i]];
    if (mem.empty()) names.push_back(groups[i]);
    mem.push_back(i);
  }
  std::vector<int> fold(labels.size(), -1);
  Rng rng(seed ^ 0x666f6c64ULL);
  for (int label : {1, 0}) {
    std::vector<std::string> picked;
    for (const auto& g : names) {
      const bool pos = std::any_of(members[g].begin(), members[g].end(), [&](std::size_t i) { return labels[i] == 1; });
      if (static_cast<int>(pos) == label) picked.push_back(g);
    }
    rng.shuffle(std::span(picked));
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (const auto& g : picked) {
      const auto f = static_cast<std::size_t>(std::min_element(sizes.begin(), sizes.end()) - sizes.begin());
      for (std::size_t i : members[g]) fold[i] = static_cast<int>(f);
      sizes[f] += members[g].size();
    }
  }
  return fold;
}

// ---- checkpoints -----------------------------------------------------------------

template <typename T>
Checkpoint make_checkpoint(const FusionNet<T>& net, std::string manifest_json) {
  Checkpoint ck;
  ck.config = net.config();
  ck.config.lr = net.config().effective_lr();
  ck.dims = net.input_dims();
  ck.manifest_json = std::move(manifest_json);
  ck.params.assign(net.params().begin(), net.params().end());
  return ck;
}

template <typename T>
FusionNet<T> restore(const Checkpoint& ck) {
  FusionNet<T> net(ck.config, ck.dims);
  if (net.params().size() != ck.params.size()) {
    throw Error(Errc::DimMismatch, "checkpoint parameter count does not match its config");
  }
  std::copy(ck.params.begin(), ck.params.end(), net.params().begin());
  return net;
}

template Checkpoint make_checkpoint(const FusionNet<float>&, std::string);
template Checkpoint make_checkpoint(const FusionNet<double>&, std::string);
template FusionNet<float> restore(const Checkpoint&);
template FusionNet<double> restore(const Checkpoint&);

namespace {

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(U));
}

template <typename U>
U take(std::span<const std::uint8_t> b, std::size_t& pos) {
  if (b.size() - pos < sizeof(U)) throw Error(Errc::TruncatedFile, "checkpoint ends early");
  U v;
  std::memcpy(&v, b.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

std::string take_string(std::span<const std::uint8_t> b, std::size_t& pos) {
  const auto n = take<std::uint32_t>(b, pos);
  if (b.size() - pos < n) throw Error(Errc::TruncatedFile, "checkpoint ends early");
  std::string s(reinterpret_cast<const char*>(b.data() + pos), n);
  pos += n;
  return s;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  std::vector<std::uint8_t> out{'O', 'I', 'R', 'M'};
  put<std::uint16_t>(out, 1);
  const std::string cfg = ck.config.to_json();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.manifest_json.size()));
  out.insert(out.end(), ck.manifest_json.begin(), ck.manifest_json.end());
  for (std::size_t d : ck.dims) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  put<std::uint64_t>(out, ck.params.size());
  const auto* p = reinterpret_cast<const std::uint8_t*>(ck.params.data());
  out.insert(out.end(), p, p + ck.params.size() * sizeof(float));
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "OIRM", 4) != 0) throw Error(Errc::BadMagic, "not an OIRM checkpoint");
  std::size_t pos = 4;
  if (take<std::uint16_t>(bytes, pos) != 1) throw Error(Errc::BadMagic, "unsupported checkpoint version");
  Checkpoint ck;
  ck.config = ModelConfig::from_json(take_string(bytes, pos));
  ck.manifest_json = take_string(bytes, pos);
  for (auto& d : ck.dims) d = take<std::uint32_t>(bytes, pos);
  const auto count = take<std::uint64_t>(bytes, pos);
  if ((bytes.size() - pos) / sizeof(float) < count) throw Error(Errc::TruncatedFile, "checkpoint parameters truncated");
  ck.params.resize(count);
  std::memcpy(ck.params.data(), bytes.data() + pos, count * sizeof(float));
  pos += count * sizeof(float);
  if (pos != bytes.size()) throw Error(Errc::DataError, "trailing bytes after checkpoint parameters");
  return ck;
}

void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace oir::model
