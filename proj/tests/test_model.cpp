#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oir/error.hpp"
#include "oir/model.hpp"

using namespace oir;
using namespace oir::model;

namespace {

constexpr InputDims kDims = {5, 4, 3, 6};

template <typename T>
Sample<T> random_sample(Rng& rng, const ModelConfig& cfg, const InputDims& dims, int label = 0) {
  Sample<T> s;
  for (Modality m : kAllModalities) {
    if (!cfg.enabled(m)) continue;
    auto& v = s.inputs[static_cast<std::size_t>(m)];
    v.resize(dims[static_cast<std::size_t>(m)]);
    for (T& x : v) x = static_cast<T>(rng.normal());
  }
  s.label = label;
  return s;
}

ModelConfig small_config(std::uint64_t seed = 7) {
  ModelConfig c;
  c.d_shared = 8;
  c.n_heads = 2;
  c.dropout = 0.0;
  c.seed = seed;
  return c;
}

double max_rel_error(const ModelConfig& cfg) {
  FusionNet<double> net(cfg, kDims);
  Rng rng(11);
  std::vector<Sample<double>> data;
  for (int i = 0; i < 3; ++i) data.push_back(random_sample<double>(rng, cfg, kDims, i % 2));
  std::vector<const Sample<double>*> batch;
  for (const auto& s : data) batch.push_back(&s);

  std::vector<double> grad;
  net.loss(batch, &grad);
  double worst = 0;
  Rng pick(3);
  for (const auto& g : net.groups()) {
    std::vector<std::size_t> idx(g.size());
    std::iota(idx.begin(), idx.end(), g.offset);
    pick.shuffle(std::span(idx));
    idx.resize(std::min<std::size_t>(idx.size(), 25));
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
      const double rel = std::abs(numeric - grad[i]) / denom;
      if (rel > worst) worst = rel;
      if (rel >= 1e-4) MESSAGE(g.name << "[" << i - g.offset << "] analytic " << grad[i] << " numeric " << numeric);
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("config invariants") {
    ModelConfig c;
    CHECK_NOTHROW(c.check());
    c.d_shared = 30;
    c.n_heads = 4;
    CHECK_THROWS_AS(c.check(), Error);
    c = ModelConfig{};
    c.patience = 20;
    CHECK_THROWS_AS(c.check(), Error);
    c = ModelConfig{};
    c.modalities = {Modality::Ling};
    c.cross_attention = true;
    CHECK_THROWS_AS(c.check(), Error);
  }

  TEST_CASE("learning-rate defaults follow the modality set") {
    ModelConfig c;
    CHECK(c.effective_lr() == doctest::Approx(2e-5));
    c.modalities = {Modality::Ling, Modality::Pros};
    CHECK(c.effective_lr() == doctest::Approx(1e-3));
    c.lr = 5e-4;
    CHECK(c.effective_lr() == doctest::Approx(5e-4));
  }

  TEST_CASE("config JSON round trip") {
    ModelConfig c = small_config(99);
    c.modalities = {Modality::TextEmb, Modality::Pros};
    c.cross_attention = true;
    const auto back = ModelConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.seed == 99);
    CHECK(back.enabled(Modality::Pros));
    CHECK_FALSE(back.enabled(Modality::Ling));
  }

  TEST_CASE("projection shapes and zero input") {
    ModelConfig c = small_config();
    FusionNet<double> net(c, kDims);
    for (Modality m : kAllModalities) {
      const auto y = net.project(std::vector<double>(kDims[static_cast<std::size_t>(m)], 0.0), m);
      CHECK(y.size() == 8);
      for (double v : y) CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(net.project(std::vector<double>(2, 0.0), Modality::Ling), Error);
  }

  TEST_CASE("head input follows the concatenation rule") {
    ModelConfig c = small_config();
    CHECK(FusionNet<double>(c, kDims).head_input_dim() == 5 + 8);
    c.project_text_in_head = true;
    CHECK(FusionNet<double>(c, kDims).head_input_dim() == 8 + 8);
    c = small_config();
    c.modalities = {Modality::Ling, Modality::Pros};
    FusionNet<double> hand(c, kDims);
    CHECK(hand.head_input_dim() == 8);
    CHECK(hand.n_tokens() == 2);
    CHECK_THROWS_AS(hand.group("proj_text_emb.W"), Error);
  }

  TEST_CASE("missing modality input is rejected") {
    ModelConfig c = small_config();
    FusionNet<double> net(c, kDims);
    Rng rng(1);
    auto s = random_sample<double>(rng, c, kDims);
    s.inputs[static_cast<std::size_t>(Modality::AudioEmb)].clear();
    try {
      net.logit(s);
      FAIL("expected MissingModality");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::MissingModality);
    }
  }

  TEST_CASE("probabilities are strictly inside (0, 1)") {
    ModelConfig c = small_config();
    FusionNet<double> net(c, kDims);
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
      auto s = random_sample<double>(rng, c, kDims);
      for (auto& v : s.inputs) for (double& x : v) x *= 50;
      const double p = net.probability(s);
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
  }

  TEST_CASE("finite-difference gradient check, self-attention") {
    CHECK(max_rel_error(small_config()) < 1e-4);
  }

  TEST_CASE("finite-difference gradient check, text-query cross attention and projected text") {
    ModelConfig c = small_config(21);
    c.cross_attention = true;
    c.project_text_in_head = true;
    CHECK(max_rel_error(c) < 1e-4);
  }

  TEST_CASE("finite-difference gradient check, handcrafted only") {
    ModelConfig c = small_config(5);
    c.modalities = {Modality::Ling, Modality::Pros};
    CHECK(max_rel_error(c) < 1e-4);
  }

  TEST_CASE("modality-token permutation leaves the output unchanged") {
    for (bool cross : {false, true}) {
      ModelConfig c = small_config();
      c.cross_attention = cross;
      FusionNet<double> net(c, kDims);
      Rng rng(8);
      for (int trial = 0; trial < 5; ++trial) {
        const auto s = random_sample<double>(rng, c, kDims);
        const double ref = net.logit(s);
        std::vector<std::size_t> order = {0, 1, 2, 3};
        while (std::next_permutation(order.begin(), order.end())) {
          FusionNet<double>::Pass pass;
          pass.order = &order;
          CHECK(std::abs(net.logit(s, pass) - ref) < 1e-6);
        }
      }
    }
  }

  TEST_CASE("fuse: permutation, single token, identical tokens") {
    ModelConfig c = small_config();
    FusionNet<double> net(c, kDims);
    Rng rng(4);
    std::vector<std::vector<double>> toks(4, std::vector<double>(8));
    for (auto& t : toks) for (double& x : t) x = rng.normal();
    const auto a = net.fuse(toks);
    std::swap(toks[0], toks[3]);
    std::swap(toks[1], toks[2]);
    const auto b = net.fuse(toks);
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);

    const auto single = net.fuse({toks[0]});
    const auto same = net.fuse({toks[0], toks[0], toks[0]});
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(single[i] - same[i]) < 1e-9);
    CHECK_THROWS_AS(net.fuse({}), Error);
  }

  TEST_CASE("batch loss is invariant to sample order") {
    ModelConfig c = small_config();
    FusionNet<double> net(c, kDims);
    Rng rng(12);
    std::vector<Sample<double>> data;
    for (int i = 0; i < 6; ++i) data.push_back(random_sample<double>(rng, c, kDims, i % 2));
    std::vector<const Sample<double>*> batch;
    for (const auto& s : data) batch.push_back(&s);
    const double l1 = net.loss(batch, nullptr);
    std::reverse(batch.begin(), batch.end());
    std::rotate(batch.begin(), batch.begin() + 2, batch.end());
    CHECK(std::abs(net.loss(batch, nullptr) - l1) < 1e-6);
  }

  TEST_CASE("early stopping rule") {
    EarlyStopping es(3);
    const double seq[] = {0.6, 0.7, 0.65, 0.64, 0.63};
    int stopped_after = 0;
    for (double s : seq) {
      es.update(s);
      if (es.should_stop()) {
        stopped_after = es.epochs();
        break;
      }
    }
    CHECK(stopped_after == 5);
    CHECK(es.best_epoch() == 2);
    CHECK(es.best_score() == doctest::Approx(0.7));
  }

  TEST_CASE("separable set reaches training F1 of 1.0 within 20 epochs") {
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
      auto s = random_sample<float>(rng, c, kDims, y);
      s.inputs[2][0] = y ? 2.0f : -2.0f;
      data.push_back(s);
    }
    const auto res = train<float>(c, kDims, data, {});
    CHECK(res.history.size() <= 20);
    std::vector<int> preds, golds;
    for (const auto& s : data) {
      preds.push_back(res.net.probability(s) >= 0.5f ? 1 : 0);
      golds.push_back(s.label);
    }
    CHECK(eval::compute_metrics(preds, golds).macro_f1 == doctest::Approx(100.0));
  }

  TEST_CASE("same seed gives identical checkpoints") {
    ModelConfig c = small_config(42);
    c.dropout = 0.1;
    c.max_epochs = 4;
    c.patience = 2;
    Rng rng(2);
    std::vector<Sample<float>> tr, va;
    for (int i = 0; i < 24; ++i) tr.push_back(random_sample<float>(rng, c, kDims, i % 2));
    for (int i = 0; i < 8; ++i) va.push_back(random_sample<float>(rng, c, kDims, i % 2));
    const auto a = serialize_checkpoint(make_checkpoint(train<float>(c, kDims, tr, va).net, "{}"));
    const auto b = serialize_checkpoint(make_checkpoint(train<float>(c, kDims, tr, va).net, "{}"));
    CHECK(a == b);
    c.seed = 43;
    const auto d = serialize_checkpoint(make_checkpoint(train<float>(c, kDims, tr, va).net, "{}"));
    CHECK(a != d);
  }

  TEST_CASE("history records every epoch and the best epoch") {
    ModelConfig c = small_config(1);
    c.max_epochs = 6;
    c.patience = 2;
    Rng rng(9);
    std::vector<Sample<float>> tr;
    for (int i = 0; i < 12; ++i) tr.push_back(random_sample<float>(rng, c, kDims, i % 2));
    const auto res = train<float>(c, kDims, tr, tr);
    REQUIRE_FALSE(res.history.empty());
    CHECK(res.best_epoch >= 1);
    CHECK(res.best_epoch <= static_cast<int>(res.history.size()));
    for (std::size_t i = 0; i < res.history.size(); ++i) CHECK(res.history[i].epoch == static_cast<int>(i + 1));
  }

  TEST_CASE("checkpoint round trip and malformed input") {
    ModelConfig c = small_config(5);
    FusionNet<float> net(c, kDims);
    const auto bytes = serialize_checkpoint(make_checkpoint(net, R"({"features":[]})"));
    const auto ck = parse_checkpoint(bytes);
    CHECK(ck.manifest_json == R"({"features":[]})");
    CHECK(serialize_checkpoint(ck) == bytes);
    const auto back = restore<float>(ck);
    CHECK(back.params() == net.params());

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(parse_checkpoint(bad), doctest::Contains("BadMagic"), Error);
    auto cut = std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 3);
    CHECK_THROWS_WITH_AS(parse_checkpoint(cut), doctest::Contains("TruncatedFile"), Error);
  }

  TEST_CASE("standardizer: train columns are z-scored, constants dropped, masks appended") {
    std::vector<std::string> names = {"a", "b", "c"};
    std::vector<std::vector<double>> vals;
    std::vector<std::vector<std::uint8_t>> pres;
    Rng rng(6);
    for (int i = 0; i < 50; ++i) {
      const bool miss = i % 5 == 0;
      vals.push_back({rng.normal() * 3 + 1, 4.0, miss ? std::nan("") : rng.uniform()});
      pres.push_back({1, 1, static_cast<std::uint8_t>(miss ? 0 : 1)});
    }
    Standardizer st;
    st.fit(names, vals, pres);
    CHECK(std::find(st.dropped.begin(), st.dropped.end(), "b") != st.dropped.end());
    CHECK(std::find(st.output_names.begin(), st.output_names.end(), "c_present") != st.output_names.end());
    CHECK(std::find(st.output_names.begin(), st.output_names.end(), "a_present") == st.output_names.end());
    std::vector<double> sum(st.dim(), 0), sq(st.dim(), 0);
    for (std::size_t r = 0; r < vals.size(); ++r) {
      const auto z = st.transform(vals[r], pres[r]);
      for (std::size_t k = 0; k < z.size(); ++k) {
        CHECK(std::isfinite(z[k]));
        sum[k] += z[k];
        sq[k] += z[k] * z[k];
      }
    }
    for (std::size_t k = 0; k < st.dim(); ++k) {
      const double mu = sum[k] / 50;
      CHECK(std::abs(mu) < 1e-6);
      CHECK(std::abs(std::sqrt(sq[k] / 50 - mu * mu) - 1.0) < 1e-6);
    }
    const auto back = Standardizer::from_json(st.to_json());
    CHECK(back.transform(vals[3], pres[3]) == st.transform(vals[3], pres[3]));
  }

  TEST_CASE("stratified group folds") {
    const std::vector<int> labels = {1, 0, 1, 0};
    const std::vector<std::string> groups = {"a", "b", "c", "d"};
    const auto f = stratified_group_folds(labels, groups, 2, 1);
    std::vector<int> sizes(2, 0), pos(2, 0);
    for (std::size_t i = 0; i < f.size(); ++i) {
      ++sizes[f[i]];
      pos[f[i]] += labels[i];
    }
    CHECK(sizes == std::vector<int>{2, 2});
    CHECK(pos == std::vector<int>{1, 1});

    std::vector<int> l2;
    std::vector<std::string> g2;
    for (int i = 0; i < 40; ++i) {
      l2.push_back(i % 4 == 0);
      g2.push_back("g" + std::to_string(i / 2));
    }
    const auto f2 = stratified_group_folds(l2, g2, 5, 3);
    for (std::size_t i = 0; i + 1 < f2.size(); i += 2) {
      CHECK(f2[i] == f2[i + 1]);
    }
    CHECK_THROWS_WITH_AS(stratified_group_folds({1, 0, 0}, {"a", "b", "c"}, 2, 0), doctest::Contains("TooFewSamples"),
                         Error);
  }
}
