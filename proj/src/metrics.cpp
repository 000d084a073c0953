#include "oir/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oir/error.hpp"

namespace oir::eval {

namespace {

double f1(double tp, double fp, double fn) {
  const double d = 2 * tp + fp + fn;
  return d > 0 ? 100.0 * 2 * tp / d : 0.0;
}

}  // namespace

Metrics compute_metrics(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size()) throw Error(Errc::LengthMismatch, "predictions and labels differ in length");
  if (preds.empty()) throw Error(Errc::EmptyInput, "no items to score");
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0, g = golds[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
    tn += !p && !g;
  }
  Metrics m;
  m.precision = tp + fp > 0 ? 100.0 * tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? 100.0 * tp / (tp + fn) : 0.0;
  m.f1_positive = f1(tp, fp, fn);
  m.f1_negative = f1(tn, fn, fp);
  if (tp + fp + fn == 0) m.warnings.push_back("positive class absent from predictions and labels; its F1 counts as 0");
  if (tn + fn + fp == 0) m.warnings.push_back("negative class absent from predictions and labels; its F1 counts as 0");
  m.macro_f1 = 0.5 * (m.f1_positive + m.f1_negative);
  return m;
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  if (values.empty()) return a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double acc = 0;
  for (double v : values) acc += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(acc / static_cast<double>(values.size()));
  return a;
}

std::vector<int> threshold(std::span<const double> probs, double t) {
  std::vector<int> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= t ? 1 : 0;
  return out;
}

double best_threshold(std::span<const double> probs, std::span<const int> golds) {
  std::vector<double> s(probs.begin(), probs.end());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  double best_t = 0.5, best_f = -1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double t = 0.5 * (s[i] + s[i + 1]);
    const double f = compute_metrics(threshold(probs, t), golds).macro_f1;
    if (f > best_f) {
      best_f = f;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace oir::eval
