#pragma once

#include <span>
#include <string>
#include <vector>

namespace oir::eval {

// Percentages in [0, 100]. Precision and recall are for the positive (RI)
// class; macro_f1 averages the F1 of both classes.
struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double macro_f1 = 0.0;
  double f1_positive = 0.0;
  double f1_negative = 0.0;
  std::vector<std::string> warnings;
};

// Throws LengthMismatch on unequal lengths and EmptyInput on no items.
Metrics compute_metrics(std::span<const int> preds, std::span<const int> golds);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
};

Aggregate aggregate(std::span<const double> values);

// Decision threshold maximizing macro-F1 on the given probabilities, chosen
// among midpoints between sorted distinct scores (0.5 when all equal).
double best_threshold(std::span<const double> probs, std::span<const int> golds);

std::vector<int> threshold(std::span<const double> probs, double t = 0.5);

}  // namespace oir::eval
