#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace pd4ml {

// Probabilities are clamped to [eps, 1 - eps] inside the cross entropy.
inline constexpr double kProbabilityClamp = 1e-7;

// Fraction of samples with (score > threshold) == label.
double accuracy(std::span<const double> scores, std::span<const double> labels, double threshold = 0.5);

// Probability that a random positive outscores a random negative, ties
// counting one half. Needs both classes.
double auc(std::span<const double> scores, std::span<const double> labels);

// Population standard deviation of pred - target; needs two or more samples.
double resolution(std::span<const double> preds, std::span<const double> targets);

double mse(std::span<const double> preds, std::span<const double> targets);
double bce(std::span<const double> probs, std::span<const double> labels);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population
};

// Mean and spread per metric name over several runs; every run must report
// the same metric names.
std::map<std::string, Summary> aggregate_runs(const std::vector<std::map<std::string, double>>& runs);

}  // namespace pd4ml
