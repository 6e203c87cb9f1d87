#include "pd4ml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "pd4ml/errors.hpp"

namespace pd4ml {

namespace {

void same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a) + " predictions vs " + std::to_string(b) +
                         " targets");
  }
}

void require_labels(std::span<const double> labels, const char* what) {
  for (double y : labels)
    if (y != 0.0 && y != 1.0) throw DomainError(std::string(what) + ": label " + std::to_string(y) + " not in {0, 1}");
}

}  // namespace

double accuracy(std::span<const double> scores, std::span<const double> labels, double threshold) {
  same_length(scores.size(), labels.size(), "accuracy");
  require_labels(labels, "accuracy");
  if (scores.empty()) throw ContractError("accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) hit += (scores[i] > threshold) == (labels[i] == 1.0);
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  same_length(scores.size(), labels.size(), "auc");
  require_labels(labels, "auc");
  for (double s : scores)
    if (std::isnan(s)) throw NumericError("auc: NaN score");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney U via tie-averaged ranks, kept in integers.
  std::int64_t pos = 0, twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const auto twice_rank = static_cast<std::int64_t>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1.0) {
        ++pos;
        twice_rank_sum += twice_rank;
      }
    }
    i = j;
  }
  const std::int64_t neg = static_cast<std::int64_t>(n) - pos;
  if (pos == 0 || neg == 0) throw ContractError("auc needs both classes present");
  const std::int64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * pos * neg);
}

double resolution(std::span<const double> preds, std::span<const double> targets) {
  same_length(preds.size(), targets.size(), "resolution");
  if (preds.size() < 2) throw ContractError("resolution needs at least two samples");
  std::vector<double> d(preds.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = preds[i] - targets[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(d.size()));
}

double mse(std::span<const double> preds, std::span<const double> targets) {
  same_length(preds.size(), targets.size(), "mse");
  if (preds.empty()) throw ContractError("mse of an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += (preds[i] - targets[i]) * (preds[i] - targets[i]);
  return s / static_cast<double>(preds.size());
}

double bce(std::span<const double> probs, std::span<const double> labels) {
  same_length(probs.size(), labels.size(), "bce");
  if (probs.empty()) throw ContractError("bce of an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    s -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return s / static_cast<double>(probs.size());
}

std::map<std::string, Summary> aggregate_runs(const std::vector<std::map<std::string, double>>& runs) {
  if (runs.empty()) throw ContractError("aggregate_runs needs at least one run");
  std::map<std::string, Summary> out;
  for (const auto& [name, unused] : runs.front()) {
    std::vector<double> v;
    for (const auto& r : runs) {
      auto it = r.find(name);
      if (it == r.end()) throw ContractError("metric '" + name + "' missing from a run");
      v.push_back(it->second);
    }
    // Running mean: identical runs give exactly that value and zero spread.
    double mean = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) mean += (v[k] - mean) / static_cast<double>(k + 1);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    out[name] = {mean, std::sqrt(ss / static_cast<double>(v.size()))};
  }
  for (const auto& r : runs)
    if (r.size() != out.size()) throw ContractError("runs report different metric sets");
  return out;
}

}  // namespace pd4ml
