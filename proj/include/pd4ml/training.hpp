#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pd4ml/datasets.hpp"
#include "pd4ml/models.hpp"

namespace pd4ml {

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t max_epochs = 300;
  std::size_t patience = 15;  // early stopping
  std::size_t plateau_patience = 8;
  double plateau_factor = 0.1;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

// FCN: batch 256, 300 epochs, patience 15. GraphNet: batch 32, 400 epochs, patience 50.
TrainConfig preset(ModelKind kind);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

struct AdamState {
  std::vector<Tensor> m, v;
  std::size_t step = 0;
};

// One bias-corrected Adam update of every parameter from its grad.
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr);

// "Bad" epochs are those without a strict decrease of the monitored loss.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(std::size_t patience = 8, double factor = 0.1) : patience_(patience), factor_(factor) {}
  // Returns the learning-rate multiplier for this epoch: factor when the bad
  // count exceeds patience (the count then restarts), else 1.
  double observe(double loss);

 private:
  std::size_t patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_ = 0;
};

class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  // True when training should stop after this epoch.
  bool observe(double loss);
  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_ = 0;
  bool improved_ = false;
};

// Mean binary cross entropy on clamped probabilities; mean squared error.
Var bce_loss(const Var& probs, const Tensor& labels);
Var mse_loss(const Var& preds, const Tensor& targets);

// Model-ready split: node features, targets and normalized adjacencies
// (none, one shared, or one per sample).
struct Dataset {
  Tensor features;
  Tensor y;
  std::vector<NormalizedAdjacency> adjacency;

  std::size_t size() const { return y.size(); }
};

Dataset make_dataset(const PreparedSplit& split);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double final_lr = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Shuffled mini-batch Adam with plateau decay and early stopping on the
// validation loss; the best-epoch weights are restored at the end. Every
// random draw comes from rng. A trailing batch of one sample is skipped.
FitResult fit(Model& model, const Dataset& train, const Dataset& validation, const TrainConfig& config, Rng& rng,
              const EpochCallback& on_epoch = {});

// Inference-mode outputs [B], in chunks.
Tensor predict_dataset(Model& model, const Dataset& data, std::size_t chunk = 256);
double dataset_loss(Model& model, const Dataset& data);
// classification: loss, accuracy, auc; regression: loss, mse, resolution.
std::map<std::string, double> evaluate(Model& model, const Dataset& data);

}  // namespace pd4ml
