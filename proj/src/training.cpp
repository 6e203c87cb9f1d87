#include "pd4ml/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pd4ml/errors.hpp"
#include "pd4ml/metrics.hpp"

namespace pd4ml {

TrainConfig preset(ModelKind kind) {
  TrainConfig c;
  if (kind == ModelKind::graphnet) {
    c.batch_size = 32;
    c.max_epochs = 400;
    c.patience = 50;
  }
  return c;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) throw ContractError("Adam state does not match the parameter list");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEpsilon);
    }
  }
}

double PlateauScheduler::observe(double loss) {
  if (loss < best_) {
    best_ = loss;
    bad_ = 0;
    return 1.0;
  }
  if (++bad_ > patience_) {
    bad_ = 0;
    return factor_;
  }
  return 1.0;
}

bool EarlyStopping::observe(double loss) {
  improved_ = loss < best_;
  if (improved_) {
    best_ = loss;
    bad_ = 0;
    return false;
  }
  return ++bad_ > patience_;
}

Var bce_loss(const Var& probs, const Tensor& labels) {
  const Tensor& p = probs.value();
  if (p.size() != labels.size()) {
    throw DimensionError("bce_loss: " + shape_string(p.shape()) + " vs labels " + shape_string(labels.shape()));
  }
  const double loss = bce(p.data(), labels.data());
  const std::size_t ip = probs.id();
  return probs.tape().record(Tensor::scalar(loss), {probs}, [ip, labels](Tape& t, std::size_t self) {
    const double g = t.upstream(self).item() / static_cast<double>(labels.size());
    const Tensor& pv = t.value(ip);
    Tensor d(pv.shape());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double x = pv[i];
      if (x < kProbabilityClamp || x > 1.0 - kProbabilityClamp) continue;  // clamped: flat
      d[i] = g * (-labels[i] / x + (1.0 - labels[i]) / (1.0 - x));
    }
    t.accumulate(ip, d);
  });
}

Var mse_loss(const Var& preds, const Tensor& targets) {
  const Tensor& p = preds.value();
  if (p.size() != targets.size()) {
    throw DimensionError("mse_loss: " + shape_string(p.shape()) + " vs targets " + shape_string(targets.shape()));
  }
  const double loss = mse(p.data(), targets.data());
  const std::size_t ip = preds.id();
  return preds.tape().record(Tensor::scalar(loss), {preds}, [ip, targets](Tape& t, std::size_t self) {
    const double g = 2.0 * t.upstream(self).item() / static_cast<double>(targets.size());
    const Tensor& pv = t.value(ip);
    Tensor d(pv.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = g * (pv[i] - targets[i]);
    t.accumulate(ip, d);
  });
}

Dataset make_dataset(const PreparedSplit& split) {
  Dataset d{split.features, split.y, {}};
  d.adjacency.reserve(split.graphs.size());
  for (const auto& g : split.graphs) d.adjacency.push_back(normalize(g));
  return d;
}

namespace {

std::vector<const NormalizedAdjacency*> adjacency_for(const Dataset& d, std::span<const std::size_t> rows) {
  std::vector<const NormalizedAdjacency*> out;
  if (d.adjacency.size() == 1) {
    out.push_back(&d.adjacency[0]);
  } else if (!d.adjacency.empty()) {
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(&d.adjacency[r]);
  }
  return out;
}

Tensor gather_targets(const Tensor& y, std::span<const std::size_t> rows) {
  Tensor out({rows.size()});
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = y[rows[i]];
  return out;
}

void check_dataset(const Dataset& d, const char* what) {
  if (d.features.rank() == 0 || d.features.shape()[0] != d.size()) {
    throw DimensionError(std::string(what) + ": features " + shape_string(d.features.shape()) + " for " +
                         std::to_string(d.size()) + " targets");
  }
  if (d.adjacency.size() > 1 && d.adjacency.size() != d.size()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(d.adjacency.size()) + " adjacencies for " +
                         std::to_string(d.size()) + " samples");
  }
}

struct Snapshot {
  std::vector<Tensor> values;
  static Snapshot take(Model& m) {
    Snapshot s;
    for (const Parameter* p : m.parameters()) s.values.push_back(p->value);
    return s;
  }
  void restore(Model& m) const {
    auto params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
  }
};

}  // namespace

Tensor predict_dataset(Model& model, const Dataset& data, std::size_t chunk) {
  check_dataset(data, "predict");
  const std::size_t n = data.size();
  Tensor out({n});
  std::vector<std::size_t> rows;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    rows.resize(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    const Tensor pred = model.predict(data.features.slice_rows(begin, end), adjacency_for(data, rows));
    std::copy(pred.data().begin(), pred.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(begin));
  }
  return out;
}

double dataset_loss(Model& model, const Dataset& data) {
  const Tensor pred = predict_dataset(model, data);
  return model.spec().task == Task::classification ? bce(pred.data(), data.y.data())
                                                   : mse(pred.data(), data.y.data());
}

std::map<std::string, double> evaluate(Model& model, const Dataset& data) {
  const Tensor pred = predict_dataset(model, data);
  if (model.spec().task == Task::classification) {
    return {{"loss", bce(pred.data(), data.y.data())},
            {"accuracy", accuracy(pred.data(), data.y.data())},
            {"auc", auc(pred.data(), data.y.data())}};
  }
  const double m = mse(pred.data(), data.y.data());
  return {{"loss", m}, {"mse", m}, {"resolution", resolution(pred.data(), data.y.data())}};
}

FitResult fit(Model& model, const Dataset& train, const Dataset& validation, const TrainConfig& config, Rng& rng,
              const EpochCallback& on_epoch) {
  check_dataset(train, "train");
  check_dataset(validation, "validation");
  if (config.batch_size == 0) throw ContractError("batch size must be positive");
  if (train.size() < 2) throw ContractError("training needs at least two samples");

  const bool classify = model.spec().task == Task::classification;
  std::vector<Parameter*> params = model.trainable();
  AdamState adam;
  PlateauScheduler plateau(config.plateau_patience, config.plateau_factor);
  EarlyStopping stopper(config.patience);
  double lr = config.learning_rate;

  FitResult result;
  Snapshot best = Snapshot::take(model);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0, batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      if (end - begin < 2) continue;
      std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const Tensor xb = train.features.gather_rows(rows);
      const Tensor yb = gather_targets(train.y, rows);
      const auto adj = adjacency_for(train, rows);

      for (Parameter* p : params) p->zero_grad();
      Tape tape;
      Var out = model.forward(tape.constant(xb), adj, Mode::train, rng);
      Var loss = classify ? bce_loss(out, yb) : mse_loss(out, yb);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "non-finite training loss at epoch " << epoch << ", batch " << batch_index << " (lr " << lr << ")";
        throw NumericError(os.str());
      }
      tape.backward(loss);
      adam_step(params, adam, lr);
      loss_sum += value * static_cast<double>(rows.size());
      seen += rows.size();
    }

    EpochRecord rec{epoch, seen ? loss_sum / static_cast<double>(seen) : 0.0, dataset_loss(model, validation), lr};
    if (!std::isfinite(rec.val_loss)) {
      std::ostringstream os;
      os << "non-finite validation loss at epoch " << epoch << " (lr " << lr << ")";
      throw NumericError(os.str());
    }
    result.history.push_back(rec);
    result.epochs_run = epoch;
    if (on_epoch) on_epoch(rec);

    const bool stop = stopper.observe(rec.val_loss);
    if (stopper.improved()) {
      best = Snapshot::take(model);
      result.best_epoch = epoch;
      result.best_val_loss = rec.val_loss;
    }
    if (stop) break;
    lr *= plateau.observe(rec.val_loss);
  }
  best.restore(model);
  result.final_lr = lr;
  return result;
}

}  // namespace pd4ml
