#include "pd4ml/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pd4ml/errors.hpp"

namespace pd4ml {

double wrap_angle(double phi) {
  double d = std::remainder(phi, 2.0 * std::numbers::pi);
  if (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d;
}

namespace {

std::size_t leading(const Tensor& x, const char* what) {
  if (x.rank() == 0) throw DimensionError(std::string(what) + " needs a leading sample axis");
  return x.shape()[0];
}

// Two-pass population statistics over rows of a [n x d] view.
StandardizeStats fit_columns(const double* data, std::size_t n, std::size_t d, const std::vector<bool>* use) {
  StandardizeStats s{Tensor({d}), Tensor({d}, 1.0)};
  std::vector<std::size_t> count(d, 0);
  for (std::size_t r = 0; r < n; ++r) {
    if (use && !(*use)[r]) continue;
    for (std::size_t c = 0; c < d; ++c) {
      s.mean[c] += data[r * d + c];
      ++count[c];
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    if (count[c] == 0) continue;
    s.mean[c] /= static_cast<double>(count[c]);
  }
  std::vector<double> ss(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    if (use && !(*use)[r]) continue;
    for (std::size_t c = 0; c < d; ++c) {
      const double dev = data[r * d + c] - s.mean[c];
      ss[c] += dev * dev;
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    const double sd = count[c] ? std::sqrt(ss[c] / static_cast<double>(count[c])) : 0.0;
    s.stddev[c] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

}  // namespace

StandardizeStats standardize_fit(const Tensor& train) {
  const std::size_t n = leading(train, "standardize_fit");
  if (n == 0) throw ContractError("standardize_fit on an empty split");
  return fit_columns(train.data().data(), n, train.size() / n, nullptr);
}

Tensor standardize_apply(const Tensor& x, const StandardizeStats& stats) {
  const std::size_t n = leading(x, "standardize_apply");
  const std::size_t d = stats.mean.size();
  if (n * d != x.size()) {
    throw DimensionError("standardize_apply: " + std::to_string(d) + " fitted features, input " +
                         shape_string(x.shape()));
  }
  Tensor out = x;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = (x[r * d + c] - stats.mean[c]) / stats.stddev[c];
  return out;
}

std::vector<bool> toptag_valid_mask(const Tensor& constituents) {
  if (constituents.rank() != 2 || constituents.shape()[1] != 4) {
    throw DimensionError("constituents must be [N x 4], got " + shape_string(constituents.shape()));
  }
  std::vector<bool> valid(constituents.shape()[0]);
  for (std::size_t i = 0; i < valid.size(); ++i) valid[i] = constituents.at(i, 0) != 0.0;
  return valid;
}

Tensor toptag_features(const Tensor& constituents) {
  const std::vector<bool> valid = toptag_valid_mask(constituents);
  const std::size_t n = valid.size();
  double px = 0, py = 0, pz = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    px += constituents.at(i, 1);
    py += constituents.at(i, 2);
    pz += constituents.at(i, 3);
  }
  const double jet_pt = std::hypot(px, py);
  const double jet_eta = jet_pt > 0 ? std::asinh(pz / jet_pt) : 0.0;
  const double jet_phi = std::atan2(py, px);

  Tensor out({n, 4});
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    const double ce = constituents.at(i, 0);
    const double cpt = std::hypot(constituents.at(i, 1), constituents.at(i, 2));
    if (ce <= 0.0 || cpt == 0.0) {
      throw MalformedRecordError("constituent " + std::to_string(i) + " has E = " + std::to_string(ce) +
                                 ", pT = " + std::to_string(cpt));
    }
    out.at(i, 0) = std::log(cpt);
    out.at(i, 1) = std::log(ce);
    out.at(i, 2) = std::asinh(constituents.at(i, 3) / cpt) - jet_eta;
    out.at(i, 3) = wrap_angle(std::atan2(constituents.at(i, 2), constituents.at(i, 1)) - jet_phi);
  }
  return out;
}

Tensor toptag_features_batch(const Tensor& jets) {
  if (jets.rank() != 3 || jets.shape()[2] != 4) {
    throw DimensionError("jets must be [B x N x 4], got " + shape_string(jets.shape()));
  }
  const std::size_t b = jets.shape()[0];
  Tensor out(jets.shape());
  const std::size_t stride = jets.shape()[1] * 4;
  for (std::size_t s = 0; s < b; ++s) {
    Tensor one = toptag_features(jets.slice_rows(s, s + 1).reshaped({jets.shape()[1], 4}));
    std::copy(one.data().begin(), one.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(s * stride));
  }
  return out;
}

Tensor onehot_pdg(std::int64_t code, std::size_t depth) {
  if (code < 0 || code > static_cast<std::int64_t>(depth)) {
    throw MalformedRecordError("PDG index " + std::to_string(code) + " outside [0, " + std::to_string(depth) + "]");
  }
  Tensor out({depth});
  if (code > 0) out[static_cast<std::size_t>(code - 1)] = 1.0;
  return out;
}

Tensor smartbkg_features(const Tensor& particles, std::size_t depth) {
  if (particles.rank() != 3 || particles.shape()[2] < 1) {
    throw DimensionError("particles must be [B x N x F], got " + shape_string(particles.shape()));
  }
  const std::size_t b = particles.shape()[0], n = particles.shape()[1], f = particles.shape()[2];
  const std::size_t g = depth + f - 1;
  Tensor out({b, n, g});
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const double code = particles.at(s, i, 0);
      if (code != std::floor(code)) {
        throw MalformedRecordError("non-integral PDG index " + std::to_string(code));
      }
      const Tensor hot = onehot_pdg(static_cast<std::int64_t>(code), depth);
      double* row = &out.at(s, i, 0);
      std::copy(hot.data().begin(), hot.data().end(), row);
      for (std::size_t k = 1; k < f; ++k) row[depth + k - 1] = particles.at(s, i, k);
    }
  }
  return out;
}

namespace {

void check_stations(const Tensor& stations) {
  if (stations.rank() != 3 || stations.shape()[2] < 2) {
    throw DimensionError("stations must be [B x S x (T + 1)], got " + shape_string(stations.shape()));
  }
}

bool has_signal(const double* row, std::size_t bins) {
  for (std::size_t t = 0; t < bins; ++t) {
    if (row[t] < 0.0) throw MalformedRecordError("negative signal " + std::to_string(row[t]));
    if (row[t] > 0.0) return true;
  }
  return false;
}

}  // namespace

StandardizeStats airshower_time_fit(const Tensor& stations) {
  check_stations(stations);
  const std::size_t width = stations.shape()[2], bins = width - 1;
  const std::size_t rows = stations.shape()[0] * stations.shape()[1];
  std::vector<double> times(rows);
  std::vector<bool> use(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = stations.data().data() + r * width;
    use[r] = has_signal(row, bins);
    times[r] = row[bins];
  }
  return fit_columns(times.data(), rows, 1, &use);
}

Tensor airshower_features(const Tensor& stations, const StandardizeStats& time_stats) {
  check_stations(stations);
  if (time_stats.mean.size() != 1) throw DimensionError("airshower time stats must hold one feature");
  const std::size_t width = stations.shape()[2], bins = width - 1;
  const std::size_t rows = stations.shape()[0] * stations.shape()[1];
  Tensor out(stations.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = stations.data().data() + r * width;
    double* dst = out.data().data() + r * width;
    if (!has_signal(in, bins)) continue;
    for (std::size_t t = 0; t < bins; ++t) {
      if (in[t] < 0.0) throw MalformedRecordError("negative signal " + std::to_string(in[t]));
      dst[t] = in[t] > 0.0 ? std::log(in[t]) : 0.0;
    }
    dst[bins] = (in[bins] - time_stats.mean[0]) / time_stats.stddev[0];
  }
  return out;
}

}  // namespace pd4ml
