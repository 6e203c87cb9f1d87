#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pd4ml/tensor.hpp"

namespace pd4ml {

inline constexpr std::size_t kPdgDepth = 506;

// Angle wrapped into (-pi, pi].
double wrap_angle(double phi);

// Per-feature mean and standard deviation, fitted on a training split.
// A constant feature gets std 1 so it maps to 0.
struct StandardizeStats {
  Tensor mean;    // [D]
  Tensor stddev;  // [D]
};

// Features are everything behind the leading (sample) axis, flattened.
StandardizeStats standardize_fit(const Tensor& train);
Tensor standardize_apply(const Tensor& x, const StandardizeStats& stats);

// Constituents [N x 4] as (E, px, py, pz); all-zero rows are padding.
// Returns [N x 4] rows (ln pT, ln E, eta - eta_jet, wrapped dphi) relative to
// the summed jet; padding rows stay zero.
Tensor toptag_features(const Tensor& constituents);
// Batched form over [B x N x 4].
Tensor toptag_features_batch(const Tensor& jets);
// Non-zero energy marks a real constituent.
std::vector<bool> toptag_valid_mask(const Tensor& constituents);

// Unit vector with the 1 at code - 1; code 0 (padding) gives zeros.
Tensor onehot_pdg(std::int64_t code, std::size_t depth = kPdgDepth);
// Particles [B x N x F] with the PDG code in column 0 -> [B x N x (depth + F - 1)]:
// one-hot code followed by the remaining features unchanged.
Tensor smartbkg_features(const Tensor& particles, std::size_t depth = kPdgDepth);

// Stations [B x S x (T + 1)]: T trace bins then the arrival time. Stats for the
// time column come from stations with any signal in the training split.
StandardizeStats airshower_time_fit(const Tensor& stations);
// Signal bins s > 0 become ln s, empty bins stay 0, times are standardized.
// Stations without signal stay all-zero.
Tensor airshower_features(const Tensor& stations, const StandardizeStats& time_stats);

inline Tensor spinodal_features(const Tensor& x) { return x; }

}  // namespace pd4ml
