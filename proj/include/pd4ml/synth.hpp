#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pd4ml/datasets.hpp"

namespace pd4ml {

// Desk-scale stand-ins with the raw layout of the registered datasets.
enum class SynthKind { toptag, decay, grid20, grid24, shower };

SynthKind parse_synth_kind(const std::string& name);  // "toptag-like", "grid20-like", ...
const char* synth_kind_name(SynthKind k);
// Registered dataset whose layout the kind mirrors (TopTagging, SmartBkg, ...).
const char* synth_dataset(SynthKind k);

struct SynthData {
  SplitData train, test, validation;
  const SplitData& of(Split s) const;
};

inline constexpr std::size_t kMinSynthSplit = 10;

// Every split holds exactly floor(n/2) positives for classification kinds.
// All values are exactly representable as f32. Throws ContractError when a
// split is smaller than kMinSynthSplit.
SynthData synth_generate(SynthKind kind, const SplitSizes& n, std::uint64_t seed);

// Writes <root>/<dataset>/<split>.pd4m plus a manifest carrying the digests,
// shape, task and split sizes. Returns the dataset name.
std::string write_synthetic(SynthKind kind, const SplitSizes& n, std::uint64_t seed,
                            const std::filesystem::path& root);

// Tensor map for one split as stored on disk.
TensorMap split_tensors(const SplitData& d);

// Planted-signal parameters, exposed for the oracle tests.
namespace synth {
inline constexpr double kBlobAmplitude = 1.0;
inline constexpr std::size_t kBlobSide = 3;
inline constexpr int kMotifParent = 70;
inline constexpr int kMotifShared = 71;
inline constexpr int kMotifSignal = 72;
inline constexpr int kMotifDecoy = 73;
inline constexpr std::size_t kShowerSide = 9;
inline constexpr std::size_t kShowerBins = 80;
}  // namespace synth

}  // namespace pd4ml
