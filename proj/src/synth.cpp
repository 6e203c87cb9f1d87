#include "pd4ml/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "pd4ml/errors.hpp"
#include "pd4ml/md5.hpp"
#include "pd4ml/random.hpp"

namespace pd4ml {

namespace {

using namespace synth;

constexpr const char* kKindNames[] = {"toptag-like", "decay-like", "grid20-like", "grid24-like", "shower-like"};

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Rng split_stream(std::uint64_t seed, SynthKind kind, Split split) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(kind), static_cast<std::uint32_t>(split)};
  return Rng(seq);
}

// floor(n/2) ones in random order.
std::vector<int> balanced_labels(std::size_t n, Rng& rng) {
  std::vector<int> y(n, 0);
  std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n / 2), 1);
  std::shuffle(y.begin(), y.end(), rng);
  return y;
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Uniform background; class 1 adds a square blob, class 0 adds the same
// intensity on as many scattered pixels whose positions follow the blob's
// coverage distribution, so single-pixel marginals agree.
SplitData make_grid(std::size_t n, std::size_t rows, std::size_t cols, Rng& rng) {
  const std::vector<int> labels = balanced_labels(n, rng);
  SplitData d{Tensor({n, rows, cols}), Tensor({n}), std::nullopt};
  std::uniform_real_distribution<double> noise(0.0, 1.0);
  const std::size_t span_r = rows - kBlobSide + 1, span_c = cols - kBlobSide + 1;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) d.x.at(s, r, c) = noise(rng);
    std::set<std::size_t> lit;
    if (labels[s]) {
      const std::size_t tr = uniform_index(rng, span_r), tc = uniform_index(rng, span_c);
      for (std::size_t i = 0; i < kBlobSide; ++i)
        for (std::size_t j = 0; j < kBlobSide; ++j) lit.insert((tr + i) * cols + tc + j);
    } else {
      while (lit.size() < kBlobSide * kBlobSide) {
        const std::size_t tr = uniform_index(rng, span_r), tc = uniform_index(rng, span_c);
        const std::size_t k = uniform_index(rng, kBlobSide * kBlobSide);
        lit.insert((tr + k / kBlobSide) * cols + tc + k % kBlobSide);
      }
    }
    for (std::size_t p : lit) d.x.at(s, p / cols, p % cols) += kBlobAmplitude;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) d.x.at(s, r, c) = f32(d.x.at(s, r, c));
    d.y[s] = labels[s];
  }
  return d;
}

// Massless constituents around a random jet axis: one angular cluster for
// class 0, two separated prongs for class 1.
SplitData make_toptag(std::size_t n, Rng& rng) {
  constexpr std::size_t kSlots = 200;
  const std::vector<int> labels = balanced_labels(n, rng);
  SplitData d{Tensor({n, kSlots, 4}), Tensor({n}), std::nullopt};
  std::uniform_int_distribution<std::size_t> count(20, 80);
  std::uniform_real_distribution<double> jet_pt(400.0, 600.0), jet_eta(-2.0, 2.0),
      jet_phi(-std::numbers::pi, std::numbers::pi), sep(0.3, 0.6), share(0.3, 0.7), unit(0.0, 1.0);
  std::normal_distribution<double> wide(0.0, 0.07), narrow(0.0, 0.05);
  std::exponential_distribution<double> frac(1.0);

  struct Constituent {
    double pt, eta, phi;
  };
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t m = count(rng);
    const double pt = jet_pt(rng), eta0 = jet_eta(rng), phi0 = jet_phi(rng);
    double ax = 0, ay = 0, z = 1.0, dr = 0.0;
    if (labels[s]) {
      const double angle = unit(rng) * 2.0 * std::numbers::pi;
      dr = sep(rng);
      z = share(rng);
      ax = std::cos(angle);
      ay = std::sin(angle);
    }
    std::vector<double> w(m);
    for (auto& v : w) v = 0.05 + frac(rng);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<Constituent> parts(m);
    for (std::size_t i = 0; i < m; ++i) {
      double deta, dphi;
      if (labels[s]) {
        const bool first = unit(rng) < z;
        const double off = first ? -(1.0 - z) * dr : z * dr;
        deta = off * ax + narrow(rng);
        dphi = off * ay + narrow(rng);
      } else {
        deta = wide(rng);
        dphi = wide(rng);
      }
      parts[i] = {pt * w[i] / total, eta0 + deta, phi0 + dphi};
    }
    std::sort(parts.begin(), parts.end(), [](const auto& a, const auto& b) { return a.pt > b.pt; });
    for (std::size_t i = 0; i < m; ++i) {
      const auto& p = parts[i];
      d.x.at(s, i, 0) = f32(p.pt * std::cosh(p.eta));
      d.x.at(s, i, 1) = f32(p.pt * std::cos(p.phi));
      d.x.at(s, i, 2) = f32(p.pt * std::sin(p.phi));
      d.x.at(s, i, 3) = f32(p.pt * std::sinh(p.eta));
    }
    d.y[s] = labels[s];
  }
  return d;
}

// Decay chains rooted in code 1. Both classes carry one parent (70) with
// daughters 71 and either 72 (class 1) or 73 (class 0); the other of 72/73
// hangs off an unrelated particle, so code counts match across classes.
SplitData make_decay(std::size_t n, Rng& rng) {
  constexpr std::size_t kSlots = 100, kFeatures = 9;
  const std::vector<int> labels = balanced_labels(n, rng);
  SplitData d{Tensor({n, kSlots, kFeatures}), Tensor({n}), Tensor({n, kSlots}, -1.0)};
  std::uniform_int_distribution<int> b_daughters(3, 5), i_daughters(2, 3), intermediate(10, 29), final_state(40, 59);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> mom(0.0, 1.0), disp(0.0, 0.01);

  struct Particle {
    int code;
    int mother;
  };
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<Particle> ps = {{1, -1}, {2, 0}, {3, 0}};
    std::vector<int> decaying = {1, 2};
    for (int b : {1, 2}) {
      const int k = b_daughters(rng);
      for (int j = 0; j < k; ++j) {
        const bool inter = unit(rng) < 0.4;
        ps.push_back({inter ? intermediate(rng) : final_state(rng), b});
        if (inter) decaying.push_back(static_cast<int>(ps.size()) - 1);
      }
    }
    for (std::size_t q = 2; q < decaying.size(); ++q) {
      const int k = i_daughters(rng);
      for (int j = 0; j < k; ++j) ps.push_back({final_state(rng), decaying[q]});
    }
    const int host = decaying[uniform_index(rng, decaying.size())];
    const int other = decaying[uniform_index(rng, decaying.size())];
    ps.push_back({kMotifParent, host});
    const int parent = static_cast<int>(ps.size()) - 1;
    ps.push_back({kMotifShared, parent});
    ps.push_back({labels[s] ? kMotifSignal : kMotifDecoy, parent});
    ps.push_back({labels[s] ? kMotifDecoy : kMotifSignal, other});

    // Shuffle everything but the root, then remap mothers.
    std::vector<std::size_t> order(ps.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin() + 1, order.end(), rng);
    std::vector<std::size_t> slot(ps.size());
    for (std::size_t i = 0; i < order.size(); ++i) slot[order[i]] = i;

    std::vector<std::array<double, 4>> vertex(ps.size(), {0, 0, 0, 0});
    for (std::size_t i = 1; i < ps.size(); ++i) {
      const auto& mv = vertex[static_cast<std::size_t>(ps[i].mother)];
      const double dx = disp(rng), dy = disp(rng), dz = disp(rng);
      vertex[i] = {mv[0] + dx, mv[1] + dy, mv[2] + dz, mv[3] + std::sqrt(dx * dx + dy * dy + dz * dz)};
    }
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const std::size_t at = slot[i];
      const double px = mom(rng), py = mom(rng), pz = mom(rng);
      const double e = std::sqrt(px * px + py * py + pz * pz + 0.14 * 0.14);
      const double row[kFeatures] = {static_cast<double>(ps[i].code), e, px, py, pz,
                                     vertex[i][0], vertex[i][1], vertex[i][2], vertex[i][3]};
      for (std::size_t k = 0; k < kFeatures; ++k) d.x.at(s, at, k) = f32(row[k]);
      d.mother->at(s, at) = ps[i].mother < 0 ? -1.0 : static_cast<double>(slot[static_cast<std::size_t>(ps[i].mother)]);
    }
    d.y[s] = labels[s];
  }
  return d;
}

// 9x9 stations. The target depth in [0, 1] stretches every trace pulse and
// bends the arrival-time front.
SplitData make_shower(std::size_t n, Rng& rng) {
  constexpr std::size_t kStations = kShowerSide * kShowerSide, kWidth = kShowerBins + 1, kStart = 2;
  SplitData d{Tensor({n, kStations, kWidth}), Tensor({n}), std::nullopt};
  std::uniform_real_distribution<double> depth(0.0, 1.0), core(2.5, 5.5), log_amp(std::log(20.0), std::log(200.0)),
      tilt(-0.3, 0.3);
  std::normal_distribution<double> jitter(0.0, 0.05), noise(0.0, 0.1);
  for (std::size_t s = 0; s < n; ++s) {
    const double dep = f32(depth(rng));
    const double cx = core(rng), cy = core(rng), amp = std::exp(log_amp(rng));
    const double ux = tilt(rng), uy = tilt(rng);
    for (std::size_t st = 0; st < kStations; ++st) {
      const double x = static_cast<double>(st % kShowerSide), y = static_cast<double>(st / kShowerSide);
      const double dist = std::hypot(x - cx, y - cy);
      const double total = amp * std::exp(-dist / 1.2);
      if (total < 1.0) continue;
      const double tau = 1.5 + 5.0 * dep + 0.3 * dist;
      bool any = false;
      for (std::size_t t = kStart; t < kShowerBins; ++t) {
        const double u = static_cast<double>(t - kStart + 1) / tau;
        double v = total * u * std::exp(1.0 - u) * std::exp(noise(rng));
        v = v < 0.05 ? 0.0 : f32(v);
        d.x.at(s, st, t) = v;
        any = any || v > 0.0;
      }
      if (!any) continue;
      const double arrival = ux * (x - cx) + uy * (y - cy) + (0.15 + 0.35 * dep) * dist * dist + jitter(rng);
      d.x.at(s, st, kShowerBins) = f32(arrival);
    }
    d.y[s] = dep;
  }
  return d;
}

SplitData generate_split(SynthKind kind, std::size_t n, Rng& rng) {
  switch (kind) {
    case SynthKind::toptag: return make_toptag(n, rng);
    case SynthKind::decay: return make_decay(n, rng);
    case SynthKind::grid20: return make_grid(n, 20, 20, rng);
    case SynthKind::grid24: return make_grid(n, 24, 24, rng);
    case SynthKind::shower: return make_shower(n, rng);
  }
  throw ContractError("unknown synthetic kind");
}

}  // namespace

SynthKind parse_synth_kind(const std::string& name) {
  for (int k = 0; k < 5; ++k)
    if (name == kKindNames[k]) return static_cast<SynthKind>(k);
  std::string known;
  for (const char* k : kKindNames) known += (known.empty() ? "" : ", ") + std::string(k);
  throw LookupError("unknown synthetic kind '" + name + "'; known: " + known);
}

const char* synth_kind_name(SynthKind k) { return kKindNames[static_cast<int>(k)]; }

const char* synth_dataset(SynthKind k) {
  switch (k) {
    case SynthKind::toptag: return "TopTagging";
    case SynthKind::decay: return "SmartBkg";
    case SynthKind::grid20: return "Spinodal";
    case SynthKind::grid24: return "EoS";
    case SynthKind::shower: return "AirShowers";
  }
  return "";
}

const SplitData& SynthData::of(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::test: return test;
    case Split::validation: return validation;
  }
  return train;
}

SynthData synth_generate(SynthKind kind, const SplitSizes& n, std::uint64_t seed) {
  for (Split s : kAllSplits) {
    if (n.of(s) < kMinSynthSplit) {
      throw ContractError(std::string("synthetic ") + split_name(s) + " split needs at least " +
                          std::to_string(kMinSynthSplit) + " samples, got " + std::to_string(n.of(s)));
    }
  }
  SynthData out;
  SplitData* dst[] = {&out.train, &out.test, &out.validation};
  for (Split s : kAllSplits) {
    Rng rng = split_stream(seed, kind, s);
    *dst[static_cast<int>(s)] = generate_split(kind, n.of(s), rng);
  }
  return out;
}

TensorMap split_tensors(const SplitData& d) {
  TensorMap m;
  m["X"] = {DType::f32, d.x};
  m["y"] = {DType::f32, d.y};
  if (d.mother) m["mother"] = {DType::i32, *d.mother};
  return m;
}

std::string write_synthetic(SynthKind kind, const SplitSizes& n, std::uint64_t seed,
                            const std::filesystem::path& root) {
  const SynthData data = synth_generate(kind, n, seed);
  const std::string name = synth_dataset(kind);
  const DatasetDescriptor& desc = registry_lookup(name);
  std::map<std::string, std::string> manifest;
  for (Split s : kAllSplits) {
    const auto bytes = encode(split_tensors(data.of(s)));
    write_bytes_atomic(split_file(root, name, s), bytes);
    manifest[std::string("md5.") + split_name(s)] = to_hex(md5(bytes));
  }
  std::string shape;
  for (std::size_t i = 0; i < desc.sample_shape.size(); ++i)
    shape += (i ? "x" : "") + std::to_string(desc.sample_shape[i]);
  manifest["shape"] = shape;
  manifest["task"] = task_name(desc.task);
  manifest["splits"] = std::to_string(n.train) + "/" + std::to_string(n.test) + "/" + std::to_string(n.validation);
  write_manifest(dataset_dir(root, name) / "manifest.txt", manifest);
  return name;
}

}  // namespace pd4ml
