#include "pd4ml/datasets.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pd4ml/errors.hpp"
#include "pd4ml/fetch.hpp"
#include "pd4ml/md5.hpp"

namespace pd4ml {

namespace fs = std::filesystem;

const char* task_name(Task t) { return t == Task::classification ? "classification" : "regression"; }

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::validation: return "validation";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  for (Split x : kAllSplits)
    if (s == split_name(x)) return x;
  if (s == "val") return Split::validation;
  throw LookupError("unknown split '" + s + "' (expected train, test or validation)");
}

std::size_t SplitSizes::of(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::test: return test;
    case Split::validation: return validation;
  }
  return 0;
}

const std::vector<DatasetDescriptor>& registry() {
  static const std::vector<DatasetDescriptor> entries = {
      {"TopTagging", DatasetKind::toptag, Task::classification, {1'200'000, 400'000, 400'000}, {200, 4},
       "200 particles, 4 features/particle: constituent four-vectors (E, px, py, pz), zero-padded",
       "k-nearest neighbours (k = 7) in the (delta eta, delta phi) plane of valid constituents", "", {},
       "Top quark tagging reference dataset, Zenodo, doi:10.5281/zenodo.2603256"},
      {"SmartBkg", DatasetKind::smartbkg, Task::classification, {157'000, 39'000, 84'000}, {100, 9},
       "100 particles, 9 features/particle: PDG index (1-506), E, px, py, pz, x, y, z, t; "
       "mother indices stored separately (-1 = none)",
       "mother-daughter edges of the generator-level decay tree", "", {},
       "Simulated e+e- -> Y(4S) -> B0 B0bar decay chains (EvtGen), Belle II background-filter study"},
      {"Spinodal", DatasetKind::spinodal, Task::classification, {16'300, 4'000, 8'700}, {20, 20},
       "20x20 histogram of pion spectra (pT, phi)", "eight adjacent pixels", "", {},
       "Spinodal or not dataset, Zenodo, doi:10.5281/zenodo.5710737"},
      {"EoS", DatasetKind::eos, Task::classification, {121'000, 25'000, 54'000}, {24, 24},
       "24x24 histogram of pion spectra (pT, phi)", "eight adjacent pixels", "", {},
       "QCD equation-of-state classification, iEBE-VISHNU hybrid simulations (crossover vs first-order)"},
      {"AirShowers", DatasetKind::airshower, Task::regression, {56'000, 30'000, 14'000}, {81, 81},
       "81 stations, 80 signal bins + timing; target: shower-maximum depth",
       "eight adjacent stations on the 9x9 detector grid", "", {},
       "Air shower dataset for Xmax reconstruction, Zenodo, doi:10.5281/zenodo.5748080"},
  };
  return entries;
}

const DatasetDescriptor& registry_lookup(const std::string& name) {
  for (const auto& d : registry())
    if (d.name == name) return d;
  std::string known;
  for (const auto& d : registry()) known += (known.empty() ? "" : ", ") + d.name;
  throw LookupError("unknown dataset '" + name + "'; registered: " + known);
}

std::string format_count(std::size_t n) {
  auto scaled = [](std::size_t v, std::size_t unit, const char* suffix) {
    const std::size_t tenths = (v * 10 + unit / 2) / unit;
    std::string s = std::to_string(tenths / 10);
    if (tenths % 10) s += "." + std::to_string(tenths % 10);
    return s + suffix;
  };
  if (n >= 1'000'000) return scaled(n, 1'000'000, "M");
  if (n >= 1'000) return scaled(n, 1'000, "k");
  return std::to_string(n);
}

std::string split_summary(const SplitSizes& s) {
  return format_count(s.train) + "/" + format_count(s.test) + "/" + format_count(s.validation);
}

namespace {

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

std::string print_description(const std::string& name) {
  const DatasetDescriptor& d = registry_lookup(name);
  std::ostringstream os;
  os << d.name << '\n'
     << "  task:       " << task_name(d.task) << '\n'
     << "  examples:   " << split_summary(d.splits) << " (train/test/validation)\n"
     << "  shape:      " << shape_text(d.sample_shape) << " per example\n"
     << "  features:   " << d.features << '\n'
     << "  graph:      " << d.graph_recipe << '\n'
     << "  citation:   " << d.citation << '\n';
  return os.str();
}

fs::path dataset_dir(const fs::path& root, const std::string& name) { return root / name; }

fs::path split_file(const fs::path& root, const std::string& name, Split s) {
  return dataset_dir(root, name) / (std::string(split_name(s)) + ".pd4m");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::size_t> parse_counts(const std::string& text, char sep, const std::string& key) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) {
    part = trim(part);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw FormatError("manifest key '" + key + "' has a bad value '" + text + "'");
    }
    out.push_back(std::stoull(part));
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> read_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot read manifest " + file.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError(file.string() + ":" + std::to_string(lineno) + ": expected `key = value`");
    }
    out[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return out;
}

void write_manifest(const fs::path& file, const std::map<std::string, std::string>& entries) {
  std::string text;
  for (const auto& [k, v] : entries) text += k + " = " + v + "\n";
  write_bytes_atomic(file, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

DatasetDescriptor resolve_descriptor(const std::string& name, const fs::path& root) {
  DatasetDescriptor d = registry_lookup(name);
  const fs::path manifest = dataset_dir(root, name) / "manifest.txt";
  if (!fs::exists(manifest)) return d;
  for (const auto& [key, value] : read_manifest(manifest)) {
    if (key == "url") {
      d.url = value;
    } else if (key.rfind("md5.", 0) == 0) {
      const std::string split = key.substr(4);
      parse_split(split);
      d.md5[split] = value;
    } else if (key == "shape") {
      const auto dims = parse_counts(value, 'x', key);
      d.sample_shape = Shape(dims.begin(), dims.end());
    } else if (key == "task") {
      if (value == "classification") d.task = Task::classification;
      else if (value == "regression") d.task = Task::regression;
      else throw FormatError("manifest task must be classification or regression, got '" + value + "'");
    } else if (key == "splits") {
      const auto n = parse_counts(value, '/', key);
      if (n.size() != 3) throw FormatError("manifest splits must be train/test/validation");
      d.splits = {n[0], n[1], n[2]};
    } else {
      throw FormatError("unknown manifest key '" + key + "' in " + manifest.string());
    }
  }
  return d;
}

namespace {

// Exclusive advisory lock on <dir>/.lock for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path f = dir / ".lock";
    fd_ = ::open(f.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw FetchError("cannot open lock file " + f.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw FetchError("cannot lock " + f.string());
    }
  }
  ~DirectoryLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

void fetch_split(const DatasetDescriptor& d, Split split, const fs::path& file, const LoadOptions& opt) {
  if (d.url.empty()) {
    throw FetchError("no source URL for " + d.name + "; place " + file.filename().string() + " in " +
                     file.parent_path().string() + " or set `url` in its manifest.txt");
  }
  std::string url = d.url;
  if (url.back() != '/') url += '/';
  url += std::string(split_name(split)) + ".pd4m";
  if (opt.downloader) opt.downloader(url, file);
  else http_download(url, file);
}

}  // namespace

void validate_split(const SplitData& d, Task task, const std::string& what) {
  if (d.x.rank() == 0 || d.y.rank() != 1 || d.x.shape()[0] != d.y.shape()[0]) {
    throw FormatError(what + ": X " + shape_string(d.x.shape()) + " and y " + shape_string(d.y.shape()) +
                      " disagree on the sample count");
  }
  if (d.mother && (d.mother->rank() != 2 || d.mother->shape()[0] != d.x.shape()[0])) {
    throw FormatError(what + ": mother indices have shape " + shape_string(d.mother->shape()));
  }
  for (double v : d.y.data()) {
    if (task == Task::classification && v != 0.0 && v != 1.0) {
      throw MalformedRecordError(what + ": classification label " + std::to_string(v) + " not in {0, 1}");
    }
    if (!std::isfinite(v)) throw MalformedRecordError(what + ": non-finite regression target");
  }
}

SplitData load(const std::string& name, Split split, const fs::path& root, const LoadOptions& options) {
  DatasetDescriptor d = resolve_descriptor(name, root);
  const fs::path file = split_file(root, name, split);
  if (options.force_download || !fs::exists(file)) {
    DirectoryLock lock(dataset_dir(root, name));
    if (options.force_download || !fs::exists(file)) fetch_split(d, split, file, options);
    d = resolve_descriptor(name, root);
  }

  const auto want = d.md5.find(split_name(split));
  if (want == d.md5.end()) {
    throw IntegrityError("no MD5 recorded for " + name + "/" + split_name(split) +
                         "; add md5." + split_name(split) + " to the manifest");
  }
  const std::string got = to_hex(md5_file(file));
  if (got != want->second) {
    fs::path quarantine = file;
    quarantine += ".corrupt";
    {
      DirectoryLock lock(dataset_dir(root, name));
      if (fs::exists(file)) fs::rename(file, quarantine);
    }
    throw IntegrityError("MD5 mismatch for " + file.string() + ": expected " + want->second + ", got " + got +
                         "; file moved to " + quarantine.string());
  }

  const TensorMap tensors = read_tensor_file(file);
  SplitData out{require_tensor(tensors, "X"), require_tensor(tensors, "y"), std::nullopt};
  if (auto it = tensors.find("mother"); it != tensors.end()) out.mother = it->second.value;
  const std::string what = name + "/" + split_name(split);
  validate_split(out, d.task, what);
  const Shape tail(out.x.shape().begin() + 1, out.x.shape().end());
  if (tail != d.sample_shape) {
    throw FormatError(what + ": samples have shape " + shape_string(tail) + ", descriptor says " +
                      shape_string(d.sample_shape));
  }
  return out;
}

Preprocessor Preprocessor::fit(DatasetKind kind, const SplitData& train) {
  Preprocessor p;
  p.kind_ = kind;
  if (kind == DatasetKind::eos) p.stats_ = standardize_fit(train.x);
  if (kind == DatasetKind::airshower) p.stats_ = airshower_time_fit(train.x);
  return p;
}

Tensor Preprocessor::transform(const SplitData& raw) const {
  const Tensor& x = raw.x;
  const std::size_t b = x.rank() ? x.shape()[0] : 0;
  switch (kind_) {
    case DatasetKind::toptag:
      return toptag_features_batch(x);
    case DatasetKind::smartbkg:
      return smartbkg_features(x);
    case DatasetKind::spinodal:
      return spinodal_features(x).reshaped({b, x.size() / std::max<std::size_t>(b, 1), 1});
    case DatasetKind::eos:
      return standardize_apply(x, *stats_).reshaped({b, x.size() / std::max<std::size_t>(b, 1), 1});
    case DatasetKind::airshower:
      return airshower_features(x, *stats_);
  }
  return x;
}

TensorMap Preprocessor::to_tensors() const {
  TensorMap m;
  if (stats_) {
    m["mean"] = {DType::f64, stats_->mean};
    m["std"] = {DType::f64, stats_->stddev};
  }
  return m;
}

Preprocessor Preprocessor::from_tensors(DatasetKind kind, const TensorMap& tensors) {
  Preprocessor p;
  p.kind_ = kind;
  if (kind == DatasetKind::eos || kind == DatasetKind::airshower) {
    p.stats_ = StandardizeStats{require_tensor(tensors, "mean"), require_tensor(tensors, "std")};
  }
  return p;
}

std::vector<Adjacency> build_graphs(DatasetKind kind, const SplitData& raw, const Tensor& features) {
  const std::size_t b = features.shape()[0], n = features.shape()[1];
  std::vector<Adjacency> out;
  switch (kind) {
    case DatasetKind::toptag: {
      out.reserve(b);
      for (std::size_t s = 0; s < b; ++s) {
        Tensor jet = raw.x.slice_rows(s, s + 1).reshaped({n, 4});
        Tensor coords({n, 2});
        for (std::size_t i = 0; i < n; ++i) {
          coords.at(i, 0) = features.at(s, i, 2);
          coords.at(i, 1) = features.at(s, i, 3);
        }
        out.push_back(knn_adjacency(coords, toptag_valid_mask(jet), kTopTagNeighbours));
      }
      return out;
    }
    case DatasetKind::smartbkg: {
      if (!raw.mother) throw FormatError("decay-tree data has no mother indices");
      out.reserve(b);
      std::vector<std::int64_t> row(n);
      for (std::size_t s = 0; s < b; ++s) {
        for (std::size_t i = 0; i < n; ++i) row[i] = static_cast<std::int64_t>(raw.mother->at(s, i));
        out.push_back(decay_tree_adjacency(row));
      }
      return out;
    }
    case DatasetKind::spinodal:
    case DatasetKind::eos:
      out.push_back(grid_adjacency(raw.x.shape()[1], raw.x.shape()[2]));
      return out;
    case DatasetKind::airshower: {
      const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
      if (side * side != n) throw FormatError("station count " + std::to_string(n) + " is not a square grid");
      out.push_back(grid_adjacency(side, side));
      return out;
    }
  }
  return out;
}

PreparedSplit prepare(const SplitData& raw, const Preprocessor& pre, bool graph) {
  PreparedSplit p{pre.transform(raw), raw.y, {}};
  if (graph) p.graphs = build_graphs(pre.kind(), raw, p.features);
  return p;
}

PreparedSplit load_data(const std::string& name, Split split, const fs::path& root, bool graph,
                        const LoadOptions& options) {
  const DatasetDescriptor& d = registry_lookup(name);
  const SplitData train = load(name, Split::train, root, options);
  const Preprocessor pre = Preprocessor::fit(d.kind, train);
  if (split == Split::train) return prepare(train, pre, graph);
  return prepare(load(name, split, root, options), pre, graph);
}

}  // namespace pd4ml
