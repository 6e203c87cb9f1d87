#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pd4ml/codec.hpp"
#include "pd4ml/graph.hpp"
#include "pd4ml/preprocess.hpp"
#include "pd4ml/tensor.hpp"

namespace pd4ml {

enum class Task { classification, regression };
enum class Split { train, test, validation };
enum class DatasetKind { toptag, smartbkg, spinodal, eos, airshower };

const char* task_name(Task t);
const char* split_name(Split s);
Split parse_split(const std::string& s);
inline constexpr Split kAllSplits[] = {Split::train, Split::test, Split::validation};

struct SplitSizes {
  std::size_t train = 0, test = 0, validation = 0;
  std::size_t of(Split s) const;
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

struct DatasetDescriptor {
  std::string name;
  DatasetKind kind;
  Task task;
  SplitSizes splits;
  Shape sample_shape;
  std::string features;
  std::string graph_recipe;
  std::string url;                         // base URL; files are <url>/<split>.pd4m
  std::map<std::string, std::string> md5;  // split name -> hex digest
  std::string citation;
};

const std::vector<DatasetDescriptor>& registry();
// Throws LookupError listing the registered names.
const DatasetDescriptor& registry_lookup(const std::string& name);

// 16300 -> "16.3k", 1200000 -> "1.2M", 4000 -> "4k", 750 -> "750".
std::string format_count(std::size_t n);
// "train/test/validation" counts, e.g. "16.3k/4k/8.7k".
std::string split_summary(const SplitSizes& s);
std::string print_description(const std::string& name);

// <root>/<name>/manifest.txt, one `key = value` per line.
// Keys: url, md5.<split>, shape (e.g. 20x20), task, splits (e.g. 5000/1000/1000).
std::filesystem::path dataset_dir(const std::filesystem::path& root, const std::string& name);
std::filesystem::path split_file(const std::filesystem::path& root, const std::string& name, Split s);
std::map<std::string, std::string> read_manifest(const std::filesystem::path& file);
void write_manifest(const std::filesystem::path& file, const std::map<std::string, std::string>& entries);
// Registry entry with any manifest found under root applied on top.
DatasetDescriptor resolve_descriptor(const std::string& name, const std::filesystem::path& root);

// Raw tensors of one split. `mother` is present for decay-tree data only.
struct SplitData {
  Tensor x;
  Tensor y;  // [B]
  std::optional<Tensor> mother;
};

// Fetches `url` to `dest`.
using Downloader = std::function<void(const std::string& url, const std::filesystem::path& dest)>;

struct LoadOptions {
  bool force_download = false;
  Downloader downloader;  // empty -> HTTP(S) client
};

// Checksum-verified raw split. Missing files (or force_download) are fetched.
// A digest mismatch moves the file aside as <split>.pd4m.corrupt.
SplitData load(const std::string& name, Split split, const std::filesystem::path& root,
               const LoadOptions& options = {});

// Fitted, train-split-only preprocessing state.
class Preprocessor {
 public:
  static Preprocessor fit(DatasetKind kind, const SplitData& train);
  DatasetKind kind() const { return kind_; }
  // Node-feature tensor [B x N x F].
  Tensor transform(const SplitData& raw) const;
  TensorMap to_tensors() const;
  static Preprocessor from_tensors(DatasetKind kind, const TensorMap& tensors);

 private:
  DatasetKind kind_ = DatasetKind::spinodal;
  std::optional<StandardizeStats> stats_;
};

struct PreparedSplit {
  Tensor features;  // [B x N x F]
  Tensor y;         // [B]
  // Empty without graph mode; one shared graph for grid data; else one per sample.
  std::vector<Adjacency> graphs;
};

inline constexpr std::size_t kTopTagNeighbours = 7;

std::vector<Adjacency> build_graphs(DatasetKind kind, const SplitData& raw, const Tensor& features);
PreparedSplit prepare(const SplitData& raw, const Preprocessor& pre, bool graph);

// load + preprocessing fitted on the train split (+ adjacencies when graph).
PreparedSplit load_data(const std::string& name, Split split, const std::filesystem::path& root, bool graph,
                        const LoadOptions& options = {});

// Run-time checks on a split: equal leading extents, binary labels, finite targets.
void validate_split(const SplitData& d, Task task, const std::string& what);

}  // namespace pd4ml
