#include "pd4ml/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "pd4ml/errors.hpp"
#include "pd4ml/metrics.hpp"
#include "pd4ml/synth.hpp"
#include "pd4ml/training.hpp"

namespace pd4ml {

namespace fs = std::filesystem;
using nlohmann::json;

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string dataset;
  ModelKind model = ModelKind::graphnet;
  fs::path data_root;
  std::uint64_t seed = 0;
  std::size_t width = kHiddenWidth;
  TrainConfig train;
};

json config_json(const RunConfig& c) {
  return {{"dataset", c.dataset},
          {"model", model_name(c.model)},
          {"path", c.data_root.string()},
          {"seed", c.seed},
          {"width", c.width},
          {"batch_size", c.train.batch_size},
          {"max_epochs", c.train.max_epochs},
          {"patience", c.train.patience},
          {"plateau_patience", c.train.plateau_patience},
          {"plateau_factor", c.train.plateau_factor},
          {"learning_rate", c.train.learning_rate}};
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  c.dataset = j.at("dataset").get<std::string>();
  c.model = parse_model(j.at("model").get<std::string>());
  c.data_root = j.at("path").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.width = j.at("width").get<std::size_t>();
  c.train.batch_size = j.at("batch_size").get<std::size_t>();
  c.train.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.train.patience = j.at("patience").get<std::size_t>();
  c.train.plateau_patience = j.at("plateau_patience").get<std::size_t>();
  c.train.plateau_factor = j.at("plateau_factor").get<double>();
  c.train.learning_rate = j.at("learning_rate").get<double>();
  c.train.seed = c.seed;
  return c;
}

void write_text(const fs::path& file, const std::string& text) {
  write_bytes_atomic(file, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

json read_json(const fs::path& file) {
  if (!fs::exists(file)) throw LookupError("missing " + file.string());
  const auto bytes = read_bytes(file);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

ModelSpec spec_for(const RunConfig& c, Task task, const Shape& features) {
  if (features.size() != 3) throw DimensionError("node features must be [B x N x F]");
  const std::size_t nodes = features[1], per_node = features[2];
  return c.model == ModelKind::fcn ? fcn_spec(nodes * per_node, task, c.width)
                                   : graphnet_spec(nodes, per_node, task, c.width);
}

struct PreparedData {
  DatasetDescriptor desc;
  Preprocessor pre;
  Dataset train, validation, test;
};

PreparedData prepare_data(const RunConfig& c) {
  const DatasetDescriptor desc = resolve_descriptor(c.dataset, c.data_root);
  const bool graph = c.model == ModelKind::graphnet;
  const SplitData raw_train = load(c.dataset, Split::train, c.data_root);
  const Preprocessor pre = Preprocessor::fit(desc.kind, raw_train);
  auto make = [&](const SplitData& raw) { return make_dataset(prepare(raw, pre, graph)); };
  return {desc, pre, make(raw_train), make(load(c.dataset, Split::validation, c.data_root)),
          make(load(c.dataset, Split::test, c.data_root))};
}

std::string log_line(const EpochRecord& e) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu, %.9g, %.9g, %.6g\n", e.epoch, e.train_loss, e.val_loss, e.lr);
  return buf;
}

std::string format_metrics(const std::map<std::string, double>& m) {
  std::ostringstream s;
  bool first = true;
  for (const auto& [k, v] : m) {
    s << (first ? "" : " ") << k << "=" << v;
    first = false;
  }
  return s.str();
}

// Trains one seed into `dir` and returns its metrics document.
json train_one(const RunConfig& c, const PreparedData& d, const fs::path& dir, std::ostream* progress,
               std::mutex& io) {
  fs::create_directories(dir);
  write_text(dir / kConfigFile, config_json(c).dump(2) + "\n");

  Rng rng(c.seed);
  Model model(spec_for(c, d.desc.task, d.train.features.shape()), rng);
  std::string log;
  const FitResult result = fit(model, d.train, d.validation, c.train, rng, [&](const EpochRecord& e) {
    const std::string line = log_line(e);
    log += line;
    if (progress) {
      const std::lock_guard lock(io);
      *progress << line << std::flush;
    }
  });

  const auto metrics = evaluate(model, d.test);
  const json doc = {{"dataset", c.dataset},       {"model", model_name(c.model)},
                    {"seed", c.seed},             {"epochs_run", result.epochs_run},
                    {"final_lr", result.final_lr}, {"metrics", metrics}};
  write_tensor_file(dir / kCheckpointFile, model.state());
  write_tensor_file(dir / kPreprocessFile, d.pre.to_tensors());
  write_text(dir / kLogFile, log);
  write_text(dir / kMetricsFile, doc.dump(2) + "\n");
  return doc;
}

json summary_json(const RunConfig& c, const std::vector<json>& runs) {
  std::vector<std::map<std::string, double>> metrics;
  json seeds = json::array();
  for (const json& r : runs) {
    metrics.push_back(r.at("metrics").get<std::map<std::string, double>>());
    seeds.push_back(r.at("seed"));
  }
  json agg = json::object();
  for (const auto& [name, s] : aggregate_runs(metrics)) agg[name] = {{"mean", s.mean}, {"std", s.std}};
  return {{"dataset", c.dataset}, {"model", model_name(c.model)}, {"seeds", seeds}, {"metrics", agg}};
}

void print_summary(std::ostream& out, const json& summary) {
  for (const auto& [name, s] : summary.at("metrics").items())
    out << name << " = " << s.at("mean").get<double>() << " +- " << s.at("std").get<double>() << "\n";
}

struct TrainArgs {
  std::string dataset;
  std::string model = "graphnet";
  std::string path = "./data";
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  std::string out;
  std::optional<std::size_t> width, epochs, batch_size, patience;
  std::optional<double> lr;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig c;
  c.dataset = a.dataset;
  c.model = parse_model(a.model);
  c.data_root = fs::absolute(a.path).lexically_normal();
  c.seed = a.seed;
  c.train = preset(c.model);
  if (a.width) c.width = *a.width;
  if (a.epochs) c.train.max_epochs = *a.epochs;
  if (a.batch_size) c.train.batch_size = *a.batch_size;
  if (a.patience) c.train.patience = *a.patience;
  if (a.lr) c.train.learning_rate = *a.lr;

  const PreparedData data = prepare_data(c);
  const fs::path root = a.out;
  std::mutex io;

  if (a.seeds == 1) {
    c.train.seed = c.seed;
    const json doc = train_one(c, data, root, &out, io);
    out << "test " << format_metrics(doc.at("metrics").get<std::map<std::string, double>>()) << "\n";
    return 0;
  }

  std::vector<json> docs(a.seeds);
  std::vector<std::exception_ptr> errors(a.seeds);
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < a.seeds; ++i) {
    workers.emplace_back([&, i] {
      RunConfig run = c;
      run.seed = c.seed + i;
      run.train.seed = run.seed;
      try {
        docs[i] = train_one(run, data, root / ("seed_" + std::to_string(run.seed)), nullptr, io);
        const std::lock_guard lock(io);
        out << "seed " << run.seed << ": " << format_metrics(docs[i].at("metrics").get<std::map<std::string, double>>())
            << "\n";
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const json summary = summary_json(c, docs);
  write_text(root / kSummaryFile, summary.dump(2) + "\n");
  print_summary(out, summary);
  return 0;
}

json evaluate_run(const fs::path& dir, Split split) {
  const RunConfig c = config_from_json(read_json(dir / kConfigFile));
  const DatasetDescriptor desc = resolve_descriptor(c.dataset, c.data_root);
  const Preprocessor pre = Preprocessor::from_tensors(desc.kind, read_tensor_file(dir / kPreprocessFile));
  const Dataset data =
      make_dataset(prepare(load(c.dataset, split, c.data_root), pre, c.model == ModelKind::graphnet));
  Rng rng(c.seed);
  Model model(spec_for(c, desc.task, data.features.shape()), rng);
  model.load_state(read_tensor_file(dir / kCheckpointFile));
  return {{"dataset", c.dataset},
          {"model", model_name(c.model)},
          {"seed", c.seed},
          {"split", split_name(split)},
          {"metrics", evaluate(model, data)}};
}

int cmd_evaluate(const fs::path& dir, const std::string& split_arg, std::ostream& out) {
  const Split split = parse_split(split_arg);
  if (fs::exists(dir / kConfigFile)) {
    out << evaluate_run(dir, split).dump(2) << "\n";
    return 0;
  }
  // Multi-seed directory: evaluate each seed_<s> run and aggregate.
  std::vector<fs::path> runs;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && e.path().filename().string().starts_with("seed_") && fs::exists(e.path() / kConfigFile))
        runs.push_back(e.path());
  if (runs.empty()) throw LookupError(dir.string() + " is not a run directory (no " + kConfigFile + ")");
  std::sort(runs.begin(), runs.end());
  std::vector<json> docs;
  for (const auto& r : runs) docs.push_back(evaluate_run(r, split));
  const RunConfig c = config_from_json(read_json(runs.front() / kConfigFile));
  json summary = summary_json(c, docs);
  summary["split"] = split_name(split);
  out << summary.dump(2) << "\n";
  return 0;
}

SplitSizes parse_sizes(const std::string& text) {
  std::vector<std::size_t> parts;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size() || item[0] == '-') throw UsageError("--n: bad count '" + item + "'");
    parts.push_back(static_cast<std::size_t>(v));
  }
  if (parts.size() == 1) return {parts[0], parts[0], parts[0]};
  if (parts.size() == 3) return {parts[0], parts[1], parts[2]};
  throw UsageError("--n takes K or TRAIN,TEST,VALIDATION");
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PD4ML benchmark toolkit: datasets, graph models and the training protocol", "pd4ml"};
  app.require_subcommand(1);

  auto* list = app.add_subcommand("list", "List registered datasets");

  std::string name;
  std::string path = "./data";
  auto* describe = app.add_subcommand("describe", "Print a dataset description");
  describe->add_option("name", name, "Dataset name")->required();

  bool force = false;
  auto* fetch = app.add_subcommand("fetch", "Download and verify all splits of a dataset");
  fetch->add_option("name", name, "Dataset name")->required();
  fetch->add_option("--path", path, "Data root")->capture_default_str();
  fetch->add_flag("--force", force, "Download even when a verified copy exists");

  std::string kind, sizes = "1000";
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic dataset");
  synth->add_option("kind", kind, "toptag-like, decay-like, grid20-like, grid24-like or shower-like")->required();
  synth->add_option("--n", sizes, "Samples per split: K, or TRAIN,TEST,VALIDATION")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
  synth->add_option("--out", path, "Data root")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model and write a run directory");
  train->add_option("dataset", ta.dataset, "Dataset name")->required();
  train->add_option("--model", ta.model, "fcn or graphnet")
      ->check(CLI::IsMember({"fcn", "graphnet"}))
      ->capture_default_str();
  train->add_option("--path", ta.path, "Data root")->capture_default_str();
  train->add_option("--seed", ta.seed, "First seed")->capture_default_str();
  train->add_option("--seeds", ta.seeds, "Number of seeds, run in parallel")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--out", ta.out, "Run directory")->required();
  train->add_option("--width", ta.width, "Hidden width")->check(CLI::PositiveNumber);
  train->add_option("--epochs", ta.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  train->add_option("--batch-size", ta.batch_size, "Mini-batch size")->check(CLI::Range(2, 1 << 30));
  train->add_option("--patience", ta.patience, "Early-stopping patience")->check(CLI::NonNegativeNumber);
  train->add_option("--lr", ta.lr, "Initial learning rate")->check(CLI::PositiveNumber);

  std::string run_dir, split = "test";
  auto* eval = app.add_subcommand("evaluate", "Evaluate a run directory on a split");
  eval->add_option("rundir", run_dir, "Run directory")->required();
  eval->add_option("--split", split, "train, validation or test")
      ->check(CLI::IsMember({"train", "validation", "test"}))
      ->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return 2;
  }

  try {
    if (list->parsed()) {
      for (const auto& d : registry()) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-16s %-15s %s\n", d.name.c_str(), task_name(d.task),
                      split_summary(d.splits).c_str());
        out << buf;
      }
      return 0;
    }
    if (describe->parsed()) {
      out << print_description(name);
      return 0;
    }
    if (fetch->parsed()) {
      LoadOptions options;
      options.force_download = force;
      for (Split s : kAllSplits) {
        const SplitData d = load(name, s, path, options);
        out << split_name(s) << ": " << split_file(path, name, s).string() << " (" << d.y.size() << " samples)\n";
      }
      return 0;
    }
    if (synth->parsed()) {
      const SplitSizes n = parse_sizes(sizes);
      const std::string dataset = write_synthetic(parse_synth_kind(kind), n, synth_seed, path);
      out << dataset << ": " << dataset_dir(path, dataset).string() << " (" << split_summary(n) << ")\n";
      return 0;
    }
    if (train->parsed()) return cmd_train(ta, out);
    if (eval->parsed()) return cmd_evaluate(run_dir, split, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace pd4ml
