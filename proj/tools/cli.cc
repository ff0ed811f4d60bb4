#include "cli.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "crmltr/aggregation.h"
#include "crmltr/errors.h"
#include "crmltr/estimators.h"
#include "crmltr/evaluation.h"
#include "crmltr/history.h"
#include "crmltr/log_data.h"
#include "crmltr/policy.h"
#include "crmltr/random.h"
#include "crmltr/simulator.h"
#include "crmltr/training.h"
#include "json.hpp"

namespace crmltr::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Key {
  std::string name;
  json value;  // default; its type is the key's type
  std::string help;
};

using Schema = std::vector<Key>;

class RunDir;

const Schema kTrainingKeys = {
    {"scorer", "linear", "linear or mlp"},
    {"hidden", 16, "hidden units of the mlp scorer"},
    {"batch_size", 256, "records per minibatch"},
    {"epochs", 10, "passes over the training data"},
    {"learning_rate", 1e-3, "Adam step size"},
    {"adam_beta1", 0.9, "Adam first-moment decay"},
    {"adam_beta2", 0.999, "Adam second-moment decay"},
    {"adam_eps", 1e-8, "Adam epsilon"},
    {"eval_every", 10000, "records between checkpoints"},
    {"dev_metric", "MAP", "MAP or NDCG@10"},
};

Schema concat(std::initializer_list<Schema> parts) {
  Schema out;
  for (const auto& part : parts) out.insert(out.end(), part.begin(), part.end());
  return out;
}

struct Subcommand {
  std::string name;
  std::string description;
  Schema schema;
  std::function<void(const json&, RunDir&, std::ostream&)> action;
};

std::string dashed(std::string name) {
  std::replace(name.begin(), name.end(), '_', '-');
  return name;
}

json convert_flag(const Key& key, const std::string& text) {
  const auto bad = [&] {
    return ValidationError("--" + dashed(key.name) + ": cannot parse '" + text + "'");
  };
  if (key.value.is_string()) return text;
  std::size_t used = 0;
  try {
    if (key.value.is_number_integer()) {
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw bad();
      return v;
    }
    const double v = std::stod(text, &used);
    if (used != text.size()) throw bad();
    return v;
  } catch (const std::logic_error&) {
    throw bad();
  }
}

void check_type(const Key& key, const json& value) {
  const bool ok = key.value.is_string()           ? value.is_string()
                  : key.value.is_number_integer() ? value.is_number_integer()
                                                  : value.is_number();
  if (!ok) {
    throw ValidationError("config key '" + key.name + "' has the wrong type");
  }
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ValidationError("config must be a flat JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError(1, "malformed config " + path + ": " + e.what());
  }
}

// Defaults, then the config file, then flags.
json resolve(const Subcommand& sub, const std::string& config_path,
             const std::map<std::string, std::string>& flags) {
  json resolved = json::object();
  for (const auto& key : sub.schema) resolved[key.name] = key.value;
  if (!config_path.empty()) {
    const json file = read_config_file(config_path);
    for (const auto& [name, value] : file.items()) {
      if (name == "subcommand") {
        if (value != sub.name) throw ValidationError("config is for subcommand " + value.dump());
        continue;
      }
      const auto key = std::find_if(sub.schema.begin(), sub.schema.end(),
                                    [&](const Key& k) { return k.name == name; });
      if (key == sub.schema.end()) throw ValidationError("unknown config key '" + name + "'");
      check_type(*key, value);
      resolved[name] = value;
    }
  }
  for (const auto& [name, text] : flags) {
    const auto key = std::find_if(sub.schema.begin(), sub.schema.end(),
                                  [&](const Key& k) { return k.name == name; });
    resolved[name] = convert_flag(*key, text);
  }
  return resolved;
}

class RunDir {
 public:
  RunDir(fs::path path, std::string subcommand)
      : path_(std::move(path)), subcommand_(std::move(subcommand)) {
    std::error_code ec;
    fs::create_directories(path_, ec);
    if (ec) throw IoError("cannot create run directory " + path_.string());
  }

  const fs::path& path() const { return path_; }

  // Writes one output file through `write` and records it in the manifest.
  void emit(const std::string& name, const std::function<void(std::ostream&)>& write) {
    const fs::path target = path_ / name;
    std::ofstream out(target, std::ios::binary);
    if (!out) throw IoError("cannot open " + target.string() + " for writing");
    write(out);
    out.flush();
    if (!out) throw IoError("write failure on " + target.string());
    files_.push_back(name);
  }

  void finish(const json& resolved) {
    emit("resolved_config.json", [&](std::ostream& out) {
      json config = resolved;
      config["subcommand"] = subcommand_;
      out << config.dump(2) << '\n';
    });
    json manifest;
    manifest["subcommand"] = subcommand_;
    manifest["files"] = json::array();
    for (const auto& name : files_) {
      manifest["files"].push_back({{"name", name}, {"bytes", fs::file_size(path_ / name)}});
    }
    std::ofstream out(path_ / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("write failure on manifest");
  }

 private:
  fs::path path_;
  std::string subcommand_;
  std::vector<std::string> files_;
};

std::string required_path(const json& c, const std::string& key) {
  const auto value = c.at(key).get<std::string>();
  if (value.empty()) throw ValidationError("--" + dashed(key) + " is required");
  return value;
}

std::uint64_t seed_of(const json& c) { return c.at("seed").get<std::uint64_t>(); }

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 1) {
      throw ValidationError("bad cutoff list '" + text + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("empty cutoff list");
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ValidationError("bad number list '" + text + "'");
    out.push_back(v);
  }
  return out;
}

TrainConfig train_config(const json& c) {
  TrainConfig t;
  const auto positive = [&](const char* key) {
    const auto v = c.at(key).get<long long>();
    if (v < 1) throw ValidationError(std::string(key) + " must be >= 1");
    return v;
  };
  t.batch_size = static_cast<std::size_t>(positive("batch_size"));
  t.epochs = static_cast<std::size_t>(positive("epochs"));
  t.learning_rate = c.at("learning_rate").get<double>();
  t.adam_beta1 = c.at("adam_beta1").get<double>();
  t.adam_beta2 = c.at("adam_beta2").get<double>();
  t.adam_eps = c.at("adam_eps").get<double>();
  t.eval_every = positive("eval_every");
  t.dev_metric = dev_metric_from_string(c.at("dev_metric").get<std::string>());
  t.seed = seed_of(c);
  if (c.contains("lambda")) t.lambda = c.at("lambda").get<double>();
  if (c.contains("objective")) t.objective = crm_objective_from_string(c.at("objective").get<std::string>());
  if (c.contains("max_probes")) t.max_probes = static_cast<std::size_t>(positive("max_probes"));
  t.validate();
  return t;
}

PolicyParams initial_params(const json& c, std::size_t feature_dim) {
  const auto kind = scorer_kind_from_string(c.at("scorer").get<std::string>());
  const auto hidden = c.at("hidden").get<long long>();
  if (kind == ScorerKind::kMlp && hidden < 1) throw ValidationError("hidden must be >= 1");
  return init_params(kind, feature_dim, kind == ScorerKind::kMlp ? static_cast<std::size_t>(hidden) : 0,
                     derive_seed(seed_of(c), 11));
}

void write_model_to(RunDir& dir, const std::string& name, const PolicyParams& params) {
  dir.emit(name, [&](std::ostream& out) { write_model(params, out); });
}

void emit_history(RunDir& dir, const TrainResult& result) {
  dir.emit("history.tsv", [&](std::ostream& out) { write_history_tsv(result.history, out); });
}

void print_checkpoint(const TrainResult& result, std::ostream& out) {
  const auto& best = result.history.checkpoints[result.best_checkpoint];
  out << "best checkpoint: records_seen " << best.records_seen << ", dev MAP "
      << best.dev_metrics.map << ", dev NDCG@10 " << best.dev_metrics.ndcg_at.at(10)
      << ", S " << best.S << '\n';
}

// ---- simulate ----

const Schema kSimulateKeys = {
    {"seed", 0, "seed for the world, the log and the split"},
    {"out", "", "run directory"},
    {"n_queries", 100, "queries in the world"},
    {"products_per_query", 50, "products per query"},
    {"feature_dim", 10, "context dimension"},
    {"deep_browse_prob", 0.3, "chance a hidden product is examined"},
    {"relevance_scale", 3.0, "scale of the hidden relevance scorer"},
    {"relevance_bias", 0.0, "bias of the hidden relevance scorer"},
    {"logging_noise", 1.0, "relative noise of the logging policy"},
    {"logging_temperature", 0.5, "softmax temperature of the logging policy"},
    {"label_impressions", 100, "impressions per item used for labels"},
    {"label_examine_prob", 0.02, "positive rate per impression, times relevance"},
    {"visibility_threshold", 50, "minimum impressions for a labelled pair"},
    {"n_interactions", 20000, "records in the bandit log"},
    {"train_ratio", 0.6, "share of queries for training"},
    {"dev_ratio", 0.2, "share of queries for model selection"},
    {"test_ratio", 0.2, "share of queries for testing"},
    {"negative_ratio", 4.0, "sampled negatives per positive in the Full-Info set"},
};

json split_json(const QuerySplit& split) {
  return {{"train", split.train}, {"dev", split.dev}, {"test", split.test}};
}

void simulate(const json& c, RunDir& dir, std::ostream& out) {
  SimConfig sim;
  const auto count = [&](const char* key) {
    const auto v = c.at(key).get<long long>();
    if (v < 1) throw ValidationError(std::string(key) + " must be >= 1");
    return v;
  };
  sim.n_queries = static_cast<std::size_t>(count("n_queries"));
  sim.products_per_query = static_cast<std::size_t>(count("products_per_query"));
  sim.feature_dim = static_cast<std::size_t>(count("feature_dim"));
  sim.deep_browse_prob = c.at("deep_browse_prob").get<double>();
  sim.relevance_scale = c.at("relevance_scale").get<double>();
  sim.relevance_bias = c.at("relevance_bias").get<double>();
  sim.logging_noise = c.at("logging_noise").get<double>();
  sim.logging_temperature = c.at("logging_temperature").get<double>();
  sim.label_impressions = count("label_impressions");
  sim.label_examine_prob = c.at("label_examine_prob").get<double>();
  sim.visibility_threshold = count("visibility_threshold");
  const auto n = static_cast<std::size_t>(count("n_interactions"));
  const std::uint64_t seed = seed_of(c);

  const auto world = generate_world(sim, derive_seed(seed, 0));
  const auto split = split_queries(
      world.query_ids(),
      {c.at("train_ratio").get<double>(), c.at("dev_ratio").get<double>(),
       c.at("test_ratio").get<double>()},
      derive_seed(seed, 1));
  const auto log = simulate_log(world, world.logging, n, derive_seed(seed, 2), split.train);
  const auto train = supervised_training_set(world, split.train, derive_seed(seed, 3),
                                             c.at("negative_ratio").get<double>());
  const auto dev = supervised_records(world, split.dev, derive_seed(seed, 3));
  const auto test = supervised_records(world, split.test, derive_seed(seed, 3));

  std::ostringstream contexts;
  dir.emit("world.json", [&](std::ostream& o) { write_world(world, o, contexts); });
  dir.emit("contexts.tsv", [&](std::ostream& o) { o << contexts.str(); });
  dir.emit("log", [&](std::ostream& o) { write_bandit_log(log, o); });
  dir.emit("train", [&](std::ostream& o) { write_supervised(train.records, o); });
  dir.emit("dev", [&](std::ostream& o) { write_supervised(dev, o); });
  dir.emit("test", [&](std::ostream& o) { write_supervised(test, o); });
  dir.emit("qrels", [&](std::ostream& o) { write_qrels(qrels_from_supervised(test), o); });
  dir.emit("split.json", [&](std::ostream& o) { o << split_json(split).dump(2) << '\n'; });
  write_model_to(dir, "logging_model", world.logging.params);

  const auto logging_test = evaluate_policy(world.logging.params, test, std::vector<int>{5, 10});
  out << "world: " << world.items.size() << " items, log: " << log.size()
      << " records\nlogging policy: true risk " << true_risk(world, world.logging.params)
      << ", test MAP " << logging_test.map << '\n';
  for (const auto& w : train.warnings) out << "warning: " << w << '\n';
}

// ---- aggregate ----

const Schema kAggregateKeys = {
    {"seed", 0, "seed for the split and negative sampling"},
    {"out", "", "run directory"},
    {"impressions", "", "TSV of query_id, product_id, one line per impression"},
    {"positives", "", "TSV of query_id, product_id, one line per positive"},
    {"contexts", "", "TSV with a header; feature columns are named f0, f1, ..."},
    {"visibility_threshold", kDefaultVisibilityThreshold, "minimum impressions per pair"},
    {"negative_ratio", kDefaultNegativeRatio, "sampled negatives per positive"},
    {"train_ratio", 0.6, "share of queries for training"},
    {"dev_ratio", 0.2, "share of queries for model selection"},
    {"test_ratio", 0.2, "share of queries for testing"},
};

std::vector<PairKey> read_pair_stream(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<PairKey> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(number, path + ": expected 'query_id<TAB>product_id'");
    }
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream in(line);
  std::string field;
  while (std::getline(in, field, '\t')) fields.push_back(field);
  return fields;
}

std::map<PairKey, FeatureVector> read_contexts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, path + ": missing header");
  const auto header = split_tabs(line);
  if (header.size() < 3 || header[0] != "query_id" || header[1] != "product_id") {
    throw ParseError(1, path + ": header must start with query_id, product_id");
  }
  std::vector<std::size_t> feature_columns;
  for (std::size_t i = 2; i < header.size(); ++i) {
    if (header[i] == "f" + std::to_string(feature_columns.size())) feature_columns.push_back(i);
  }
  if (feature_columns.empty()) throw ParseError(1, path + ": no feature columns");
  std::map<PairKey, FeatureVector> out;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != header.size()) throw DimensionError(path + ": wrong column count at line " + std::to_string(number));
    FeatureVector x;
    for (std::size_t col : feature_columns) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(fields[col], &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      if (used == 0 || used != fields[col].size()) throw ParseError(number, path + ": bad feature value");
      x.push_back(v);
    }
    out[{fields[0], fields[1]}] = std::move(x);
  }
  return out;
}

void aggregate(const json& c, RunDir& dir, std::ostream& out) {
  const auto impressions = read_pair_stream(required_path(c, "impressions"));
  const auto positives = read_pair_stream(required_path(c, "positives"));
  const auto contexts = read_contexts(required_path(c, "contexts"));
  const auto table = aggregate_feedback(impressions, positives, c.at("visibility_threshold").get<std::int64_t>());
  const std::uint64_t seed = seed_of(c);

  std::set<std::string> queries;
  for (const auto& [key, entry] : table) queries.insert(key.first);
  if (queries.empty()) throw ValidationError("no pair passed the visibility threshold");
  const auto split = split_queries(
      queries,
      {c.at("train_ratio").get<double>(), c.at("dev_ratio").get<double>(),
       c.at("test_ratio").get<double>()},
      derive_seed(seed, 1));

  // Training set: negatively sampled. Dev and test keep every labelled pair.
  RelevanceTable train_table;
  std::map<std::string, std::set<std::string>> shown;
  std::vector<SupervisedRecord> dev, test;
  for (const auto& [key, entry] : table) {
    const auto context = contexts.find(key);
    if (split.train.contains(key.first)) {
      train_table[key] = entry;
      shown[key.first].insert(key.second);
      continue;
    }
    if (context == contexts.end()) continue;
    auto& target = split.dev.contains(key.first) ? dev : test;
    target.push_back({key.first, key.second, context->second, entry.label, entry.nrr});
  }
  const auto train = build_supervised(train_table, shown, contexts,
                                      c.at("negative_ratio").get<double>(), derive_seed(seed, 2));

  dir.emit("relevance.tsv", [&](std::ostream& o) { write_relevance_table(table, o); });
  dir.emit("train", [&](std::ostream& o) { write_supervised(train.records, o); });
  dir.emit("dev", [&](std::ostream& o) { write_supervised(dev, o); });
  dir.emit("test", [&](std::ostream& o) { write_supervised(test, o); });
  dir.emit("qrels", [&](std::ostream& o) { write_qrels(qrels_from_supervised(test), o); });
  dir.emit("split.json", [&](std::ostream& o) { o << split_json(split).dump(2) << '\n'; });
  out << table.size() << " pairs kept, " << train.records.size() << " training records\n";
  for (const auto& w : train.warnings) out << "warning: " << w << '\n';
}

// ---- training ----

const Schema kTrainCrmKeys = concat({
    {{"seed", 0, "seed for initialization and shuffling"},
     {"out", "", "run directory"},
     {"log", "", "bandit log"},
     {"dev", "", "supervised dev set"},
     {"lambda", 0.5, "Lagrange multiplier"},
     {"objective", "snips", "snips, ips or ea"}},
    kTrainingKeys,
});

void train_crm_command(const json& c, RunDir& dir, std::ostream& out) {
  const auto log = read_bandit_log_file(required_path(c, "log"));
  const auto dev = read_supervised_file(required_path(c, "dev"));
  const auto config = train_config(c);
  const auto result = train_crm(log, dev, initial_params(c, log.feature_dim), config);
  write_model_to(dir, "model", result.params);
  write_model_to(dir, "final_model", result.final_params);
  emit_history(dir, result);
  print_checkpoint(result, out);
}

const Schema kTrainFullInfoKeys = concat({
    {{"seed", 0, "seed for initialization and shuffling"},
     {"out", "", "run directory"},
     {"train", "", "supervised training set"},
     {"dev", "", "supervised dev set"}},
    kTrainingKeys,
});

void train_fullinfo_command(const json& c, RunDir& dir, std::ostream& out) {
  const auto train = read_supervised_file(required_path(c, "train"));
  const auto dev = read_supervised_file(required_path(c, "dev"));
  if (train.empty()) throw ValidationError("training set is empty");
  const auto result =
      train_full_info(train, dev, initial_params(c, train.front().features.size()), train_config(c));
  write_model_to(dir, "model", result.params);
  write_model_to(dir, "final_model", result.final_params);
  emit_history(dir, result);
  print_checkpoint(result, out);
}

const Schema kLambdaSweepKeys = concat({
    {{"seed", 0, "seed for the initial lambda, initialization and shuffling"},
     {"out", "", "run directory"},
     {"log", "", "bandit log"},
     {"dev", "", "supervised dev set"},
     {"lambdas", "", "comma-separated grid; empty runs the S-guided search"},
     {"probe_epochs", 2, "epochs per search probe"},
     {"max_probes", 10, "search probes at most"}},
    kTrainingKeys,
});

std::string tsv_number(double v) { return std::isnan(v) ? "nan" : json(v).dump(); }

void lambda_sweep_command(const json& c, RunDir& dir, std::ostream& out) {
  const auto log = read_bandit_log_file(required_path(c, "log"));
  const auto dev = read_supervised_file(required_path(c, "dev"));
  const auto config = train_config(c);
  const auto params0 = initial_params(c, log.feature_dim);
  const auto grid = parse_double_list(c.at("lambdas").get<std::string>());
  const auto probe_epochs = c.at("probe_epochs").get<long long>();
  if (probe_epochs < 1) throw ValidationError("probe_epochs must be >= 1");
  const auto result = grid.empty()
                          ? lambda_search(log, dev, params0, config, static_cast<std::size_t>(probe_epochs))
                          : lambda_grid(log, dev, params0, config, grid);

  dir.emit("sweep.tsv", [&](std::ostream& o) {
    o << "lambda\tS\tMAP\tNDCG@5\tNDCG@10\tprobe_S\tselected_S\n";
    for (const auto& e : result.sweep) {
      o << tsv_number(e.lambda) << '\t' << tsv_number(e.S) << '\t' << tsv_number(e.map) << '\t'
        << tsv_number(e.ndcg5) << '\t' << tsv_number(e.ndcg10) << '\t' << tsv_number(e.probe_S)
        << '\t' << tsv_number(e.selected_S) << '\n';
    }
  });
  write_model_to(dir, "model", result.best.params);
  emit_history(dir, result.best);
  out << "lambda* = " << result.lambda_star << " (" << result.sweep.size() << " values)\n";
  print_checkpoint(result.best, out);
}

// ---- evaluation ----

const Schema kEvaluateKeys = {
    {"seed", 0, "unused; kept for uniform configs"},
    {"out", "", "run directory"},
    {"model", "", "model file"},
    {"test", "", "supervised test set"},
    {"ks", "5,10", "comma-separated metric cutoffs"},
    {"gain", "linear", "DCG gain: linear or exponential"},
    {"run_tag", "crmltr", "tag column of the TREC run"},
    {"log", "", "optional bandit log for off-policy estimates"},
};

void evaluate_command(const json& c, RunDir& dir, std::ostream& out) {
  const auto params = read_model_file(required_path(c, "model"));
  const auto test = read_supervised_file(required_path(c, "test"));
  const auto ks = parse_int_list(c.at("ks").get<std::string>());
  const auto gain_name = c.at("gain").get<std::string>();
  if (gain_name != "linear" && gain_name != "exponential") {
    throw ValidationError("gain must be linear or exponential");
  }
  const auto gain = gain_name == "linear" ? GainType::kLinear : GainType::kExponential;
  const auto runs = rank_supervised(params, test);
  const auto qrels = qrels_from_supervised(test);
  const auto report = rank_metrics(runs, qrels, ks, gain);

  dir.emit("metrics.json", [&](std::ostream& o) { write_metrics_json(report, o); });
  dir.emit("run.trec", [&](std::ostream& o) { write_trec_run(runs, c.at("run_tag").get<std::string>(), o); });
  dir.emit("qrels", [&](std::ostream& o) { write_qrels(qrels, o); });
  write_metrics_json(report, out);

  const auto log_path = c.at("log").get<std::string>();
  if (!log_path.empty()) {
    const auto log = read_bandit_log_file(log_path);
    const std::pair<const char*, EstimatorReport> estimates[] = {
        {"snips.txt", snips(log.records, params)},
        {"ips.txt", ips(log.records, params)},
        {"ea.txt", empirical_average(log.records, params)},
    };
    for (const auto& [name, estimate] : estimates) {
      dir.emit(name, [&](std::ostream& o) { write_estimator_report(estimate, o); });
    }
  }
}

const Schema kLearningCurveKeys = {
    {"seed", 0, "unused; kept for uniform configs"},
    {"out", "", "run directory"},
    {"history", "", "history TSV written by a training run"},
};

void learning_curve_command(const json& c, RunDir& dir, std::ostream& out) {
  const auto path = required_path(c, "history");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  const auto rows = learning_curve(parse_history_tsv(in));
  dir.emit("learning_curve.tsv", [&](std::ostream& o) { write_learning_curve(rows, o); });
  write_learning_curve(rows, out);
}

const std::vector<Subcommand>& subcommands() {
  static const std::vector<Subcommand> all = {
      {"simulate", "Generate a synthetic world, bandit log and labelled splits", kSimulateKeys, simulate},
      {"aggregate", "Turn impression and positive streams into graded labels", kAggregateKeys, aggregate},
      {"train-crm", "Counterfactual training on a bandit log", kTrainCrmKeys, train_crm_command},
      {"train-fullinfo", "Cross-entropy training on graded labels", kTrainFullInfoKeys,
       train_fullinfo_command},
      {"lambda-sweep", "Train across lambda values and report S and dev metrics", kLambdaSweepKeys,
       lambda_sweep_command},
      {"evaluate", "Rank a test set with a model and compute trec_eval-style metrics", kEvaluateKeys,
       evaluate_command},
      {"learning-curve", "Export the learning curve of a training history", kLearningCurveKeys,
       learning_curve_command},
  };
  return all;
}

fs::path run_directory(const json& resolved, const std::string& subcommand) {
  const auto out = resolved.at("out").get<std::string>();
  if (!out.empty()) return out;
  const char* root = std::getenv(kRunRootVariable);
  return fs::path(root && *root ? root : "runs") /
         (subcommand + "-" + std::to_string(resolved.at("seed").get<std::uint64_t>()));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Counterfactual learning to rank from logged bandit feedback"};
  app.name(args.empty() ? "crmltr" : fs::path(args[0]).filename().string());
  app.require_subcommand(1, 1);

  struct Parsed {
    std::string config;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    CLI::App* app = nullptr;
  };
  std::vector<Parsed> parsed(subcommands().size());
  for (std::size_t i = 0; i < subcommands().size(); ++i) {
    const auto& sub = subcommands()[i];
    auto& p = parsed[i];
    p.app = app.add_subcommand(sub.name, sub.description);
    p.app->add_option("--config", p.config, "flat JSON config; flags override it");
    for (const auto& key : sub.schema) {
      p.options[key.name] =
          p.app->add_option("--" + dashed(key.name), p.values[key.name], key.help + " (default " + key.value.dump() + ")");
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  for (std::size_t i = 0; i < subcommands().size(); ++i) {
    if (!parsed[i].app->parsed()) continue;
    const auto& sub = subcommands()[i];
    try {
      std::map<std::string, std::string> flags;
      for (const auto& [name, option] : parsed[i].options) {
        if (option->count() > 0) flags[name] = parsed[i].values[name];
      }
      const json resolved = resolve(sub, parsed[i].config, flags);
      RunDir dir(run_directory(resolved, sub.name), sub.name);
      sub.action(resolved, dir, out);
      dir.finish(resolved);
      out << "outputs in " << dir.path().string() << '\n';
      return kOk;
    } catch (const IoError& e) {
      err << "error: " << e.what() << '\n';
      return kIoFailure;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kInvalid;
    }
  }
  return kInvalid;
}

int run(const std::vector<std::string>& args) { return run(args, std::cout, std::cerr); }

}  // namespace crmltr::cli
