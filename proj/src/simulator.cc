#include "crmltr/simulator.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "crmltr/errors.h"
#include "crmltr/numeric.h"
#include "crmltr/random.h"
#include "json.hpp"

namespace crmltr {

namespace {

using json = nlohmann::json;

std::string query_name(std::size_t q) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "q%05zu", q);
  return buf;
}

std::string product_name(std::size_t q, std::size_t p) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "q%05zu-p%04zu", q, p);
  return buf;
}

json model_json(const PolicyParams& params) {
  std::ostringstream out;
  write_model(params, out);
  return json::parse(out.str());
}

PolicyParams model_from_json(const json& j) {
  std::istringstream in(j.dump());
  return parse_model(in);
}

// Simulated label counts for every item of `queries`. Each item draws from
// its own stream so labels do not depend on which queries are requested.
RelevanceTable simulate_label_counts(const SyntheticWorld& world,
                                     const std::set<std::string>& queries,
                                     std::uint64_t seed) {
  std::vector<PairKey> impressions, positives;
  for (std::size_t i = 0; i < world.items.size(); ++i) {
    const auto& item = world.items[i];
    if (!queries.contains(item.query_id)) continue;
    Rng rng(derive_seed(seed, i));
    const PairKey key{item.query_id, item.product_id};
    for (std::int64_t s = 0; s < world.config.label_impressions; ++s) {
      impressions.push_back(key);
      if (rng.bernoulli(world.config.label_examine_prob * item.relevance)) {
        positives.push_back(key);
      }
    }
  }
  return aggregate_feedback(impressions, positives,
                            world.config.visibility_threshold);
}

}  // namespace

void SimConfig::validate() const {
  if (n_queries < 1 || products_per_query < 1 || feature_dim < 1) {
    throw ValidationError("simulator dimensions must be positive");
  }
  if (!(deep_browse_prob >= 0.0 && deep_browse_prob <= 1.0)) {
    throw ValidationError("deep_browse_prob must lie in [0, 1]");
  }
  if (!std::isfinite(relevance_scale) || !std::isfinite(relevance_bias)) {
    throw ValidationError("relevance scale and bias must be finite");
  }
  if (!(logging_noise >= 0.0) || !std::isfinite(logging_noise)) {
    throw ValidationError("logging_noise must be finite and >= 0");
  }
  if (!(logging_temperature > 0.0) || !std::isfinite(logging_temperature)) {
    throw ValidationError("logging_temperature must be finite and > 0");
  }
  if (!(label_examine_prob > 0.0 && label_examine_prob <= 1.0)) {
    throw ValidationError("label_examine_prob must lie in (0, 1]");
  }
  if (label_impressions < 1 || visibility_threshold < 1) {
    throw ValidationError("label_impressions and visibility_threshold must be >= 1");
  }
}

std::set<std::string> SyntheticWorld::query_ids() const {
  std::set<std::string> ids;
  for (const auto& item : items) ids.insert(item.query_id);
  return ids;
}

LoggingPolicy make_logging_policy(const PolicyParams& hidden_truth,
                                  double noise, double temperature,
                                  std::uint64_t seed) {
  if (hidden_truth.kind != ScorerKind::kLinear) {
    throw ValidationError("hidden truth must be a linear scorer");
  }
  if (!(temperature > 0.0)) throw ValidationError("temperature must be > 0");
  LoggingPolicy policy;
  policy.temperature = temperature;
  policy.params = hidden_truth;
  policy.params.seed = seed;

  const std::size_t d = hidden_truth.feature_dim;
  auto weights = policy.params.output_weights();
  // Noise is scaled to the norm of the hidden relevance direction.
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) norm_sq += weights[d + i] * weights[d + i];
  const double scale = noise * std::sqrt(norm_sq / static_cast<double>(d));
  Rng rng(seed);
  for (std::size_t i = 0; i < d; ++i) weights[d + i] += scale * rng.normal();
  for (double& v : policy.params.values) v /= temperature;
  return policy;
}

SyntheticWorld generate_world(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  SyntheticWorld world;
  world.config = config;
  world.seed = seed;

  const std::size_t d = config.feature_dim;
  Rng truth_rng(derive_seed(seed, 0));
  std::vector<double> theta(d);
  double norm_sq = 0.0;
  for (double& t : theta) {
    t = truth_rng.normal();
    norm_sq += t * t;
  }
  const double norm = std::sqrt(norm_sq);
  world.hidden_truth = PolicyParams::zeros(ScorerKind::kLinear, d, 0);
  world.hidden_truth.seed = seed;
  auto w = world.hidden_truth.output_weights();
  for (std::size_t i = 0; i < d; ++i) {
    w[d + i] = config.relevance_scale * theta[i] / norm;
  }
  world.hidden_truth.output_bias()[1] = config.relevance_bias;

  Rng context_rng(derive_seed(seed, 1));
  world.items.reserve(config.n_queries * config.products_per_query);
  for (std::size_t q = 0; q < config.n_queries; ++q) {
    for (std::size_t p = 0; p < config.products_per_query; ++p) {
      WorldItem item;
      item.query_id = query_name(q);
      item.product_id = product_name(q, p);
      item.features.resize(d);
      for (double& x : item.features) x = context_rng.normal();
      item.relevance = action_probabilities(world.hidden_truth, item.features).p1;
      // Keep relevance strictly inside (0, 1) even for extreme contexts.
      item.relevance = std::clamp(item.relevance, 1e-12, 1.0 - 1e-12);
      world.items.push_back(std::move(item));
    }
  }

  world.logging = make_logging_policy(world.hidden_truth, config.logging_noise,
                                      config.logging_temperature,
                                      derive_seed(seed, 2));
  return world;
}

BanditLog simulate_log(const SyntheticWorld& world, const LoggingPolicy& policy,
                       std::size_t n_interactions, std::uint64_t seed,
                       const std::set<std::string>& queries) {
  if (n_interactions < 1) throw ValidationError("n_interactions must be >= 1");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < world.items.size(); ++i) {
    if (queries.empty() || queries.contains(world.items[i].query_id)) {
      pool.push_back(i);
    }
  }
  if (pool.empty()) throw ValidationError("no items to sample interactions from");

  BanditLog log;
  log.feature_dim = world.config.feature_dim;
  log.metadata["source"] = "simulator";
  log.metadata["world_seed"] = std::to_string(world.seed);
  log.metadata["log_seed"] = std::to_string(seed);
  log.records.reserve(n_interactions);

  Rng rng(seed);
  const double browse = world.config.deep_browse_prob;
  for (std::size_t t = 0; t < n_interactions; ++t) {
    const WorldItem& item = world.items[pool[rng.index(pool.size())]];
    const auto pi = action_probabilities(policy.params, item.features);
    const int action = rng.bernoulli(pi.p1) ? 1 : 0;
    const bool click = rng.bernoulli(item.relevance);
    int delta = 0;
    if (action == 1) {
      delta = click ? 0 : 1;
    } else {
      const bool examined = rng.bernoulli(browse);
      delta = examined && click ? 1 : 0;
    }
    BanditRecord record{item.query_id, item.product_id, item.features,
                        action, pi[action], delta};
    validate_record(record, log.feature_dim);
    log.records.push_back(std::move(record));
  }
  return log;
}

double true_risk(const SyntheticWorld& world, const PolicyParams& params) {
  if (params.feature_dim != world.config.feature_dim) {
    throw DimensionError("policy feature_dim does not match the world");
  }
  const double browse = world.config.deep_browse_prob;
  std::vector<double> terms;
  terms.reserve(world.items.size());
  for (const auto& item : world.items) {
    const auto pi = action_probabilities(params, item.features);
    const double r = item.relevance;
    terms.push_back(pi.p1 * (1.0 - r) + pi.p0 * browse * r);
  }
  return pairwise_sum(terms) / static_cast<double>(terms.size());
}

std::vector<SupervisedRecord> supervised_records(
    const SyntheticWorld& world, const std::set<std::string>& queries,
    std::uint64_t seed) {
  const RelevanceTable table = simulate_label_counts(world, queries, seed);
  std::vector<SupervisedRecord> records;
  for (const auto& item : world.items) {
    const auto entry = table.find({item.query_id, item.product_id});
    if (entry == table.end()) continue;
    records.push_back({item.query_id, item.product_id, item.features,
                       entry->second.label, entry->second.nrr});
  }
  return records;
}

SupervisedBuild supervised_training_set(const SyntheticWorld& world,
                                        const std::set<std::string>& queries,
                                        std::uint64_t seed,
                                        double negative_ratio) {
  const RelevanceTable table = simulate_label_counts(world, queries, seed);
  std::map<std::string, std::set<std::string>> shown;
  std::map<PairKey, FeatureVector> contexts;
  for (const auto& item : world.items) {
    if (!queries.contains(item.query_id)) continue;
    shown[item.query_id].insert(item.product_id);
    contexts[{item.query_id, item.product_id}] = item.features;
  }
  return build_supervised(table, shown, contexts, negative_ratio,
                          derive_seed(seed, 7));
}

void write_world(const SyntheticWorld& world, std::ostream& world_sink,
                 std::ostream& context_sink) {
  const auto& c = world.config;
  json out;
  out["seed"] = world.seed;
  out["config"] = {{"n_queries", c.n_queries},
                   {"products_per_query", c.products_per_query},
                   {"feature_dim", c.feature_dim},
                   {"deep_browse_prob", c.deep_browse_prob},
                   {"relevance_scale", c.relevance_scale},
                   {"relevance_bias", c.relevance_bias},
                   {"logging_noise", c.logging_noise},
                   {"logging_temperature", c.logging_temperature},
                   {"label_impressions", c.label_impressions},
                   {"label_examine_prob", c.label_examine_prob},
                   {"visibility_threshold", c.visibility_threshold}};
  out["hidden_truth"] = model_json(world.hidden_truth);
  out["logging_policy"] = model_json(world.logging.params);
  out["logging_temperature"] = world.logging.temperature;
  world_sink << out.dump(2) << '\n';

  context_sink << "query_id\tproduct_id\trelevance";
  for (std::size_t i = 0; i < c.feature_dim; ++i) context_sink << "\tf" << i;
  context_sink << '\n';
  for (const auto& item : world.items) {
    context_sink << item.query_id << '\t' << item.product_id << '\t'
                 << json(item.relevance).dump();
    for (double x : item.features) context_sink << '\t' << json(x).dump();
    context_sink << '\n';
  }
  if (!world_sink || !context_sink) throw IoError("write failure on world output");
}

SyntheticWorld read_world(std::istream& world_source,
                          std::istream& context_source) {
  json in;
  try {
    in = json::parse(world_source);
  } catch (const json::parse_error& e) {
    throw ParseError(1, std::string("malformed world file: ") + e.what());
  }
  SyntheticWorld world;
  world.seed = in.at("seed").get<std::uint64_t>();
  const auto& c = in.at("config");
  world.config.n_queries = c.at("n_queries").get<std::size_t>();
  world.config.products_per_query = c.at("products_per_query").get<std::size_t>();
  world.config.feature_dim = c.at("feature_dim").get<std::size_t>();
  world.config.deep_browse_prob = c.at("deep_browse_prob").get<double>();
  world.config.relevance_scale = c.at("relevance_scale").get<double>();
  world.config.relevance_bias = c.at("relevance_bias").get<double>();
  world.config.logging_noise = c.at("logging_noise").get<double>();
  world.config.logging_temperature = c.at("logging_temperature").get<double>();
  world.config.label_impressions = c.at("label_impressions").get<std::int64_t>();
  world.config.label_examine_prob = c.at("label_examine_prob").get<double>();
  world.config.visibility_threshold = c.at("visibility_threshold").get<std::int64_t>();
  world.config.validate();
  world.hidden_truth = model_from_json(in.at("hidden_truth"));
  world.logging.params = model_from_json(in.at("logging_policy"));
  world.logging.temperature = in.at("logging_temperature").get<double>();

  const std::size_t d = world.config.feature_dim;
  std::string text;
  std::size_t line = 1;
  std::getline(context_source, text);
  while (std::getline(context_source, text)) {
    ++line;
    if (text.empty()) continue;
    std::istringstream fields(text);
    WorldItem item;
    std::string relevance;
    std::getline(fields, item.query_id, '\t');
    std::getline(fields, item.product_id, '\t');
    std::getline(fields, relevance, '\t');
    try {
      item.relevance = std::stod(relevance);
      std::string value;
      while (std::getline(fields, value, '\t')) item.features.push_back(std::stod(value));
    } catch (const std::exception&) {
      throw ParseError(line, "non-numeric context table field");
    }
    if (item.features.size() != d) {
      throw DimensionError("line " + std::to_string(line) +
                           ": context length does not match feature_dim");
    }
    world.items.push_back(std::move(item));
  }
  return world;
}

}  // namespace crmltr
