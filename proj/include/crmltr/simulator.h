#ifndef CRMLTR_SIMULATOR_H_
#define CRMLTR_SIMULATOR_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "crmltr/aggregation.h"
#include "crmltr/evaluation.h"
#include "crmltr/log_data.h"
#include "crmltr/policy.h"

namespace crmltr {

struct SimConfig {
  std::size_t n_queries = 100;
  std::size_t products_per_query = 50;
  std::size_t feature_dim = 10;
  // Chance that a user scrolls past the shown results and examines a hidden
  // product.
  double deep_browse_prob = 0.3;
  // true_relevance = logistic(relevance_scale * <theta, c> + relevance_bias)
  // with theta a random unit vector.
  double relevance_scale = 3.0;
  double relevance_bias = 0.0;
  // Std-dev of the Gaussian noise added to the hidden scorer to build the
  // logging policy, relative to the scale of its weights.
  double logging_noise = 1.0;
  double logging_temperature = 0.5;
  // Impressions per (query, product) used to derive graded labels through
  // aggregate_feedback. An impression yields a positive with probability
  // label_examine_prob * relevance, which keeps label counts sparse.
  std::int64_t label_impressions = 100;
  double label_examine_prob = 0.02;
  std::int64_t visibility_threshold = 50;

  // Throws ValidationError when a field is out of range.
  void validate() const;
};

struct LoggingPolicy {
  PolicyParams params;  // temperature already folded into the output layer
  double temperature = 1.0;
};

struct WorldItem {
  std::string query_id;
  std::string product_id;
  FeatureVector features;
  double relevance = 0.0;  // click probability when examined, in (0, 1)
};

struct SyntheticWorld {
  SimConfig config;
  std::uint64_t seed = 0;
  std::vector<WorldItem> items;  // grouped by query, queries in sorted order
  // Linear scorer with logits (0, scale * <theta, c> + bias), so that
  // pi(1 | c) under it equals the true relevance.
  PolicyParams hidden_truth;
  LoggingPolicy logging;

  std::set<std::string> query_ids() const;
};

// Deterministic per seed. Contexts are standard normal.
SyntheticWorld generate_world(const SimConfig& config, std::uint64_t seed);

// Builds hidden_truth plus N(0, noise^2 / d) weight noise, divided by the
// temperature. With noise 0 the logging policy orders every query exactly by
// true relevance.
LoggingPolicy make_logging_policy(const PolicyParams& hidden_truth,
                                  double noise, double temperature,
                                  std::uint64_t seed);

// Per interaction: pick an item uniformly (restricted to `queries` when
// non-empty), draw a ~ pi_0(. | c) with propensity pi_0(a | c), and a click
// ~ Bernoulli(relevance).
//   a = 1: delta = 0 on click, 1 otherwise.
//   a = 0: the user examines with deep_browse_prob; delta = 1 iff examined
//          and clicked.
BanditLog simulate_log(const SyntheticWorld& world, const LoggingPolicy& policy,
                       std::size_t n_interactions, std::uint64_t seed,
                       const std::set<std::string>& queries = {});

// Exact expected delta under the policy, averaged uniformly over all items:
// mean of pi(1|c) (1 - r) + pi(0|c) deep_browse_prob r.
double true_risk(const SyntheticWorld& world, const PolicyParams& params);

// Graded labels for the items of `queries` from simulated impression and
// click counts (label_impressions shows per item, positives ~ Binomial(shows,
// label_examine_prob * relevance)) run through aggregate_feedback. One record
// per item.
std::vector<SupervisedRecord> supervised_records(
    const SyntheticWorld& world, const std::set<std::string>& queries,
    std::uint64_t seed);

// Full-Info training set for `queries`: the same simulated counts run through
// build_supervised, so every labelled pair is kept and label-0 pairs are
// negatively sampled.
SupervisedBuild supervised_training_set(const SyntheticWorld& world,
                                        const std::set<std::string>& queries,
                                        std::uint64_t seed,
                                        double negative_ratio);

// World file: config, seed, hidden truth and logging models as JSON.
// Context table: TSV query_id, product_id, relevance, f0..fd-1.
void write_world(const SyntheticWorld& world, std::ostream& world_sink,
                 std::ostream& context_sink);
SyntheticWorld read_world(std::istream& world_source,
                          std::istream& context_source);

}  // namespace crmltr

#endif  // CRMLTR_SIMULATOR_H_
