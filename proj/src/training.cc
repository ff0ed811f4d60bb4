#include "crmltr/training.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include "crmltr/errors.h"
#include "crmltr/estimators.h"
#include "crmltr/numeric.h"
#include "crmltr/random.h"

namespace crmltr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kDevCutoffs[] = {5, 10};

double select_metric(const MetricsReport& report, DevMetric metric) {
  if (metric == DevMetric::kMap) return report.map;
  return report.ndcg_at.at(10);
}

// Sum of per-record gradients, reduced per coordinate in a fixed order and
// divided by the batch size.
PolicyParams batch_mean(const PolicyParams& params, std::size_t m,
                        const std::function<PolicyParams(std::size_t)>& per_record) {
  std::vector<std::vector<double>> columns(params.size(), std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto g = per_record(i);
    for (std::size_t k = 0; k < g.size(); ++k) columns[k][i] = g.values[k];
  }
  PolicyParams out =
      PolicyParams::zeros(params.kind, params.feature_dim, params.hidden);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out.values[k] = pairwise_sum(columns[k]) / static_cast<double>(m);
  }
  return out;
}

// Shared minibatch loop. `gradient` maps a batch of record indices to a
// gradient, `objective` and `snips_S` are evaluated at every checkpoint.
TrainResult run_training(
    std::size_t n_records, std::span<const SupervisedRecord> dev,
    const PolicyParams& params0, const TrainConfig& config,
    const std::function<PolicyParams(const PolicyParams&,
                                     std::span<const std::size_t>)>& gradient,
    const std::function<double(const PolicyParams&)>& objective,
    const std::function<double(const PolicyParams&)>& snips_S) {
  config.validate();
  if (dev.empty()) throw ValidationError("dev set is empty");

  TrainResult result;
  PolicyParams params = params0;
  AdamState state;
  Rng rng(derive_seed(config.seed, 1));

  std::vector<PolicyParams> snapshots;
  auto checkpoint = [&](std::int64_t records_seen) {
    Checkpoint c;
    c.records_seen = records_seen;
    c.dev_metrics = evaluate_policy(params, dev, kDevCutoffs);
    c.S = snips_S(params);
    c.objective = objective(params);
    result.history.checkpoints.push_back(std::move(c));
    snapshots.push_back(params);
  };

  std::vector<std::size_t> order(n_records);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::int64_t records_seen = 0;
  std::int64_t last_checkpoint = 0;
  checkpoint(0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n_records; start += config.batch_size) {
      const std::size_t end = std::min(n_records, start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      adam_step(params, gradient(params, batch), state, config);
      ++result.optimizer_steps;
      records_seen += static_cast<std::int64_t>(batch.size());
      if (records_seen - last_checkpoint >= config.eval_every) {
        checkpoint(records_seen);
        last_checkpoint = records_seen;
      }
    }
  }
  if (last_checkpoint != records_seen) checkpoint(records_seen);

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.history.checkpoints.size(); ++i) {
    if (select_metric(result.history.checkpoints[i].dev_metrics,
                      config.dev_metric) >
        select_metric(result.history.checkpoints[best].dev_metrics,
                      config.dev_metric)) {
      best = i;
    }
  }
  result.best_checkpoint = best;
  result.params = snapshots[best];
  result.final_params = params;
  return result;
}

// Number of records sharing each record's (query, product, action) group.
std::vector<double> group_sizes(std::span<const BanditRecord> records) {
  std::map<std::tuple<std::string, std::string, int>, std::size_t> counts;
  for (const auto& r : records) ++counts[{r.query_id, r.product_id, r.action}];
  std::vector<double> sizes;
  sizes.reserve(records.size());
  for (const auto& r : records) {
    sizes.push_back(static_cast<double>(counts[{r.query_id, r.product_id, r.action}]));
  }
  return sizes;
}

}  // namespace

std::string to_string(DevMetric metric) {
  return metric == DevMetric::kMap ? "MAP" : "NDCG@10";
}

DevMetric dev_metric_from_string(const std::string& name) {
  if (name == "MAP" || name == "map") return DevMetric::kMap;
  if (name == "NDCG@10" || name == "ndcg@10" || name == "ndcg10") {
    return DevMetric::kNdcg10;
  }
  throw ValidationError("unknown dev metric '" + name + "'");
}

std::string to_string(CrmObjective objective) {
  switch (objective) {
    case CrmObjective::kSnipsLagrangian:
      return "snips";
    case CrmObjective::kIps:
      return "ips";
    case CrmObjective::kEmpiricalAverage:
      return "ea";
  }
  return "snips";
}

CrmObjective crm_objective_from_string(const std::string& name) {
  if (name == "snips") return CrmObjective::kSnipsLagrangian;
  if (name == "ips") return CrmObjective::kIps;
  if (name == "ea") return CrmObjective::kEmpiricalAverage;
  throw ValidationError("unknown objective '" + name + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ValidationError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be > 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError("lambda must lie in [0, 1]");
  }
  if (eval_every < 1) throw ValidationError("eval_every must be >= 1");
  if (max_probes < 1) throw ValidationError("max_probes must be >= 1");
}

void adam_step(PolicyParams& params, const PolicyParams& grads,
               AdamState& state, const TrainConfig& config) {
  if (!params.same_shape(grads)) {
    throw DimensionError("gradient shape does not match parameters");
  }
  const std::size_t n = params.size();
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n || state.v.size() != n) {
    throw DimensionError("optimizer state shape does not match parameters");
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads.values[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params.values[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
  }
}

double crm_objective_value(const BanditLog& log, const PolicyParams& params,
                           const TrainConfig& config) {
  switch (config.objective) {
    case CrmObjective::kSnipsLagrangian:
      return lagrangian_risk(log.records, params, config.lambda);
    case CrmObjective::kIps:
      return ips(log.records, params).estimate;
    case CrmObjective::kEmpiricalAverage:
      return empirical_average(log.records, params).estimate;
  }
  return kNaN;
}

TrainResult train_crm(const BanditLog& train_log,
                      std::span<const SupervisedRecord> dev,
                      const PolicyParams& params0, const TrainConfig& config) {
  if (train_log.empty()) throw ValidationError("training log is empty");
  if (train_log.feature_dim != params0.feature_dim) {
    throw DimensionError("log feature_dim does not match the policy");
  }
  const auto& records = train_log.records;

  const double lambda =
      config.objective == CrmObjective::kSnipsLagrangian ? config.lambda : 0.0;
  std::vector<double> coefficient_scale(records.size(), 1.0);
  if (config.objective == CrmObjective::kEmpiricalAverage) {
    // EA weights each record by 1 / |group| and ignores propensities.
    const auto sizes = group_sizes(records);
    for (std::size_t i = 0; i < records.size(); ++i) {
      coefficient_scale[i] = records[i].propensity / sizes[i];
    }
  }

  auto gradient = [&](const PolicyParams& params,
                      std::span<const std::size_t> batch) {
    return batch_mean(params, batch.size(), [&](std::size_t j) {
      const auto& r = records[batch[j]];
      auto g = grad_action_prob(params, r.features, r.action);
      const double c =
          (r.delta - lambda) / r.propensity * coefficient_scale[batch[j]];
      for (double& v : g.values) v *= c;
      return g;
    });
  };
  auto objective = [&](const PolicyParams& params) {
    return crm_objective_value(train_log, params, config);
  };
  auto snips_S = [&](const PolicyParams& params) {
    return snips_denominator(records, params);
  };
  return run_training(records.size(), dev, params0, config, gradient, objective,
                      snips_S);
}

TrainResult train_full_info(std::span<const SupervisedRecord> train,
                            std::span<const SupervisedRecord> dev,
                            const PolicyParams& params0,
                            const TrainConfig& config) {
  if (train.empty()) throw ValidationError("training set is empty");
  if (std::none_of(train.begin(), train.end(),
                   [](const SupervisedRecord& r) { return r.label > 0; })) {
    throw ValidationError("training set has no positive labels");
  }
  for (const auto& r : train) {
    if (r.features.size() != params0.feature_dim) {
      throw DimensionError("supervised record does not match policy feature_dim");
    }
  }

  auto record_gradient = [&](const PolicyParams& params,
                             const SupervisedRecord& r) {
    const auto pi = action_probabilities(params, r.features);
    const double weight = (1.0 + r.label) / 5.0;
    const int y = r.label > 0 ? 1 : 0;
    // d(-log pi_y) / d z_k = pi_k - [k == y]
    const Logits g{weight * (pi.p0 - (y == 0 ? 1.0 : 0.0)),
                   weight * (pi.p1 - (y == 1 ? 1.0 : 0.0))};
    return backprop_logits(params, r.features, g);
  };
  auto gradient = [&](const PolicyParams& params,
                      std::span<const std::size_t> batch) {
    return batch_mean(params, batch.size(), [&](std::size_t j) {
      return record_gradient(params, train[batch[j]]);
    });
  };
  auto objective = [&](const PolicyParams& params) {
    std::vector<double> losses;
    losses.reserve(train.size());
    for (const auto& r : train) {
      const auto pi = action_probabilities(params, r.features);
      const double weight = (1.0 + r.label) / 5.0;
      losses.push_back(-weight * std::log(r.label > 0 ? pi.p1 : pi.p0));
    }
    return pairwise_sum(losses) / static_cast<double>(losses.size());
  };
  auto no_S = [](const PolicyParams&) { return kNaN; };
  return run_training(train.size(), dev, params0, config, gradient, objective,
                      no_S);
}

double next_lambda(double lambda, double S) {
  return S > 1.0 ? lambda * 0.9 : lambda * 1.1;
}

LambdaSweepResult lambda_grid(const BanditLog& train_log,
                              std::span<const SupervisedRecord> dev,
                              const PolicyParams& params0,
                              const TrainConfig& config,
                              std::span<const double> grid) {
  if (grid.empty()) throw ValidationError("lambda grid is empty");
  LambdaSweepResult result;
  bool have_best = false;
  double best_metric = 0.0;
  for (double lambda : grid) {
    TrainConfig run_config = config;
    run_config.objective = CrmObjective::kSnipsLagrangian;
    run_config.lambda = lambda;
    TrainResult trained = train_crm(train_log, dev, params0, run_config);

    const auto& selected = trained.history.checkpoints[trained.best_checkpoint];
    SweepEntry entry;
    entry.lambda = lambda;
    entry.probe_S = kNaN;
    entry.S = snips_denominator(train_log.records, trained.final_params);
    entry.selected_S = selected.S;
    entry.map = selected.dev_metrics.map;
    entry.ndcg5 = selected.dev_metrics.ndcg_at.at(5);
    entry.ndcg10 = selected.dev_metrics.ndcg_at.at(10);
    entry.dev_metric = select_metric(selected.dev_metrics, config.dev_metric);
    result.sweep.push_back(entry);

    if (!have_best || entry.dev_metric > best_metric) {
      have_best = true;
      best_metric = entry.dev_metric;
      result.lambda_star = lambda;
      result.best = std::move(trained);
    }
  }
  return result;
}

LambdaSweepResult lambda_search(const BanditLog& train_log,
                                std::span<const SupervisedRecord> dev,
                                const PolicyParams& params0,
                                const TrainConfig& config,
                                std::size_t probe_epochs) {
  config.validate();
  if (probe_epochs < 1) throw ValidationError("probe_epochs must be >= 1");
  if (train_log.empty()) throw ValidationError("training log is empty");
  if (dev.empty()) throw ValidationError("dev set is empty");

  Rng rng(derive_seed(config.seed, 2));
  double lambda = 1.0 - rng.uniform();  // (0, 1]

  TrainConfig probe_config = config;
  probe_config.objective = CrmObjective::kSnipsLagrangian;
  probe_config.epochs = probe_epochs;
  probe_config.eval_every = std::numeric_limits<std::int64_t>::max();

  std::vector<double> probed;
  std::vector<double> probe_S;
  for (std::size_t probe = 0; probe < config.max_probes; ++probe) {
    probe_config.lambda = lambda;
    const auto trained = train_crm(train_log, dev, params0, probe_config);
    const double S = snips_denominator(train_log.records, trained.final_params);
    probed.push_back(lambda);
    probe_S.push_back(S);
    if (S >= 0.95 && S <= 1.05) break;
    const double next = next_lambda(lambda, S);
    if (next > 1.0) break;
    lambda = next;
  }

  LambdaSweepResult result =
      lambda_grid(train_log, dev, params0, config, probed);
  for (std::size_t i = 0; i < result.sweep.size(); ++i) {
    result.sweep[i].probe_S = probe_S[i];
  }
  return result;
}

}  // namespace crmltr
