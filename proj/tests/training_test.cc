#include "crmltr/training.h"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "crmltr/errors.h"
#include "crmltr/estimators.h"
#include "crmltr/simulator.h"
#include "test_util.h"

namespace crmltr {
namespace {

TEST(Adam, ZeroGradientLeavesParams) {
  Rng rng(1);
  auto p = testing::random_params(rng, ScorerKind::kLinear, 3, 0);
  const auto before = p;
  AdamState state;
  TrainConfig config;
  adam_step(p, PolicyParams::zeros(ScorerKind::kLinear, 3, 0), state, config);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ConstantGradientClosedForm) {
  // With a constant gradient the bias-corrected moments are g and g^2, so
  // every step moves by lr * g / (|g| + eps).
  TrainConfig config;
  config.learning_rate = 0.01;
  auto p = PolicyParams::zeros(ScorerKind::kLinear, 1, 0);
  auto g = PolicyParams::zeros(ScorerKind::kLinear, 1, 0);
  g.values = {0.5, -2.0, 1e-3, -7.0};
  AdamState state;
  const int steps = 200;
  for (int t = 0; t < steps; ++t) adam_step(p, g, state, config);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double expected = -steps * config.learning_rate * g.values[i] /
                            (std::abs(g.values[i]) + config.adam_eps);
    EXPECT_NEAR(p.values[i], expected, 1e-9) << i;
  }
}

TEST(Adam, DeterministicAndShapeChecked) {
  Rng rng(2);
  const auto p0 = testing::random_params(rng, ScorerKind::kMlp, 2, 3);
  std::vector<PolicyParams> grads;
  for (int i = 0; i < 20; ++i) grads.push_back(testing::random_params(rng, ScorerKind::kMlp, 2, 3));
  auto run = [&] {
    auto p = p0;
    AdamState state;
    for (const auto& g : grads) adam_step(p, g, state, TrainConfig{});
    return p;
  };
  EXPECT_EQ(run(), run());
  auto p = p0;
  AdamState state;
  EXPECT_THROW(adam_step(p, PolicyParams::zeros(ScorerKind::kLinear, 2, 0), state, TrainConfig{}),
               DimensionError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.adam_beta2 = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

std::vector<SupervisedRecord> separable_set(int per_class) {
  std::vector<SupervisedRecord> out;
  for (int q = 0; q < 4; ++q) {
    for (int i = 0; i < per_class; ++i) {
      const std::string query = "q" + std::to_string(q);
      out.push_back({query, "pos" + std::to_string(i), {1.0}, 4, 1.0});
      out.push_back({query, "neg" + std::to_string(i), {-1.0}, 0, 0.0});
    }
  }
  return out;
}

BanditLog small_log(std::size_t n) {
  Rng rng(9);
  auto log = testing::random_log(rng, n, 1);
  for (auto& r : log.records) r.features = {r.action == 1 ? 1.0 : -1.0};
  return log;
}

TEST(TrainCrm, StepCount) {
  TrainConfig config;
  config.epochs = 1;
  config.batch_size = 10;
  const auto dev = separable_set(2);
  const auto result = train_crm(small_log(10), dev, PolicyParams::zeros(ScorerKind::kLinear, 1, 0), config);
  EXPECT_EQ(result.optimizer_steps, 1);

  config.epochs = 3;
  config.batch_size = 4;
  const auto more = train_crm(small_log(10), dev, PolicyParams::zeros(ScorerKind::kLinear, 1, 0), config);
  EXPECT_EQ(more.optimizer_steps, 9);
}

TEST(TrainCrm, CheckpointsIncreaseAndSelectionIsBest) {
  TrainConfig config;
  config.epochs = 4;
  config.batch_size = 8;
  config.eval_every = 25;
  config.learning_rate = 0.05;
  const auto dev = separable_set(3);
  const auto result = train_crm(small_log(60), dev, init_params(ScorerKind::kLinear, 1, 0, 3), config);
  const auto& cps = result.history.checkpoints;
  ASSERT_GE(cps.size(), 3u);
  EXPECT_EQ(cps.front().records_seen, 0);
  EXPECT_EQ(cps.back().records_seen, 240);
  for (std::size_t i = 1; i < cps.size(); ++i) EXPECT_GT(cps[i].records_seen, cps[i - 1].records_seen);
  const double best = cps[result.best_checkpoint].dev_metrics.map;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (i < result.best_checkpoint) EXPECT_LT(cps[i].dev_metrics.map, best);
    else EXPECT_LE(cps[i].dev_metrics.map, best);
  }
}

TEST(TrainCrm, Errors) {
  const auto dev = separable_set(1);
  const auto p0 = PolicyParams::zeros(ScorerKind::kLinear, 1, 0);
  EXPECT_THROW(train_crm(BanditLog{}, dev, p0, TrainConfig{}), ValidationError);
  EXPECT_THROW(train_crm(small_log(5), {}, p0, TrainConfig{}), ValidationError);
  TrainConfig zero_epochs;
  zero_epochs.epochs = 0;
  EXPECT_THROW(train_crm(small_log(5), dev, p0, zero_epochs), ValidationError);
  EXPECT_THROW(train_crm(small_log(5), dev, PolicyParams::zeros(ScorerKind::kLinear, 2, 0), TrainConfig{}),
               DimensionError);
}

TEST(TrainCrm, SingleBatchOverfitReducesObjective) {
  Rng rng(15);
  for (auto kind : {ScorerKind::kLinear, ScorerKind::kMlp}) {
    const auto log = testing::random_log(rng, 16, 3);
    const auto p0 = init_params(kind, 3, kind == ScorerKind::kMlp ? 4 : 0, 5);
    TrainConfig config;
    config.batch_size = 16;
    config.epochs = 500;
    config.learning_rate = 0.01;
    config.lambda = 0.4;
    config.eval_every = 16 * 500;
    const auto dev = separable_set(1);
    std::vector<SupervisedRecord> dev3;
    for (auto r : dev) {
      r.features = {r.features[0], 0.0, 0.0};
      dev3.push_back(r);
    }
    const auto result = train_crm(log, dev3, p0, config);
    EXPECT_EQ(result.optimizer_steps, 500);
    EXPECT_LT(lagrangian_risk(log.records, result.final_params, 0.4),
              lagrangian_risk(log.records, p0, 0.4));
  }
}

TEST(TrainCrm, Deterministic) {
  TrainConfig config;
  config.epochs = 2;
  config.batch_size = 7;
  config.eval_every = 10;
  config.seed = 4;
  const auto dev = separable_set(2);
  const auto p0 = init_params(ScorerKind::kMlp, 1, 3, 1);
  const auto a = train_crm(small_log(40), dev, p0, config);
  const auto b = train_crm(small_log(40), dev, p0, config);
  EXPECT_EQ(a.final_params, b.final_params);
  std::ostringstream ha, hb;
  write_history_tsv(a.history, ha);
  write_history_tsv(b.history, hb);
  EXPECT_EQ(ha.str(), hb.str());
}

TEST(TrainCrm, BeatsLoggingPolicyOnSimulatedWorld) {
  SimConfig sim;
  sim.n_queries = 30;
  const auto world = generate_world(sim, 7);
  const auto split = split_queries(world.query_ids(), {0.6, 0.2, 0.2}, 7);
  const auto log = simulate_log(world, world.logging, 8000, 7, split.train);
  const auto dev = supervised_records(world, split.dev, 7);
  TrainConfig config;
  config.learning_rate = 0.01;
  config.epochs = 5;
  config.seed = 7;
  const auto result = train_crm(log, dev, init_params(ScorerKind::kLinear, sim.feature_dim, 0, 7), config);
  EXPECT_LT(true_risk(world, result.params), true_risk(world, world.logging.params));
}

TEST(TrainFullInfo, SeparableToyReachesPerfectMap) {
  const auto train = separable_set(5);
  const auto dev = separable_set(2);
  TrainConfig config;
  config.epochs = 20;
  config.batch_size = 8;
  config.learning_rate = 0.05;
  const auto result = train_full_info(train, dev, init_params(ScorerKind::kLinear, 1, 0, 2), config);
  EXPECT_EQ(result.history.checkpoints[result.best_checkpoint].dev_metrics.map, 1.0);
  EXPECT_EQ(evaluate_policy(result.params, dev, std::vector<int>{5}).map, 1.0);
  EXPECT_TRUE(std::isnan(result.history.checkpoints.back().S));
  // The learned direction scores positives (x = +1) above negatives.
  EXPECT_GT(action_probabilities(result.params, FeatureVector{1.0}).p1,
            action_probabilities(result.params, FeatureVector{-1.0}).p1);
}

TEST(TrainFullInfo, AllZeroLabelsRejected) {
  auto train = separable_set(2);
  for (auto& r : train) {
    r.label = 0;
    r.nrr = 0.0;
  }
  EXPECT_THROW(train_full_info(train, separable_set(1), PolicyParams::zeros(ScorerKind::kLinear, 1, 0),
                               TrainConfig{}),
               ValidationError);
}

TEST(TrainFullInfo, Deterministic) {
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 5;
  config.eval_every = 12;
  const auto train = separable_set(4);
  const auto dev = separable_set(2);
  const auto p0 = init_params(ScorerKind::kMlp, 1, 2, 8);
  const auto a = train_full_info(train, dev, p0, config);
  const auto b = train_full_info(train, dev, p0, config);
  EXPECT_EQ(a.final_params, b.final_params);
  ASSERT_EQ(a.history.checkpoints.size(), b.history.checkpoints.size());
  for (std::size_t i = 0; i < a.history.checkpoints.size(); ++i) {
    EXPECT_EQ(a.history.checkpoints[i].objective, b.history.checkpoints[i].objective);
  }
}

TEST(LambdaSearch, NextLambdaRule) {
  EXPECT_DOUBLE_EQ(next_lambda(0.5, 1.2), 0.45);
  EXPECT_DOUBLE_EQ(next_lambda(0.5, 0.8), 0.55);
  EXPECT_DOUBLE_EQ(next_lambda(0.5, 1.0), 0.55);
}

TEST(LambdaSearch, ProbesMoveByTenPercent) {
  SimConfig sim;
  sim.n_queries = 20;
  const auto world = generate_world(sim, 3);
  const auto split = split_queries(world.query_ids(), {0.6, 0.2, 0.2}, 3);
  const auto log = simulate_log(world, world.logging, 3000, 3, split.train);
  const auto dev = supervised_records(world, split.dev, 3);
  TrainConfig config;
  config.learning_rate = 0.01;
  config.epochs = 2;
  config.max_probes = 4;
  const auto result = lambda_search(log, dev, init_params(ScorerKind::kLinear, sim.feature_dim, 0, 1), config, 1);
  ASSERT_FALSE(result.sweep.empty());
  EXPECT_LE(result.sweep.size(), 4u);
  for (std::size_t i = 0; i + 1 < result.sweep.size(); ++i) {
    const auto& e = result.sweep[i];
    EXPECT_DOUBLE_EQ(result.sweep[i + 1].lambda, next_lambda(e.lambda, e.probe_S));
    EXPECT_FALSE(e.probe_S >= 0.95 && e.probe_S <= 1.05);
  }
  bool found = false;
  double best_metric = -1;
  for (const auto& e : result.sweep) {
    EXPECT_GT(e.lambda, 0.0);
    EXPECT_LE(e.lambda, 1.0);
    found |= e.lambda == result.lambda_star;
    best_metric = std::max(best_metric, e.dev_metric);
  }
  EXPECT_TRUE(found);
  for (const auto& e : result.sweep) {
    if (e.lambda == result.lambda_star) EXPECT_EQ(e.dev_metric, best_metric);
  }
}

TEST(LambdaGrid, OneEntryPerLambda) {
  SimConfig sim;
  sim.n_queries = 20;
  const auto world = generate_world(sim, 5);
  const auto split = split_queries(world.query_ids(), {0.6, 0.2, 0.2}, 5);
  const auto log = simulate_log(world, world.logging, 2000, 5, split.train);
  const auto dev = supervised_records(world, split.dev, 5);
  TrainConfig config;
  config.epochs = 1;
  const std::vector<double> grid{0.2, 0.6};
  const auto result = lambda_grid(log, dev, init_params(ScorerKind::kLinear, sim.feature_dim, 0, 1), config, grid);
  ASSERT_EQ(result.sweep.size(), 2u);
  EXPECT_EQ(result.sweep[0].lambda, 0.2);
  EXPECT_EQ(result.sweep[1].lambda, 0.6);
  EXPECT_TRUE(std::isnan(result.sweep[0].probe_S));
}

TEST(History, TsvRoundTrip) {
  TrainHistory h;
  for (int i = 0; i < 3; ++i) {
    Checkpoint c;
    c.records_seen = i * 100;
    c.objective = -0.1 * i;
    c.S = i == 1 ? std::nan("") : 1.0 + 0.01 * i;
    c.dev_metrics.map = 0.5 + 0.1 * i;
    c.dev_metrics.ndcg_at[10] = 0.4 + 0.1 * i;
    c.dev_metrics.avg_rank = 10.0 - i;
    c.dev_metrics.avg_dcg = 0.3 * i;
    h.checkpoints.push_back(c);
  }
  std::stringstream buffer;
  write_history_tsv(h, buffer);
  const auto back = parse_history_tsv(buffer);
  ASSERT_EQ(back.checkpoints.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back.checkpoints[i].records_seen, i * 100);
    EXPECT_EQ(back.checkpoints[i].dev_metrics.map, h.checkpoints[i].dev_metrics.map);
    EXPECT_EQ(back.checkpoints[i].dev_metrics.avg_rank, h.checkpoints[i].dev_metrics.avg_rank);
  }
  EXPECT_TRUE(std::isnan(back.checkpoints[1].S));
}

}  // namespace
}  // namespace crmltr
