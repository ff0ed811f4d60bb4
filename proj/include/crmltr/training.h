#ifndef CRMLTR_TRAINING_H_
#define CRMLTR_TRAINING_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crmltr/evaluation.h"
#include "crmltr/history.h"
#include "crmltr/log_data.h"
#include "crmltr/policy.h"

namespace crmltr {

enum class DevMetric { kMap, kNdcg10 };

// Which counterfactual objective train_crm minimizes.
//   kSnipsLagrangian: (1/n) sum (delta_i - lambda) w_i
//   kIps:             (1/n) sum delta_i w_i
//   kEmpiricalAverage: sum over (query, product, action) groups of
//                      mean(delta) * pi_w(a | c)
enum class CrmObjective { kSnipsLagrangian, kIps, kEmpiricalAverage };

std::string to_string(DevMetric metric);
DevMetric dev_metric_from_string(const std::string& name);
std::string to_string(CrmObjective objective);
CrmObjective crm_objective_from_string(const std::string& name);

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double lambda = 0.5;
  std::int64_t eval_every = 10000;  // records between checkpoints
  DevMetric dev_metric = DevMetric::kMap;
  CrmObjective objective = CrmObjective::kSnipsLagrangian;
  std::size_t max_probes = 10;  // lambda_search only

  // Throws ValidationError when a field is out of range.
  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

// Bias-corrected Adam, in place. A fresh state (empty moments) is sized on
// first use. Throws DimensionError on shape mismatch.
void adam_step(PolicyParams& params, const PolicyParams& grads,
               AdamState& state, const TrainConfig& config);

struct TrainResult {
  PolicyParams params;       // parameters of the best dev checkpoint
  PolicyParams final_params;  // parameters after the last optimizer step
  TrainHistory history;
  std::size_t best_checkpoint = 0;
  std::int64_t optimizer_steps = 0;
};

// Minibatch Adam on the configured counterfactual objective. The whole log is
// reshuffled each epoch; a checkpoint is taken before the first step, every
// eval_every records and after the last step. Returns the checkpoint with the
// best dev metric (earliest on ties).
TrainResult train_crm(const BanditLog& train_log,
                      std::span<const SupervisedRecord> dev,
                      const PolicyParams& params0, const TrainConfig& config);

// Weighted binary cross-entropy of pi(1 | c) against label > 0 with
// per-record weight (1 + label) / 5. Same checkpointing and selection as
// train_crm; checkpoint S is NaN.
TrainResult train_full_info(std::span<const SupervisedRecord> train,
                            std::span<const SupervisedRecord> dev,
                            const PolicyParams& params0,
                            const TrainConfig& config);

// Objective value of the configured CRM objective on a whole log.
double crm_objective_value(const BanditLog& log, const PolicyParams& params,
                           const TrainConfig& config);

struct SweepEntry {
  double lambda = 0.0;
  double probe_S = 0.0;  // S after the probe run, NaN if lambda was not probed
  double S = 0.0;        // S of the final parameters after full training
  double selected_S = 0.0;  // S of the dev-selected checkpoint
  double map = 0.0;
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  double dev_metric = 0.0;
};

struct LambdaSweepResult {
  double lambda_star = 0.0;
  TrainResult best;
  std::vector<SweepEntry> sweep;
};

// Next lambda of the S-guided search: 10% down when S > 1, else 10% up.
double next_lambda(double lambda, double S);

// Fully trains at every lambda in grid and keeps the dev-best one.
LambdaSweepResult lambda_grid(const BanditLog& train_log,
                              std::span<const SupervisedRecord> dev,
                              const PolicyParams& params0,
                              const TrainConfig& config,
                              std::span<const double> grid);

// Starts at a seeded random lambda in (0, 1], trains probe_epochs from params0
// and moves lambda with next_lambda until S lands in [0.95, 1.05], max_probes
// is reached, or the next lambda would leave [0, 1]. Every probed lambda is
// then trained for config.epochs and the dev-best one is returned.
LambdaSweepResult lambda_search(const BanditLog& train_log,
                                std::span<const SupervisedRecord> dev,
                                const PolicyParams& params0,
                                const TrainConfig& config,
                                std::size_t probe_epochs = 2);

}  // namespace crmltr

#endif  // CRMLTR_TRAINING_H_
