#include "crmltr/estimators.h"

#include <algorithm>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "crmltr/errors.h"
#include "crmltr/numeric.h"
#include "json.hpp"

namespace crmltr {

namespace {

void require_records(std::span<const BanditRecord> records) {
  if (records.empty()) throw ValidationError("estimator needs a non-empty log");
}

EstimatorReport weight_summary(std::span<const double> weights) {
  std::vector<double> squares(weights.size());
  std::transform(weights.begin(), weights.end(), squares.begin(),
                 [](double w) { return w * w; });
  const double total = pairwise_sum(weights);
  const double total_sq = pairwise_sum(squares);
  EstimatorReport report;
  report.n = weights.size();
  report.mean_importance_weight = total / static_cast<double>(weights.size());
  report.effective_sample_size = total_sq > 0.0 ? total * total / total_sq : 0.0;
  return report;
}

}  // namespace

std::vector<double> importance_weights(std::span<const BanditRecord> records,
                                       const PolicyParams& params,
                                       const EstimatorOptions& options) {
  std::vector<double> weights;
  weights.reserve(records.size());
  for (const auto& r : records) {
    if (!(r.propensity > 0.0)) {
      throw ValidationError("record with non-positive propensity");
    }
    double w = action_probabilities(params, r.features)[r.action] / r.propensity;
    if (options.max_weight) w = std::min(w, *options.max_weight);
    weights.push_back(w);
  }
  return weights;
}

EstimatorReport snips(std::span<const BanditRecord> records,
                      const PolicyParams& params,
                      const EstimatorOptions& options) {
  require_records(records);
  const auto weights = importance_weights(records, params, options);
  std::vector<double> losses(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    losses[i] = records[i].delta * weights[i];
  }
  EstimatorReport report = weight_summary(weights);
  report.estimate = pairwise_sum(losses) / pairwise_sum(weights);
  return report;
}

EstimatorReport ips(std::span<const BanditRecord> records,
                    const PolicyParams& params,
                    const EstimatorOptions& options) {
  require_records(records);
  const auto weights = importance_weights(records, params, options);
  std::vector<double> losses(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    losses[i] = records[i].delta * weights[i];
  }
  EstimatorReport report = weight_summary(weights);
  report.estimate = pairwise_sum(losses) / static_cast<double>(records.size());
  return report;
}

EstimatorReport empirical_average(std::span<const BanditRecord> records,
                                  const PolicyParams& params) {
  require_records(records);
  struct Group {
    std::size_t first = 0;
    std::vector<double> losses;
  };
  std::map<std::tuple<std::string, std::string, int>, Group> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto [it, inserted] =
        groups.try_emplace({r.query_id, r.product_id, r.action}, Group{i, {}});
    it->second.losses.push_back(static_cast<double>(r.delta));
  }

  std::vector<double> terms;
  terms.reserve(groups.size());
  for (const auto& [key, group] : groups) {
    const auto& r = records[group.first];
    const double mean_loss = pairwise_sum(group.losses) /
                             static_cast<double>(group.losses.size());
    terms.push_back(mean_loss * action_probabilities(params, r.features)[r.action]);
  }

  EstimatorReport report =
      weight_summary(importance_weights(records, params));
  report.estimate = pairwise_sum(terms);
  return report;
}

double snips_denominator(std::span<const BanditRecord> records,
                         const PolicyParams& params) {
  require_records(records);
  const auto weights = importance_weights(records, params);
  return pairwise_sum(weights) / static_cast<double>(records.size());
}

double lagrangian_risk(std::span<const BanditRecord> records,
                       const PolicyParams& params, double lambda) {
  require_records(records);
  const auto weights = importance_weights(records, params);
  std::vector<double> terms(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    terms[i] = (records[i].delta - lambda) * weights[i];
  }
  return pairwise_sum(terms) / static_cast<double>(records.size());
}

PolicyParams lagrangian_gradient(std::span<const BanditRecord> batch,
                                 const PolicyParams& params, double lambda) {
  require_records(batch);
  const std::size_t m = batch.size();
  // Per-coordinate pairwise reduction over the batch keeps the result
  // independent of accumulation order.
  std::vector<std::vector<double>> columns(params.size(),
                                           std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto& r = batch[i];
    if (!(r.propensity > 0.0)) {
      throw ValidationError("record with non-positive propensity");
    }
    const double coefficient = (r.delta - lambda) / r.propensity;
    const auto g = grad_action_prob(params, r.features, r.action);
    for (std::size_t k = 0; k < g.size(); ++k) {
      columns[k][i] = coefficient * g.values[k];
    }
  }
  PolicyParams grad =
      PolicyParams::zeros(params.kind, params.feature_dim, params.hidden);
  grad.seed = params.seed;
  for (std::size_t k = 0; k < grad.size(); ++k) {
    grad.values[k] = pairwise_sum(columns[k]) / static_cast<double>(m);
  }
  return grad;
}

void write_estimator_report(const EstimatorReport& report, std::ostream& sink) {
  auto number = [](double v) { return nlohmann::json(v).dump(); };
  sink << "estimate " << number(report.estimate) << '\n'
       << "n " << report.n << '\n'
       << "S " << number(report.mean_importance_weight) << '\n'
       << "ESS " << number(report.effective_sample_size) << '\n';
}

}  // namespace crmltr
