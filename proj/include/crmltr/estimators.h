#ifndef CRMLTR_ESTIMATORS_H_
#define CRMLTR_ESTIMATORS_H_

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>

#include "crmltr/log_data.h"
#include "crmltr/policy.h"

namespace crmltr {

// Counterfactual risk estimates of a target policy pi_w from records logged
// under pi_0, with importance weights w_i = pi_w(a_i | c_i) / p_i.
//
// mean_importance_weight is the SNIPS denominator S = (1/n) sum w_i, whose
// expectation is 1 when the logged propensities are correct. It is reported
// in this normalized form everywhere; the 1/n cancels inside the SNIPS ratio.
struct EstimatorReport {
  double estimate = 0.0;
  std::size_t n = 0;
  double mean_importance_weight = 0.0;
  double effective_sample_size = 0.0;  // (sum w)^2 / sum w^2
};

struct EstimatorOptions {
  // Diagnostics only: caps each importance weight. Off by default.
  std::optional<double> max_weight;
};

// sum delta_i w_i / sum w_i.
EstimatorReport snips(std::span<const BanditRecord> records,
                      const PolicyParams& params,
                      const EstimatorOptions& options = {});

// (1/n) sum delta_i w_i. Unbiased, unbounded.
EstimatorReport ips(std::span<const BanditRecord> records,
                    const PolicyParams& params,
                    const EstimatorOptions& options = {});

// sum over (query_id, product_id, action) groups of mean(delta) * pi_w(a | c).
// Context identity is the (query_id, product_id) pair; the group's context is
// taken from its first record.
EstimatorReport empirical_average(std::span<const BanditRecord> records,
                                  const PolicyParams& params);

double snips_denominator(std::span<const BanditRecord> records,
                         const PolicyParams& params);

// (1/n) sum (delta_i - lambda) w_i, which equals ips - lambda * S.
double lagrangian_risk(std::span<const BanditRecord> records,
                       const PolicyParams& params, double lambda);

// (1/m) sum (delta_i - lambda) / p_i * grad pi_w(a_i | c_i).
PolicyParams lagrangian_gradient(std::span<const BanditRecord> batch,
                                 const PolicyParams& params, double lambda);

// Importance weights in record order.
std::vector<double> importance_weights(std::span<const BanditRecord> records,
                                       const PolicyParams& params,
                                       const EstimatorOptions& options = {});

// Flat key-value text: one "key value" pair per line (estimate, n, S, ESS).
void write_estimator_report(const EstimatorReport& report, std::ostream& sink);

}  // namespace crmltr

#endif  // CRMLTR_ESTIMATORS_H_
