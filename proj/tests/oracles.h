#ifndef CRMLTR_TESTS_ORACLES_H_
#define CRMLTR_TESTS_ORACLES_H_

// Straightforward re-implementations used as references in tests. They share
// no code with the library beyond the data types: forward passes, estimators
// and aggregation are written out directly from their definitions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <tuple>
#include <vector>

#include "crmltr/aggregation.h"
#include "crmltr/log_data.h"
#include "crmltr/policy.h"

namespace crmltr::oracle {

// pi(action | x) from the flat parameter layout.
inline double prob(const PolicyParams& p, const std::vector<double>& x, int action) {
  const std::size_t d = p.feature_dim;
  std::vector<double> input = x;
  std::size_t offset = 0;
  if (p.kind == ScorerKind::kMlp) {
    const std::size_t h = p.hidden;
    std::vector<double> hidden(h);
    for (std::size_t j = 0; j < h; ++j) {
      long double s = p.values[h * d + j];
      for (std::size_t k = 0; k < d; ++k) s += (long double)p.values[j * d + k] * x[k];
      hidden[j] = std::tanh((double)s);
    }
    input = hidden;
    offset = h * d + h;
  }
  const std::size_t n = input.size();
  long double z[2];
  for (int a = 0; a < 2; ++a) {
    z[a] = p.values[offset + 2 * n + a];
    for (std::size_t k = 0; k < n; ++k) z[a] += (long double)p.values[offset + a * n + k] * input[k];
  }
  const long double diff = z[1 - action] - z[action];
  return (double)(1.0L / (1.0L + std::exp(diff)));
}

inline double weight(const PolicyParams& p, const BanditRecord& r) {
  return prob(p, r.features, r.action) / r.propensity;
}

inline double ips(std::span<const BanditRecord> log, const PolicyParams& p) {
  long double s = 0;
  for (const auto& r : log) s += r.delta * (long double)weight(p, r);
  return (double)(s / log.size());
}

inline double mean_weight(std::span<const BanditRecord> log, const PolicyParams& p) {
  long double s = 0;
  for (const auto& r : log) s += weight(p, r);
  return (double)(s / log.size());
}

inline double snips(std::span<const BanditRecord> log, const PolicyParams& p) {
  long double num = 0, den = 0;
  for (const auto& r : log) {
    num += r.delta * (long double)weight(p, r);
    den += weight(p, r);
  }
  return (double)(num / den);
}

inline double lagrangian(std::span<const BanditRecord> log, const PolicyParams& p, double lambda) {
  long double s = 0;
  for (const auto& r : log) s += (r.delta - (long double)lambda) * weight(p, r);
  return (double)(s / log.size());
}

inline double empirical_average(std::span<const BanditRecord> log, const PolicyParams& p) {
  std::map<std::tuple<std::string, std::string, int>, std::pair<long double, int>> groups;
  std::map<std::tuple<std::string, std::string, int>, const BanditRecord*> first;
  for (const auto& r : log) {
    const auto key = std::make_tuple(r.query_id, r.product_id, r.action);
    auto& g = groups[key];
    g.first += r.delta;
    g.second += 1;
    first.try_emplace(key, &r);
  }
  long double total = 0;
  for (const auto& [key, g] : groups) {
    const BanditRecord& r = *first.at(key);
    total += g.first / g.second * prob(p, r.features, r.action);
  }
  return (double)total;
}

// Central differences of f at p, one coordinate at a time.
inline std::vector<double> finite_difference(
    const std::function<double(const PolicyParams&)>& f, const PolicyParams& p,
    double h = 1e-5) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    PolicyParams plus = p, minus = p;
    plus.values[i] += h;
    minus.values[i] -= h;
    out[i] = (f(plus) - f(minus)) / (2 * h);
  }
  return out;
}

// Largest coordinate difference relative to the largest coordinate.
inline double relative_error(std::span<const double> got, std::span<const double> want) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    diff = std::max(diff, std::abs(got[i] - want[i]));
    scale = std::max({scale, std::abs(got[i]), std::abs(want[i])});
  }
  return scale == 0 ? diff : diff / scale;
}

// Aggregation written out per query: filter, rates, max, graded labels with
// the ceiling computed by counting thresholds k/4 crossed.
inline RelevanceTable aggregate(std::span<const PairKey> shows,
                                std::span<const PairKey> positives,
                                std::int64_t threshold) {
  std::map<PairKey, std::int64_t> v, c;
  for (const auto& k : shows) ++v[k];
  for (const auto& k : positives) ++c[k];
  RelevanceTable out;
  std::map<std::string, double> max_rr;
  for (const auto& [k, n] : v) {
    if (n < threshold) continue;
    RelevanceEntry e;
    e.visibility = n;
    e.positives = c.count(k) ? c.at(k) : 0;
    e.rr = double(e.positives) / double(n);
    out[k] = e;
    max_rr[k.first] = std::max(max_rr[k.first], e.rr);
  }
  for (auto& [k, e] : out) {
    const double m = max_rr[k.first];
    e.nrr = m > 0 ? e.rr / m : 0.0;
    int label = 0;
    for (int step = 0; step < 4; ++step) {
      if (e.nrr * 4 > step + 1e-9) label = step + 1;
    }
    e.label = label;
  }
  return out;
}

}  // namespace crmltr::oracle

#endif  // CRMLTR_TESTS_ORACLES_H_
