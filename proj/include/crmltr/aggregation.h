#ifndef CRMLTR_AGGREGATION_H_
#define CRMLTR_AGGREGATION_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crmltr/log_data.h"

namespace crmltr {

using PairKey = std::pair<std::string, std::string>;  // (query_id, product_id)

inline constexpr std::int64_t kDefaultVisibilityThreshold = 50;
inline constexpr double kDefaultNegativeRatio = 4.0;

struct RelevanceEntry {
  std::int64_t visibility = 0;
  std::int64_t positives = 0;
  double rr = 0.0;   // positives / visibility
  double nrr = 0.0;  // rr / max rr of the query, or 0 when that max is 0
  int label = 0;     // graded_label(nrr)
};

// Ordered by (query_id, product_id), which fixes the iteration order of every
// downstream step.
using RelevanceTable = std::map<PairKey, RelevanceEntry>;

// Counts impressions and positives per pair, drops pairs seen fewer than
// visibility_threshold times, and derives rr, nrr and labels.
// Throws ConsistencyError if a pair has more positives than impressions and
// ValidationError if the threshold is below 1.
RelevanceTable aggregate_feedback(std::span<const PairKey> impressions,
                                  std::span<const PairKey> positives,
                                  std::int64_t visibility_threshold =
                                      kDefaultVisibilityThreshold);

// ceil(4 * nrr) after rounding nrr to 12 decimals. Throws DomainError when
// nrr is outside [0, 1].
int graded_label(double nrr);

struct SupervisedBuild {
  std::vector<SupervisedRecord> records;
  std::vector<std::string> warnings;
};

// Keeps every pair with label > 0 and, per query, samples
// floor(negative_ratio * positives) label-0 pairs without replacement from the
// products shown for that query that survived the visibility filter and have
// a context. Queries are processed in sorted order with one seeded stream.
SupervisedBuild build_supervised(
    const RelevanceTable& table,
    const std::map<std::string, std::set<std::string>>& shown_products,
    const std::map<PairKey, FeatureVector>& contexts,
    double negative_ratio = kDefaultNegativeRatio, std::uint64_t seed = 0);

// One row per table entry: query_id, product_id, visibility, positives, rr,
// nrr, label.
void write_relevance_table(const RelevanceTable& table, std::ostream& sink);

}  // namespace crmltr

#endif  // CRMLTR_AGGREGATION_H_
