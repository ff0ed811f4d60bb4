#ifndef CRMLTR_EVALUATION_H_
#define CRMLTR_EVALUATION_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crmltr/log_data.h"
#include "crmltr/policy.h"

namespace crmltr {

struct RankedList {
  std::string query_id;
  std::vector<ScoredProduct> items;  // best first
};

// query_id -> product_id -> grade. Unjudged items count as grade 0.
using Qrels = std::map<std::string, std::map<std::string, int>>;

// Gain of a judged item in DCG. kLinear (gain = grade) is what trec_eval's
// ndcg_cut computes; kExponential is 2^grade - 1.
enum class GainType { kLinear, kExponential };

double gain(int grade, GainType type);

struct MetricsReport {
  double map = 0.0;
  double mrr = 0.0;
  std::map<int, double> p_at;
  std::map<int, double> ndcg_at;
  double avg_rank = 0.0;  // NaN when no ranked item is relevant
  double avg_dcg = 0.0;   // NaN when no ranked item is relevant
  std::size_t n_queries = 0;
};

// trec_eval conventions: relevant means grade > 0; the AP denominator and the
// ideal DCG use every judged item of the query, retrieved or not; P@k divides
// by k. Queries without any relevant judged item are left out of MAP, MRR and
// NDCG but still count for P@k.
// Throws ValidationError on empty runs, duplicate products or increasing
// scores within a list.
MetricsReport rank_metrics(std::span<const RankedList> runs, const Qrels& labels,
                           std::span<const int> ks,
                           GainType gain_type = GainType::kLinear);

// Mean 1-based rank over every (query, relevant ranked item) pair.
double average_rank_of_relevant(std::span<const RankedList> runs,
                                const Qrels& labels);

// Mean over queries with a relevant ranked item of the full-list DCG.
double average_dcg_of_relevant(std::span<const RankedList> runs,
                               const Qrels& labels,
                               GainType gain_type = GainType::kLinear);

// "query_id Q0 product_id rank score run_tag", scores with 6 decimals.
std::size_t write_trec_run(std::span<const RankedList> runs,
                           const std::string& run_tag, std::ostream& sink);

// "query_id 0 product_id grade".
std::size_t write_qrels(const Qrels& qrels, std::ostream& sink);

Qrels parse_qrels(std::istream& source);
// Lists are returned in file order within each query.
std::vector<RankedList> parse_trec_run(std::istream& source);

Qrels qrels_from_supervised(std::span<const SupervisedRecord> records);

// Groups records by query and ranks each query's products with the policy.
std::vector<RankedList> rank_supervised(const PolicyParams& params,
                                        std::span<const SupervisedRecord> records);

// Convenience: rank_supervised + rank_metrics against the records' labels.
MetricsReport evaluate_policy(const PolicyParams& params,
                              std::span<const SupervisedRecord> records,
                              std::span<const int> ks,
                              GainType gain_type = GainType::kLinear);

void write_metrics_json(const MetricsReport& report, std::ostream& sink);

struct TrainHistory;

struct LearningCurveRow {
  std::int64_t records_seen = 0;
  double avg_rank = 0.0;
  double avg_dcg = 0.0;
  double map = 0.0;
  double ndcg10 = 0.0;
};

// One row per checkpoint. Throws ValidationError on an empty history.
std::vector<LearningCurveRow> learning_curve(const TrainHistory& history);

// TSV with header records_seen, avg_rank, avg_dcg, MAP, NDCG@10.
void write_learning_curve(std::span<const LearningCurveRow> rows,
                          std::ostream& sink);

}  // namespace crmltr

#endif  // CRMLTR_EVALUATION_H_
