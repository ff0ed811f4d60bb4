#ifndef CRMLTR_HISTORY_H_
#define CRMLTR_HISTORY_H_

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "crmltr/evaluation.h"

namespace crmltr {

// One pause in training: dev metrics of the current parameters, the SNIPS
// denominator S on the training log (NaN for Full-Info runs) and the training
// objective.
struct Checkpoint {
  std::int64_t records_seen = 0;
  MetricsReport dev_metrics;
  double S = 0.0;
  double objective = 0.0;
};

struct TrainHistory {
  std::vector<Checkpoint> checkpoints;  // records_seen strictly increasing
};

// TSV with header records_seen, objective, S, MAP, NDCG@10, avg_rank, avg_dcg.
void write_history_tsv(const TrainHistory& history, std::ostream& sink);
TrainHistory parse_history_tsv(std::istream& source);

}  // namespace crmltr

#endif  // CRMLTR_HISTORY_H_
