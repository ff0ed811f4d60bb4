#include "crmltr/evaluation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "crmltr/errors.h"
#include "crmltr/history.h"
#include "crmltr/numeric.h"
#include "json.hpp"

namespace crmltr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::map<std::string, int>& judged_for(const Qrels& labels,
                                             const std::string& query) {
  static const std::map<std::string, int> kEmpty;
  const auto it = labels.find(query);
  return it == labels.end() ? kEmpty : it->second;
}

int grade_of(const std::map<std::string, int>& judged,
             const std::string& product) {
  const auto it = judged.find(product);
  return it == judged.end() ? 0 : it->second;
}

void validate_list(const RankedList& list) {
  if (list.items.empty()) {
    throw ValidationError("ranked list for query " + list.query_id +
                          " is empty");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < list.items.size(); ++i) {
    if (!seen.insert(list.items[i].product_id).second) {
      throw ValidationError("duplicate product " + list.items[i].product_id +
                            " in ranked list for query " + list.query_id);
    }
    if (i > 0 && list.items[i].score > list.items[i - 1].score) {
      throw ValidationError("scores increase within ranked list for query " +
                            list.query_id);
    }
  }
}

double discount(std::size_t rank) {
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

double dcg(std::span<const int> grades, std::size_t k, GainType type) {
  std::vector<double> terms;
  const std::size_t n = std::min(k, grades.size());
  for (std::size_t i = 0; i < n; ++i) {
    terms.push_back(gain(grades[i], type) * discount(i + 1));
  }
  return pairwise_sum(terms);
}

double mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return pairwise_sum(values) / static_cast<double>(values.size());
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  return nlohmann::json(v).dump();
}

}  // namespace

double gain(int grade, GainType type) {
  if (grade <= 0) return 0.0;
  return type == GainType::kLinear ? static_cast<double>(grade)
                                   : std::exp2(grade) - 1.0;
}

MetricsReport rank_metrics(std::span<const RankedList> runs, const Qrels& labels,
                           std::span<const int> ks, GainType gain_type) {
  if (runs.empty()) throw ValidationError("no ranked lists to evaluate");
  for (int k : ks) {
    if (k < 1) throw ValidationError("metric cutoff k must be >= 1");
  }

  std::vector<double> ap, rr;
  std::map<int, std::vector<double>> precision, ndcg;
  for (const auto& list : runs) {
    validate_list(list);
    const auto& judged = judged_for(labels, list.query_id);

    std::vector<int> grades;
    grades.reserve(list.items.size());
    for (const auto& item : list.items) {
      grades.push_back(grade_of(judged, item.product_id));
    }

    for (int k : ks) {
      const auto cutoff = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                grades.size());
      const auto hits = std::count_if(grades.begin(), grades.begin() + static_cast<std::ptrdiff_t>(cutoff),
                                      [](int g) { return g > 0; });
      precision[k].push_back(static_cast<double>(hits) / k);
    }

    std::vector<int> ideal;
    for (const auto& [product, grade] : judged) {
      if (grade > 0) ideal.push_back(grade);
    }
    if (ideal.empty()) continue;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());

    double precision_sum = 0.0;
    std::size_t hits = 0;
    double reciprocal = 0.0;
    for (std::size_t i = 0; i < grades.size(); ++i) {
      if (grades[i] <= 0) continue;
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(i + 1);
      if (hits == 1) reciprocal = 1.0 / static_cast<double>(i + 1);
    }
    ap.push_back(precision_sum / static_cast<double>(ideal.size()));
    rr.push_back(reciprocal);
    for (int k : ks) {
      const auto cutoff = static_cast<std::size_t>(k);
      ndcg[k].push_back(dcg(grades, cutoff, gain_type) /
                        dcg(ideal, cutoff, gain_type));
    }
  }

  MetricsReport report;
  report.n_queries = runs.size();
  report.map = mean(ap);
  report.mrr = mean(rr);
  for (int k : ks) {
    report.p_at[k] = mean(precision[k]);
    report.ndcg_at[k] = mean(ndcg[k]);
  }
  bool any_relevant = false;
  for (const auto& list : runs) {
    const auto& judged = judged_for(labels, list.query_id);
    for (const auto& item : list.items) {
      if (grade_of(judged, item.product_id) > 0) any_relevant = true;
    }
  }
  if (any_relevant) {
    report.avg_rank = average_rank_of_relevant(runs, labels);
    report.avg_dcg = average_dcg_of_relevant(runs, labels, gain_type);
  } else {
    report.avg_rank = kNaN;
    report.avg_dcg = kNaN;
  }
  return report;
}

double average_rank_of_relevant(std::span<const RankedList> runs,
                                const Qrels& labels) {
  std::vector<double> ranks;
  for (const auto& list : runs) {
    const auto& judged = judged_for(labels, list.query_id);
    for (std::size_t i = 0; i < list.items.size(); ++i) {
      if (grade_of(judged, list.items[i].product_id) > 0) {
        ranks.push_back(static_cast<double>(i + 1));
      }
    }
  }
  if (ranks.empty()) throw ValidationError("no relevant ranked items");
  return mean(ranks);
}

double average_dcg_of_relevant(std::span<const RankedList> runs,
                               const Qrels& labels, GainType gain_type) {
  std::vector<double> values;
  for (const auto& list : runs) {
    const auto& judged = judged_for(labels, list.query_id);
    std::vector<int> grades;
    bool any = false;
    for (const auto& item : list.items) {
      grades.push_back(grade_of(judged, item.product_id));
      any = any || grades.back() > 0;
    }
    if (any) values.push_back(dcg(grades, grades.size(), gain_type));
  }
  if (values.empty()) throw ValidationError("no relevant ranked items");
  return mean(values);
}

std::size_t write_trec_run(std::span<const RankedList> runs,
                           const std::string& run_tag, std::ostream& sink) {
  std::size_t lines = 0;
  char score[64];
  for (const auto& list : runs) {
    if (list.items.empty()) {
      throw ValidationError("ranked list for query " + list.query_id +
                            " is empty");
    }
    for (std::size_t i = 0; i < list.items.size(); ++i) {
      std::snprintf(score, sizeof(score), "%.6f", list.items[i].score);
      sink << list.query_id << " Q0 " << list.items[i].product_id << ' '
           << (i + 1) << ' ' << score << ' ' << run_tag << '\n';
      ++lines;
    }
  }
  sink.flush();
  if (!sink) throw IoError("write failure on run stream");
  return lines;
}

std::size_t write_qrels(const Qrels& qrels, std::ostream& sink) {
  std::size_t lines = 0;
  for (const auto& [query, judged] : qrels) {
    for (const auto& [product, grade] : judged) {
      sink << query << " 0 " << product << ' ' << grade << '\n';
      ++lines;
    }
  }
  sink.flush();
  if (!sink) throw IoError("write failure on qrels stream");
  return lines;
}

Qrels parse_qrels(std::istream& source) {
  Qrels qrels;
  std::string text;
  std::size_t line = 0;
  while (std::getline(source, text)) {
    ++line;
    std::istringstream fields(text);
    std::string query, iteration, product;
    int grade = 0;
    if (!(fields >> query)) continue;
    if (!(fields >> iteration >> product >> grade)) {
      throw ParseError(line, "expected 'query_id iter product_id grade'");
    }
    qrels[query][product] = grade;
  }
  return qrels;
}

std::vector<RankedList> parse_trec_run(std::istream& source) {
  std::vector<RankedList> runs;
  std::map<std::string, std::size_t> index;
  std::string text;
  std::size_t line = 0;
  while (std::getline(source, text)) {
    ++line;
    std::istringstream fields(text);
    std::string query, q0, product, tag;
    std::size_t rank = 0;
    double score = 0.0;
    if (!(fields >> query)) continue;
    if (!(fields >> q0 >> product >> rank >> score >> tag)) {
      throw ParseError(line, "expected 'query_id Q0 product_id rank score tag'");
    }
    auto [it, inserted] = index.try_emplace(query, runs.size());
    if (inserted) runs.push_back({query, {}});
    runs[it->second].items.push_back({product, score});
  }
  return runs;
}

Qrels qrels_from_supervised(std::span<const SupervisedRecord> records) {
  Qrels qrels;
  for (const auto& r : records) qrels[r.query_id][r.product_id] = r.label;
  return qrels;
}

std::vector<RankedList> rank_supervised(
    const PolicyParams& params, std::span<const SupervisedRecord> records) {
  std::map<std::string, std::vector<Candidate>> by_query;
  for (const auto& r : records) {
    by_query[r.query_id].push_back({r.product_id, r.features});
  }
  std::vector<RankedList> runs;
  runs.reserve(by_query.size());
  for (const auto& [query, candidates] : by_query) {
    runs.push_back({query, rank_products(params, candidates)});
  }
  return runs;
}

MetricsReport evaluate_policy(const PolicyParams& params,
                              std::span<const SupervisedRecord> records,
                              std::span<const int> ks, GainType gain_type) {
  const auto runs = rank_supervised(params, records);
  return rank_metrics(runs, qrels_from_supervised(records), ks, gain_type);
}

void write_metrics_json(const MetricsReport& report, std::ostream& sink) {
  nlohmann::json out;
  out["map"] = report.map;
  out["mrr"] = report.mrr;
  for (const auto& [k, v] : report.p_at) out["P@" + std::to_string(k)] = v;
  for (const auto& [k, v] : report.ndcg_at) out["NDCG@" + std::to_string(k)] = v;
  out["avg_rank"] = std::isnan(report.avg_rank) ? nlohmann::json() : nlohmann::json(report.avg_rank);
  out["avg_dcg"] = std::isnan(report.avg_dcg) ? nlohmann::json() : nlohmann::json(report.avg_dcg);
  out["n_queries"] = report.n_queries;
  sink << out.dump(2) << '\n';
}

std::vector<LearningCurveRow> learning_curve(const TrainHistory& history) {
  if (history.checkpoints.empty()) {
    throw ValidationError("learning curve needs at least one checkpoint");
  }
  std::vector<LearningCurveRow> rows;
  rows.reserve(history.checkpoints.size());
  for (const auto& c : history.checkpoints) {
    const auto ndcg10 = c.dev_metrics.ndcg_at.find(10);
    rows.push_back({c.records_seen, c.dev_metrics.avg_rank,
                    c.dev_metrics.avg_dcg, c.dev_metrics.map,
                    ndcg10 == c.dev_metrics.ndcg_at.end() ? kNaN : ndcg10->second});
  }
  return rows;
}

void write_learning_curve(std::span<const LearningCurveRow> rows,
                          std::ostream& sink) {
  sink << "records_seen\tavg_rank\tavg_dcg\tMAP\tNDCG@10\n";
  for (const auto& row : rows) {
    sink << row.records_seen << '\t' << format_number(row.avg_rank) << '\t'
         << format_number(row.avg_dcg) << '\t' << format_number(row.map) << '\t'
         << format_number(row.ndcg10) << '\n';
  }
}

void write_history_tsv(const TrainHistory& history, std::ostream& sink) {
  sink << "records_seen\tobjective\tS\tMAP\tNDCG@10\tavg_rank\tavg_dcg\n";
  for (const auto& c : history.checkpoints) {
    const auto ndcg10 = c.dev_metrics.ndcg_at.find(10);
    sink << c.records_seen << '\t' << format_number(c.objective) << '\t'
         << format_number(c.S) << '\t' << format_number(c.dev_metrics.map)
         << '\t'
         << format_number(ndcg10 == c.dev_metrics.ndcg_at.end() ? kNaN
                                                                 : ndcg10->second)
         << '\t' << format_number(c.dev_metrics.avg_rank) << '\t'
         << format_number(c.dev_metrics.avg_dcg) << '\n';
  }
}

TrainHistory parse_history_tsv(std::istream& source) {
  TrainHistory history;
  std::string text;
  std::size_t line = 0;
  if (!std::getline(source, text) || text.rfind("records_seen\t", 0) != 0) {
    throw ParseError(1, "history TSV must start with a records_seen header");
  }
  ++line;
  while (std::getline(source, text)) {
    ++line;
    if (text.empty()) continue;
    std::istringstream fields(text);
    std::string cols[7];
    for (auto& col : cols) {
      if (!std::getline(fields, col, '\t')) {
        throw ParseError(line, "history row needs 7 columns");
      }
    }
    try {
      Checkpoint c;
      c.records_seen = std::stoll(cols[0]);
      c.objective = std::stod(cols[1]);
      c.S = std::stod(cols[2]);
      c.dev_metrics.map = std::stod(cols[3]);
      c.dev_metrics.ndcg_at[10] = std::stod(cols[4]);
      c.dev_metrics.avg_rank = std::stod(cols[5]);
      c.dev_metrics.avg_dcg = std::stod(cols[6]);
      if (!history.checkpoints.empty() &&
          c.records_seen <= history.checkpoints.back().records_seen) {
        throw ParseError(line, "records_seen must be strictly increasing");
      }
      history.checkpoints.push_back(std::move(c));
    } catch (const std::invalid_argument&) {
      throw ParseError(line, "non-numeric history field");
    }
  }
  return history;
}

}  // namespace crmltr
