#ifndef CRMLTR_LOG_DATA_H_
#define CRMLTR_LOG_DATA_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace crmltr {

using FeatureVector = std::vector<double>;

// Smallest propensity accepted from a log. Anything below this is treated as
// a logging error rather than clipped.
inline constexpr double kMinPropensity = 1e-9;

// One logged interaction (c, a, p, delta). delta is the loss: 0 means the
// logging policy's action was right, 1 means it was wrong.
struct BanditRecord {
  std::string query_id;
  std::string product_id;
  FeatureVector features;
  int action = 0;
  double propensity = 1.0;
  int delta = 0;

  friend bool operator==(const BanditRecord&, const BanditRecord&) = default;
};

// Immutable once built; share freely across threads.
struct BanditLog {
  std::vector<BanditRecord> records;
  std::size_t feature_dim = 0;
  std::map<std::string, std::string> metadata;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }

  friend bool operator==(const BanditLog&, const BanditLog&) = default;
};

// A query-product pair with a graded label in {0..4}. nrr is absent for
// datasets that ship labels only.
struct SupervisedRecord {
  std::string query_id;
  std::string product_id;
  FeatureVector features;
  int label = 0;
  std::optional<double> nrr;

  friend bool operator==(const SupervisedRecord&,
                         const SupervisedRecord&) = default;
};

struct QuerySplit {
  std::set<std::string> train;
  std::set<std::string> dev;
  std::set<std::string> test;
};

// Checks one record against the log invariants (finite features of length
// feature_dim, action/delta binary, propensity in [kMinPropensity, 1]).
// Throws ValidationError or DimensionError.
void validate_record(const BanditRecord& record, std::size_t feature_dim);

// Reads the line-delimited JSON log format. Blank lines are skipped; an
// optional first line {"_meta": {...}} carries metadata. Errors carry the
// 1-based line number.
BanditLog parse_bandit_log(std::istream& source);

// Writes the metadata line followed by one line per record. Doubles are
// written in shortest round-trip form, so parse(write(log)) == log.
std::size_t write_bandit_log(const BanditLog& log, std::ostream& sink);

BanditLog read_bandit_log_file(const std::string& path);
std::size_t write_bandit_log_file(const BanditLog& log,
                                  const std::string& path);

// Supervised TSV: header row, then query_id, product_id, label, nrr, f0..fd-1.
// A missing nrr is written as "-".
std::vector<SupervisedRecord> parse_supervised(std::istream& source);
std::size_t write_supervised(std::span<const SupervisedRecord> records,
                             std::ostream& sink);
std::vector<SupervisedRecord> read_supervised_file(const std::string& path);
std::size_t write_supervised_file(std::span<const SupervisedRecord> records,
                                  const std::string& path);

// Seeded shuffle of the sorted query ids, then dev and test take
// floor(ratio * n) each and train takes the rest.
QuerySplit split_queries(const std::set<std::string>& query_ids,
                         const std::array<double, 3>& ratios,
                         std::uint64_t seed);

}  // namespace crmltr

#endif  // CRMLTR_LOG_DATA_H_
