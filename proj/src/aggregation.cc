#include "crmltr/aggregation.h"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "crmltr/errors.h"
#include "crmltr/random.h"
#include "json.hpp"

namespace crmltr {

RelevanceTable aggregate_feedback(std::span<const PairKey> impressions,
                                  std::span<const PairKey> positives,
                                  std::int64_t visibility_threshold) {
  if (visibility_threshold < 1) {
    throw ValidationError("visibility threshold must be at least 1");
  }

  std::map<PairKey, RelevanceEntry> counts;
  for (const auto& key : impressions) ++counts[key].visibility;
  for (const auto& key : positives) ++counts[key].positives;

  RelevanceTable table;
  for (auto& [key, entry] : counts) {
    if (entry.positives > entry.visibility) {
      throw ConsistencyError("pair (" + key.first + ", " + key.second +
                             ") has " + std::to_string(entry.positives) +
                             " positives but visibility " +
                             std::to_string(entry.visibility));
    }
    if (entry.visibility < visibility_threshold) continue;
    entry.rr = static_cast<double>(entry.positives) /
               static_cast<double>(entry.visibility);
    table.emplace(key, entry);
  }

  std::map<std::string, double> max_rr;
  for (const auto& [key, entry] : table) {
    double& current = max_rr[key.first];
    current = std::max(current, entry.rr);
  }
  for (auto& [key, entry] : table) {
    const double query_max = max_rr[key.first];
    // Ties at the max divide to exactly 1.0.
    entry.nrr = query_max > 0.0 ? entry.rr / query_max : 0.0;
    entry.label = graded_label(entry.nrr);
  }
  return table;
}

int graded_label(double nrr) {
  if (!(nrr >= 0.0 && nrr <= 1.0)) {
    throw DomainError("nrr must lie in [0, 1], got " + std::to_string(nrr));
  }
  const double rounded = std::round(nrr * 1e12) / 1e12;
  return static_cast<int>(std::ceil(4.0 * rounded));
}

SupervisedBuild build_supervised(
    const RelevanceTable& table,
    const std::map<std::string, std::set<std::string>>& shown_products,
    const std::map<PairKey, FeatureVector>& contexts, double negative_ratio,
    std::uint64_t seed) {
  if (!(negative_ratio > 0.0)) {
    throw ValidationError("negative_ratio must be positive");
  }

  std::map<std::string, std::vector<std::string>> positives_by_query;
  for (const auto& [key, entry] : table) {
    if (entry.label > 0) positives_by_query[key.first].push_back(key.second);
  }

  SupervisedBuild out;
  Rng rng(seed);
  for (const auto& [query, positive_ids] : positives_by_query) {
    for (const auto& product : positive_ids) {
      const PairKey key{query, product};
      const auto context = contexts.find(key);
      if (context == contexts.end()) {
        throw ValidationError("no context for positive pair (" + query + ", " +
                              product + ")");
      }
      const RelevanceEntry& entry = table.at(key);
      out.records.push_back(
          {query, product, context->second, entry.label, entry.nrr});
    }

    std::vector<std::string> candidates;
    if (const auto shown = shown_products.find(query);
        shown != shown_products.end()) {
      for (const auto& product : shown->second) {
        const PairKey key{query, product};
        const auto entry = table.find(key);
        if (entry == table.end() || entry->second.label != 0) continue;
        if (!contexts.contains(key)) continue;
        candidates.push_back(product);
      }
    }
    if (candidates.empty()) {
      out.warnings.push_back("query " + query +
                             " has no negative candidates; emitted positives "
                             "only");
      continue;
    }

    const auto wanted = static_cast<std::size_t>(std::floor(
        negative_ratio * static_cast<double>(positive_ids.size()) + 1e-9));
    const std::size_t take = std::min(wanted, candidates.size());
    if (take < wanted) {
      out.warnings.push_back("query " + query + " wanted " +
                             std::to_string(wanted) + " negatives but has " +
                             std::to_string(candidates.size()));
    }
    // Partial Fisher-Yates: the first `take` slots become the sample.
    for (std::size_t i = 0; i < take; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.index(candidates.size() - i));
      std::swap(candidates[i], candidates[j]);
    }
    std::vector<std::string> sampled(candidates.begin(),
                                     candidates.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(sampled.begin(), sampled.end());
    for (const auto& product : sampled) {
      const PairKey key{query, product};
      out.records.push_back(
          {query, product, contexts.at(key), 0, table.at(key).nrr});
    }
  }
  return out;
}

void write_relevance_table(const RelevanceTable& table, std::ostream& sink) {
  sink << "query_id\tproduct_id\tvisibility\tpositives\trr\tnrr\tlabel\n";
  for (const auto& [key, entry] : table) {
    sink << key.first << '\t' << key.second << '\t' << entry.visibility << '\t'
         << entry.positives << '\t' << nlohmann::json(entry.rr).dump() << '\t'
         << nlohmann::json(entry.nrr).dump() << '\t' << entry.label << '\n';
  }
}

}  // namespace crmltr
