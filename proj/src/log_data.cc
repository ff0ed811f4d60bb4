#include "crmltr/log_data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "crmltr/aggregation.h"
#include "crmltr/errors.h"
#include "crmltr/random.h"
#include "json.hpp"

namespace crmltr {

namespace {

using json = nlohmann::json;

int read_binary_field(const json& object, const char* key, std::size_t line) {
  const auto it = object.find(key);
  if (it == object.end()) {
    throw ParseError(line, std::string("missing key '") + key + "'");
  }
  if (!it->is_number_integer()) {
    throw ParseError(line, std::string("'") + key + "' must be 0 or 1");
  }
  const auto value = it->get<std::int64_t>();
  if (value != 0 && value != 1) {
    throw ValidationError("line " + std::to_string(line) + ": '" + key +
                          "' must be 0 or 1, got " + std::to_string(value));
  }
  return static_cast<int>(value);
}

std::string read_string_field(const json& object, const char* key,
                              std::size_t line) {
  const auto it = object.find(key);
  if (it == object.end() || !it->is_string()) {
    throw ParseError(line, std::string("missing string key '") + key + "'");
  }
  return it->get<std::string>();
}

BanditRecord record_from_json(const json& object, std::size_t line) {
  BanditRecord record;
  record.query_id = read_string_field(object, "query_id", line);
  record.product_id = read_string_field(object, "product_id", line);

  const auto features = object.find("features");
  if (features == object.end() || !features->is_array()) {
    throw ParseError(line, "missing array key 'features'");
  }
  record.features.reserve(features->size());
  for (const auto& value : *features) {
    if (!value.is_number()) throw ParseError(line, "non-numeric feature");
    record.features.push_back(value.get<double>());
  }

  record.action = read_binary_field(object, "action", line);
  record.delta = read_binary_field(object, "delta", line);

  const auto propensity = object.find("propensity");
  if (propensity == object.end() || !propensity->is_number()) {
    throw ParseError(line, "missing numeric key 'propensity'");
  }
  record.propensity = propensity->get<double>();
  return record;
}

json record_to_json(const BanditRecord& record) {
  json object;
  object["query_id"] = record.query_id;
  object["product_id"] = record.product_id;
  object["features"] = record.features;
  object["action"] = record.action;
  object["propensity"] = record.propensity;
  object["delta"] = record.delta;
  return object;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

double parse_double(const std::string& text, std::size_t line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "not a number: '" + text + "'");
  }
  if (used != text.size()) {
    throw ParseError(line, "not a number: '" + text + "'");
  }
  return value;
}

std::string format_double(double value) {
  // nlohmann's dump gives the shortest representation that round-trips.
  return json(value).dump();
}

}  // namespace

void validate_record(const BanditRecord& record, std::size_t feature_dim) {
  if (record.features.size() != feature_dim) {
    throw DimensionError("record (" + record.query_id + ", " +
                         record.product_id + ") has " +
                         std::to_string(record.features.size()) +
                         " features, expected " + std::to_string(feature_dim));
  }
  for (double v : record.features) {
    if (!std::isfinite(v)) throw ValidationError("non-finite feature value");
  }
  if (record.action != 0 && record.action != 1) {
    throw ValidationError("action must be 0 or 1");
  }
  if (record.delta != 0 && record.delta != 1) {
    throw ValidationError("delta must be 0 or 1");
  }
  if (!(record.propensity >= kMinPropensity && record.propensity <= 1.0)) {
    std::ostringstream message;
    message << "propensity " << record.propensity << " outside ["
            << kMinPropensity << ", 1]";
    throw ValidationError(message.str());
  }
}

BanditLog parse_bandit_log(std::istream& source) {
  BanditLog log;
  std::optional<std::size_t> declared_dim;
  bool seen_content = false;
  std::string text;
  std::size_t line = 0;
  while (std::getline(source, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;

    json object;
    try {
      object = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line, std::string("malformed JSON: ") + e.what());
    }
    if (!object.is_object()) throw ParseError(line, "expected a JSON object");

    if (object.contains("_meta")) {
      if (seen_content) {
        throw ParseError(line, "metadata must be the first line");
      }
      seen_content = true;
      const auto& meta = object["_meta"];
      if (!meta.is_object()) throw ParseError(line, "'_meta' must be an object");
      for (const auto& [key, value] : meta.items()) {
        if (!value.is_string()) {
          throw ParseError(line, "metadata value for '" + key +
                                     "' must be a string");
        }
        log.metadata[key] = value.get<std::string>();
      }
      if (object.contains("feature_dim")) {
        if (!object["feature_dim"].is_number_unsigned()) {
          throw ParseError(line, "'feature_dim' must be a non-negative integer");
        }
        declared_dim = object["feature_dim"].get<std::size_t>();
      }
      continue;
    }
    seen_content = true;

    BanditRecord record = record_from_json(object, line);
    if (log.records.empty()) {
      log.feature_dim = record.features.size();
      if (declared_dim && *declared_dim != log.feature_dim) {
        throw DimensionError("line " + std::to_string(line) +
                             ": metadata declares feature_dim " +
                             std::to_string(*declared_dim) + " but record has " +
                             std::to_string(log.feature_dim));
      }
    }
    try {
      validate_record(record, log.feature_dim);
    } catch (const DimensionError& e) {
      throw DimensionError("line " + std::to_string(line) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line) + ": " + e.what());
    }
    log.records.push_back(std::move(record));
  }
  if (source.bad()) throw IoError("read failure on bandit log stream");
  if (log.records.empty() && declared_dim) log.feature_dim = *declared_dim;
  return log;
}

std::size_t write_bandit_log(const BanditLog& log, std::ostream& sink) {
  json meta;
  meta["_meta"] = json::object();
  for (const auto& [key, value] : log.metadata) meta["_meta"][key] = value;
  meta["feature_dim"] = log.feature_dim;
  sink << meta.dump() << '\n';
  for (const auto& record : log.records) {
    sink << record_to_json(record).dump() << '\n';
  }
  sink.flush();
  if (!sink) throw IoError("write failure on bandit log stream");
  return log.records.size();
}

BanditLog read_bandit_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_bandit_log(in);
}

std::size_t write_bandit_log_file(const BanditLog& log,
                                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return write_bandit_log(log, out);
}

std::vector<SupervisedRecord> parse_supervised(std::istream& source) {
  std::vector<SupervisedRecord> records;
  std::string text;
  std::size_t line = 0;
  if (!std::getline(source, text)) throw ParseError(1, "missing header row");
  ++line;
  if (!text.empty() && text.back() == '\r') text.pop_back();
  const auto header = split_tabs(text);
  if (header.size() < 4 || header[0] != "query_id" ||
      header[1] != "product_id" || header[2] != "label" || header[3] != "nrr") {
    throw ParseError(line,
                     "header must start with query_id, product_id, label, nrr");
  }
  const std::size_t dim = header.size() - 4;

  while (std::getline(source, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    const auto fields = split_tabs(text);
    if (fields.size() != header.size()) {
      throw DimensionError("line " + std::to_string(line) + ": expected " +
                           std::to_string(header.size()) + " columns, got " +
                           std::to_string(fields.size()));
    }
    SupervisedRecord record;
    record.query_id = fields[0];
    record.product_id = fields[1];
    const double label = parse_double(fields[2], line);
    if (label != std::floor(label) || label < 0 || label > 4) {
      throw ValidationError("line " + std::to_string(line) +
                            ": label must be an integer in [0, 4]");
    }
    record.label = static_cast<int>(label);
    if (fields[3] != "-") {
      record.nrr = parse_double(fields[3], line);
      int expected = 0;
      try {
        expected = graded_label(*record.nrr);
      } catch (const DomainError& e) {
        throw ValidationError("line " + std::to_string(line) + ": " + e.what());
      }
      if (expected != record.label) {
        throw ValidationError("line " + std::to_string(line) + ": label " +
                              std::to_string(record.label) +
                              " disagrees with nrr (expected " +
                              std::to_string(expected) + ")");
      }
    }
    record.features.reserve(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      const double v = parse_double(fields[4 + i], line);
      if (!std::isfinite(v)) {
        throw ValidationError("line " + std::to_string(line) +
                              ": non-finite feature value");
      }
      record.features.push_back(v);
    }
    records.push_back(std::move(record));
  }
  if (source.bad()) throw IoError("read failure on supervised stream");
  return records;
}

std::size_t write_supervised(std::span<const SupervisedRecord> records,
                             std::ostream& sink) {
  const std::size_t dim = records.empty() ? 0 : records.front().features.size();
  sink << "query_id\tproduct_id\tlabel\tnrr";
  for (std::size_t i = 0; i < dim; ++i) sink << "\tf" << i;
  sink << '\n';
  for (const auto& record : records) {
    if (record.features.size() != dim) {
      throw DimensionError("supervised records have mixed feature lengths");
    }
    sink << record.query_id << '\t' << record.product_id << '\t'
         << record.label << '\t'
         << (record.nrr ? format_double(*record.nrr) : std::string("-"));
    for (double v : record.features) sink << '\t' << format_double(v);
    sink << '\n';
  }
  sink.flush();
  if (!sink) throw IoError("write failure on supervised stream");
  return records.size();
}

std::vector<SupervisedRecord> read_supervised_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_supervised(in);
}

std::size_t write_supervised_file(std::span<const SupervisedRecord> records,
                                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return write_supervised(records, out);
}

QuerySplit split_queries(const std::set<std::string>& query_ids,
                         const std::array<double, 3>& ratios,
                         std::uint64_t seed) {
  if (query_ids.empty()) throw ValidationError("cannot split an empty query set");
  for (double r : ratios) {
    if (!(r > 0.0)) throw ValidationError("split ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }

  std::vector<std::string> order(query_ids.begin(), query_ids.end());
  Rng rng(seed);
  rng.shuffle(order);

  const auto n = static_cast<double>(order.size());
  // The epsilon keeps products like 0.2 * 3060 = 611.9999... from losing a row.
  const auto n_dev = static_cast<std::size_t>(std::floor(ratios[1] * n + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios[2] * n + 1e-9));

  QuerySplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < n_dev) {
      split.dev.insert(order[i]);
    } else if (i < n_dev + n_test) {
      split.test.insert(order[i]);
    } else {
      split.train.insert(order[i]);
    }
  }
  return split;
}

}  // namespace crmltr
