#include "crmltr/policy.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "crmltr/errors.h"
#include "crmltr/random.h"
#include "json.hpp"

namespace crmltr {

namespace {

using json = nlohmann::json;

struct Offsets {
  std::size_t hidden_weights = 0;
  std::size_t hidden_bias = 0;
  std::size_t output_weights = 0;
  std::size_t output_bias = 0;
  std::size_t total = 0;
};

Offsets offsets_for(ScorerKind kind, std::size_t d, std::size_t h) {
  Offsets o;
  if (kind == ScorerKind::kLinear) {
    o.output_weights = 0;
    o.output_bias = 2 * d;
    o.total = 2 * d + 2;
  } else {
    o.hidden_weights = 0;
    o.hidden_bias = h * d;
    o.output_weights = h * d + h;
    o.output_bias = o.output_weights + 2 * h;
    o.total = o.output_bias + 2;
  }
  return o;
}

void check_context(const PolicyParams& params, std::span<const double> context) {
  if (context.size() != params.feature_dim) {
    throw DimensionError("context has " + std::to_string(context.size()) +
                         " features, policy expects " +
                         std::to_string(params.feature_dim));
  }
}

void check_layout(const PolicyParams& params) {
  if (params.kind == ScorerKind::kLinear && params.hidden != 0) {
    throw ValidationError("linear scorer must have hidden = 0");
  }
  if (params.kind == ScorerKind::kMlp && params.hidden == 0) {
    throw ValidationError("mlp scorer needs hidden >= 1");
  }
  const auto expected =
      offsets_for(params.kind, params.feature_dim, params.hidden).total;
  if (params.values.size() != expected) {
    throw DimensionError("parameter vector has " +
                         std::to_string(params.values.size()) +
                         " entries, shape needs " + std::to_string(expected));
  }
}

// tanh(W1 x + b1) for the mlp scorer.
std::vector<double> hidden_activations(const PolicyParams& params,
                                       std::span<const double> x) {
  const auto w = params.hidden_weights();
  const auto b = params.hidden_bias();
  const std::size_t d = params.feature_dim;
  std::vector<double> h(params.hidden);
  for (std::size_t j = 0; j < params.hidden; ++j) {
    double pre = b[j];
    for (std::size_t i = 0; i < d; ++i) pre += w[j * d + i] * x[i];
    h[j] = std::tanh(pre);
  }
  return h;
}

Logits output_layer(const PolicyParams& params, std::span<const double> input) {
  const auto w = params.output_weights();
  const auto b = params.output_bias();
  const std::size_t n = input.size();
  Logits z{b[0], b[1]};
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < n; ++i) z[k] += w[k * n + i] * input[i];
  }
  return z;
}

std::vector<double> read_array(const json& object, const char* key,
                               std::size_t expected) {
  const auto it = object.find(key);
  if (it == object.end() || !it->is_array()) {
    throw ValidationError(std::string("model file lacks array '") + key + "'");
  }
  if (it->size() != expected) {
    throw DimensionError(std::string("model array '") + key + "' has " +
                         std::to_string(it->size()) + " entries, expected " +
                         std::to_string(expected));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : *it) {
    if (!v.is_number()) throw ValidationError("non-numeric model parameter");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

std::string to_string(ScorerKind kind) {
  return kind == ScorerKind::kLinear ? "linear" : "mlp";
}

ScorerKind scorer_kind_from_string(const std::string& name) {
  if (name == "linear") return ScorerKind::kLinear;
  if (name == "mlp") return ScorerKind::kMlp;
  throw ValidationError("unknown scorer kind '" + name + "'");
}

PolicyParams PolicyParams::zeros(ScorerKind kind, std::size_t feature_dim,
                                 std::size_t hidden) {
  PolicyParams p;
  p.kind = kind;
  p.feature_dim = feature_dim;
  p.hidden = kind == ScorerKind::kLinear ? 0 : hidden;
  p.values.assign(offsets_for(kind, feature_dim, p.hidden).total, 0.0);
  return p;
}

std::size_t PolicyParams::output_fan_in() const {
  return kind == ScorerKind::kLinear ? feature_dim : hidden;
}

std::span<double> PolicyParams::hidden_weights() {
  const auto o = offsets_for(kind, feature_dim, hidden);
  return std::span(values).subspan(o.hidden_weights, o.hidden_bias - o.hidden_weights);
}
std::span<const double> PolicyParams::hidden_weights() const {
  const auto o = offsets_for(kind, feature_dim, hidden);
  return std::span(values).subspan(o.hidden_weights, o.hidden_bias - o.hidden_weights);
}
std::span<double> PolicyParams::hidden_bias() {
  const auto o = offsets_for(kind, feature_dim, hidden);
  return std::span(values).subspan(o.hidden_bias, o.output_weights - o.hidden_bias);
}
std::span<const double> PolicyParams::hidden_bias() const {
  const auto o = offsets_for(kind, feature_dim, hidden);
  return std::span(values).subspan(o.hidden_bias, o.output_weights - o.hidden_bias);
}
std::span<double> PolicyParams::output_weights() {
  const auto o = offsets_for(kind, feature_dim, hidden);
  return std::span(values).subspan(o.output_weights, 2 * output_fan_in());
}
std::span<const double> PolicyParams::output_weights() const {
  const auto o = offsets_for(kind, feature_dim, hidden);
  return std::span(values).subspan(o.output_weights, 2 * output_fan_in());
}
std::span<double> PolicyParams::output_bias() {
  const auto o = offsets_for(kind, feature_dim, hidden);
  return std::span(values).subspan(o.output_bias, 2);
}
std::span<const double> PolicyParams::output_bias() const {
  const auto o = offsets_for(kind, feature_dim, hidden);
  return std::span(values).subspan(o.output_bias, 2);
}

PolicyParams init_params(ScorerKind kind, std::size_t feature_dim,
                         std::size_t hidden, std::uint64_t seed) {
  if (feature_dim < 1) throw ValidationError("feature_dim must be >= 1");
  if (kind == ScorerKind::kMlp && hidden < 1) {
    throw ValidationError("mlp scorer needs hidden >= 1");
  }
  PolicyParams p = PolicyParams::zeros(kind, feature_dim, hidden);
  p.seed = seed;
  Rng rng(seed);
  if (kind == ScorerKind::kMlp) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(feature_dim));
    for (double& w : p.hidden_weights()) w = scale * rng.normal();
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.output_fan_in()));
  for (double& w : p.output_weights()) w = scale * rng.normal();
  return p;
}

Logits logits(const PolicyParams& params, std::span<const double> context) {
  check_context(params, context);
  if (params.kind == ScorerKind::kLinear) return output_layer(params, context);
  const auto h = hidden_activations(params, context);
  return output_layer(params, h);
}

ActionDistribution softmax(const Logits& z) {
  if (!std::isfinite(z[0]) || !std::isfinite(z[1])) {
    throw NumericError("non-finite policy logits");
  }
  const double top = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - top);
  const double e1 = std::exp(z[1] - top);
  const double total = e0 + e1;
  return {e0 / total, e1 / total};
}

ActionDistribution action_probabilities(const PolicyParams& params,
                                        std::span<const double> context) {
  return softmax(logits(params, context));
}

PolicyParams backprop_logits(const PolicyParams& params,
                             std::span<const double> context,
                             const Logits& logit_grad) {
  check_context(params, context);
  PolicyParams grad = PolicyParams::zeros(params.kind, params.feature_dim,
                                          params.hidden);
  grad.seed = params.seed;
  grad.output_bias()[0] = logit_grad[0];
  grad.output_bias()[1] = logit_grad[1];

  if (params.kind == ScorerKind::kLinear) {
    const std::size_t d = params.feature_dim;
    auto gw = grad.output_weights();
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t i = 0; i < d; ++i) gw[k * d + i] = logit_grad[k] * context[i];
    }
    return grad;
  }

  const std::size_t d = params.feature_dim;
  const std::size_t hsize = params.hidden;
  const auto h = hidden_activations(params, context);
  const auto w2 = params.output_weights();
  auto gw2 = grad.output_weights();
  auto gw1 = grad.hidden_weights();
  auto gb1 = grad.hidden_bias();
  for (std::size_t j = 0; j < hsize; ++j) {
    gw2[j] = logit_grad[0] * h[j];
    gw2[hsize + j] = logit_grad[1] * h[j];
    const double g_h = logit_grad[0] * w2[j] + logit_grad[1] * w2[hsize + j];
    const double g_pre = g_h * (1.0 - h[j] * h[j]);
    gb1[j] = g_pre;
    for (std::size_t i = 0; i < d; ++i) gw1[j * d + i] = g_pre * context[i];
  }
  return grad;
}

PolicyParams grad_action_prob(const PolicyParams& params,
                              std::span<const double> context, int action) {
  if (action != 0 && action != 1) {
    throw ValidationError("action must be 0 or 1");
  }
  const auto pi = action_probabilities(params, context);
  const double own = pi[action];
  const double other = pi[1 - action];
  // d pi_a / d z_a = pi_a (1 - pi_a), d pi_a / d z_{1-a} = -pi_a pi_{1-a}.
  Logits g{};
  g[static_cast<std::size_t>(action)] = own * (1.0 - own);
  g[static_cast<std::size_t>(1 - action)] = -own * other;
  return backprop_logits(params, context, g);
}

std::vector<ScoredProduct> rank_products(const PolicyParams& params,
                                         std::span<const Candidate> candidates) {
  if (candidates.empty()) throw ValidationError("no candidates to rank");
  std::vector<ScoredProduct> ranked;
  ranked.reserve(candidates.size());
  for (const auto& c : candidates) {
    ranked.push_back({c.product_id, action_probabilities(params, c.features).p1});
  }
  std::sort(ranked.begin(), ranked.end(),
            [](const ScoredProduct& a, const ScoredProduct& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.product_id < b.product_id;
            });
  return ranked;
}

void write_model(const PolicyParams& params, std::ostream& sink) {
  check_layout(params);
  json model;
  model["kind"] = to_string(params.kind);
  model["feature_dim"] = params.feature_dim;
  model["hidden"] = params.hidden;
  model["seed"] = params.seed;
  auto as_vector = [](std::span<const double> s) {
    return std::vector<double>(s.begin(), s.end());
  };
  if (params.kind == ScorerKind::kMlp) {
    model["hidden_weights"] = as_vector(params.hidden_weights());
    model["hidden_bias"] = as_vector(params.hidden_bias());
  }
  model["output_weights"] = as_vector(params.output_weights());
  model["output_bias"] = as_vector(params.output_bias());
  sink << model.dump(2) << '\n';
  if (!sink) throw IoError("write failure on model stream");
}

PolicyParams parse_model(std::istream& source) {
  json model;
  try {
    model = json::parse(source);
  } catch (const json::parse_error& e) {
    throw ParseError(1, std::string("malformed model file: ") + e.what());
  }
  if (!model.is_object() || !model.contains("kind") ||
      !model.contains("feature_dim") || !model.contains("hidden")) {
    throw ValidationError("model file needs kind, feature_dim, hidden");
  }
  PolicyParams p = PolicyParams::zeros(
      scorer_kind_from_string(model["kind"].get<std::string>()),
      model["feature_dim"].get<std::size_t>(), model["hidden"].get<std::size_t>());
  if (p.feature_dim < 1) throw ValidationError("feature_dim must be >= 1");
  if (p.kind == ScorerKind::kMlp && p.hidden < 1) {
    throw ValidationError("mlp scorer needs hidden >= 1");
  }
  p.seed = model.value("seed", std::uint64_t{0});
  auto fill = [&](std::span<double> dst, const char* key) {
    const auto src = read_array(model, key, dst.size());
    std::copy(src.begin(), src.end(), dst.begin());
  };
  if (p.kind == ScorerKind::kMlp) {
    fill(p.hidden_weights(), "hidden_weights");
    fill(p.hidden_bias(), "hidden_bias");
  }
  fill(p.output_weights(), "output_weights");
  fill(p.output_bias(), "output_bias");
  for (double v : p.values) {
    if (!std::isfinite(v)) throw ValidationError("non-finite model parameter");
  }
  return p;
}

void write_model_file(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_model(params, out);
}

PolicyParams read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_model(in);
}

}  // namespace crmltr
