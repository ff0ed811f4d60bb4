#ifndef CRMLTR_POLICY_H_
#define CRMLTR_POLICY_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "crmltr/log_data.h"

namespace crmltr {

enum class ScorerKind { kLinear, kMlp };

std::string to_string(ScorerKind kind);
ScorerKind scorer_kind_from_string(const std::string& name);

// Parameters of the stochastic show/hide policy pi(a | c) = softmax(f(c))_a.
// All values live in one flat vector so optimizers and gradients can treat
// them uniformly. Layout, row-major:
//   linear: output_weights (2 x d), output_bias (2)
//   mlp:    hidden_weights (h x d), hidden_bias (h),
//           output_weights (2 x h), output_bias (2)
// A gradient is returned as a PolicyParams of the same shape.
struct PolicyParams {
  ScorerKind kind = ScorerKind::kLinear;
  std::size_t feature_dim = 0;
  std::size_t hidden = 0;  // 0 for linear
  std::uint64_t seed = 0;
  std::vector<double> values;

  // Zero-valued parameters of the given shape.
  static PolicyParams zeros(ScorerKind kind, std::size_t feature_dim,
                            std::size_t hidden);

  std::size_t size() const { return values.size(); }
  // Width of the layer feeding the output logits (d for linear, h for mlp).
  std::size_t output_fan_in() const;

  std::span<double> hidden_weights();
  std::span<const double> hidden_weights() const;
  std::span<double> hidden_bias();
  std::span<const double> hidden_bias() const;
  std::span<double> output_weights();
  std::span<const double> output_weights() const;
  std::span<double> output_bias();
  std::span<const double> output_bias() const;

  bool same_shape(const PolicyParams& other) const {
    return kind == other.kind && feature_dim == other.feature_dim &&
           hidden == other.hidden && values.size() == other.values.size();
  }

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

struct ActionDistribution {
  double p0 = 0.5;
  double p1 = 0.5;

  double operator[](int action) const { return action == 1 ? p1 : p0; }
};

using Logits = std::array<double, 2>;

// Weights ~ N(0, 1/fan_in), biases 0. Throws ValidationError on
// non-positive dimensions.
PolicyParams init_params(ScorerKind kind, std::size_t feature_dim,
                         std::size_t hidden, std::uint64_t seed);

// Scorer output f(c, 0), f(c, 1). Throws DimensionError on a context of the
// wrong length.
Logits logits(const PolicyParams& params, std::span<const double> context);

// Two-way softmax with the max logit subtracted first. Throws NumericError on
// non-finite logits.
ActionDistribution softmax(const Logits& z);

ActionDistribution action_probabilities(const PolicyParams& params,
                                        std::span<const double> context);

// Pulls a gradient with respect to the two logits back to the parameters
// (vector-Jacobian product of the scorer).
PolicyParams backprop_logits(const PolicyParams& params,
                             std::span<const double> context,
                             const Logits& logit_grad);

// d pi(action | c) / d params.
PolicyParams grad_action_prob(const PolicyParams& params,
                              std::span<const double> context, int action);

struct Candidate {
  std::string product_id;
  FeatureVector features;
};

struct ScoredProduct {
  std::string product_id;
  double score = 0.0;  // pi(1 | c)

  friend bool operator==(const ScoredProduct&, const ScoredProduct&) = default;
};

// Sorted by pi(1 | c) descending, ties by product_id ascending. Throws
// ValidationError on an empty candidate list.
std::vector<ScoredProduct> rank_products(const PolicyParams& params,
                                         std::span<const Candidate> candidates);

// Model file: one JSON object with kind, feature_dim, hidden, seed and the
// named parameter arrays, doubles in shortest round-trip form.
void write_model(const PolicyParams& params, std::ostream& sink);
PolicyParams parse_model(std::istream& source);
void write_model_file(const PolicyParams& params, const std::string& path);
PolicyParams read_model_file(const std::string& path);

}  // namespace crmltr

#endif  // CRMLTR_POLICY_H_
