#include "crmltr/policy.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "crmltr/errors.h"
#include "oracles.h"
#include "test_util.h"

namespace crmltr {
namespace {

TEST(InitParams, Shapes) {
  const auto linear = init_params(ScorerKind::kLinear, 4, 0, 0);
  EXPECT_EQ(linear.size(), 2u * 4 + 2);
  EXPECT_EQ(linear.output_weights().size(), 8u);
  for (double b : linear.output_bias()) EXPECT_EQ(b, 0.0);

  const auto mlp = init_params(ScorerKind::kMlp, 4, 8, 0);
  EXPECT_EQ(mlp.hidden_weights().size(), 32u);
  EXPECT_EQ(mlp.hidden_bias().size(), 8u);
  EXPECT_EQ(mlp.output_weights().size(), 16u);
  EXPECT_EQ(mlp.output_bias().size(), 2u);
  EXPECT_EQ(mlp.size(), 32u + 8 + 16 + 2);
  for (double b : mlp.hidden_bias()) EXPECT_EQ(b, 0.0);
}

TEST(InitParams, DeterministicAndErrors) {
  EXPECT_EQ(init_params(ScorerKind::kMlp, 5, 3, 11), init_params(ScorerKind::kMlp, 5, 3, 11));
  EXPECT_NE(init_params(ScorerKind::kMlp, 5, 3, 11), init_params(ScorerKind::kMlp, 5, 3, 12));
  EXPECT_THROW(init_params(ScorerKind::kLinear, 0, 0, 0), ValidationError);
  EXPECT_THROW(init_params(ScorerKind::kMlp, 3, 0, 0), ValidationError);
}

TEST(InitParams, WeightScale) {
  const auto p = init_params(ScorerKind::kLinear, 400, 0, 3);
  double sum_sq = 0;
  for (double w : p.output_weights()) sum_sq += w * w;
  // Variance 1/400 per weight, 800 weights.
  EXPECT_NEAR(sum_sq / 800 * 400, 1.0, 0.15);
}

TEST(Softmax, Examples) {
  const auto even = softmax({0.0, 0.0});
  EXPECT_EQ(even.p0, 0.5);
  EXPECT_EQ(even.p1, 0.5);
  EXPECT_NEAR(softmax({0.0, 1.0}).p1, std::exp(1.0) / (1 + std::exp(1.0)), 1e-15);
  EXPECT_NEAR(softmax({0.0, 1.0}).p1, 0.731059, 1e-6);
  for (double shift : {-700.0, -3.5, 12.0, 900.0}) {
    const auto shifted = softmax({shift, shift + 1.0});
    EXPECT_NEAR(shifted.p1, 0.7310585786300049, 1e-12) << shift;
  }
  const auto extreme = softmax({0.0, 2000.0});
  EXPECT_EQ(extreme.p1, 1.0);
  EXPECT_EQ(extreme.p0, 0.0);
  EXPECT_THROW(softmax({0.0, std::nan("")}), NumericError);
  EXPECT_THROW(softmax({INFINITY, 0.0}), NumericError);
}

TEST(ActionProbabilities, MatchesOracleAndSumsToOne) {
  Rng rng(21);
  for (auto kind : {ScorerKind::kLinear, ScorerKind::kMlp}) {
    for (int trial = 0; trial < 50; ++trial) {
      const auto p = testing::random_params(rng, kind, 3, kind == ScorerKind::kMlp ? 4 : 0);
      FeatureVector x{rng.normal(), rng.normal(), rng.normal()};
      const auto dist = action_probabilities(p, x);
      EXPECT_NEAR(dist.p0 + dist.p1, 1.0, 1e-12);
      EXPECT_NEAR(dist.p1, oracle::prob(p, x, 1), 1e-13);
    }
  }
}

TEST(ActionProbabilities, DimensionMismatch) {
  const auto p = init_params(ScorerKind::kLinear, 3, 0, 0);
  FeatureVector x{1.0, 2.0};
  EXPECT_THROW(action_probabilities(p, x), DimensionError);
}

TEST(ActionProbabilities, SharedOutputShiftInvariance) {
  Rng rng(8);
  auto p = testing::random_params(rng, ScorerKind::kMlp, 2, 3);
  auto shifted = p;
  // Same vector added to both output rows and the same constant to both biases.
  for (std::size_t k = 0; k < 3; ++k) {
    const double s = rng.normal();
    shifted.output_weights()[k] += s;
    shifted.output_weights()[3 + k] += s;
  }
  shifted.output_bias()[0] += 1.25;
  shifted.output_bias()[1] += 1.25;
  for (int trial = 0; trial < 20; ++trial) {
    FeatureVector x{rng.normal(), rng.normal()};
    EXPECT_NEAR(action_probabilities(p, x).p1, action_probabilities(shifted, x).p1, 1e-12);
  }
}

TEST(GradActionProb, SymmetricPointLinear) {
  const auto p = PolicyParams::zeros(ScorerKind::kLinear, 3, 0);
  FeatureVector x{1.0, -2.0, 0.5};
  const auto g = grad_action_prob(p, x, 1);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(g.output_weights()[3 + k], 0.25 * x[k]);
    EXPECT_DOUBLE_EQ(g.output_weights()[k], -0.25 * x[k]);
  }
  EXPECT_DOUBLE_EQ(g.output_bias()[1], 0.25);
}

TEST(GradActionProb, FiniteDifferences) {
  Rng rng(99);
  for (auto kind : {ScorerKind::kLinear, ScorerKind::kMlp}) {
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t d = 1 + rng.index(5);
      const auto p = testing::random_params(rng, kind, d, kind == ScorerKind::kMlp ? 1 + rng.index(6) : 0);
      FeatureVector x(d);
      for (double& v : x) v = rng.normal();
      const int action = static_cast<int>(rng.index(2));
      const auto g = grad_action_prob(p, x, action);
      const auto fd = oracle::finite_difference(
          [&](const PolicyParams& q) { return oracle::prob(q, x, action); }, p);
      EXPECT_LT(oracle::relative_error(g.values, fd), 1e-4) << to_string(kind) << " " << trial;
    }
  }
}

TEST(GradActionProb, ActionsSumToZero) {
  Rng rng(4);
  const auto p = testing::random_params(rng, ScorerKind::kMlp, 3, 5);
  FeatureVector x{0.3, -1.0, 2.0};
  const auto g0 = grad_action_prob(p, x, 0);
  const auto g1 = grad_action_prob(p, x, 1);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(g0.values[i] + g1.values[i], 0.0, 1e-15);
  EXPECT_THROW(grad_action_prob(p, x, 2), ValidationError);
}

std::vector<Candidate> candidates_for(std::initializer_list<std::pair<const char*, double>> items) {
  std::vector<Candidate> out;
  for (const auto& [id, p1] : items) out.push_back({id, testing::context_for(1, p1)});
  return out;
}

TEST(RankProducts, OrderAndTies) {
  const auto p = testing::identity_logit_policy();
  const auto ranked = rank_products(p, candidates_for({{"low", 0.2}, {"high", 0.9}}));
  ASSERT_EQ(ranked.size(), 2u);
  EXPECT_EQ(ranked[0].product_id, "high");
  EXPECT_NEAR(ranked[0].score, 0.9, 1e-12);

  const auto tied = rank_products(p, candidates_for({{"b", 0.5}, {"c", 0.5}, {"a", 0.5}}));
  EXPECT_EQ(tied[0].product_id, "a");
  EXPECT_EQ(tied[1].product_id, "b");
  EXPECT_EQ(tied[2].product_id, "c");

  EXPECT_THROW(rank_products(p, std::vector<Candidate>{}), ValidationError);
}

TEST(RankProducts, PermutationInvariant) {
  Rng rng(12);
  const auto p = testing::random_params(rng, ScorerKind::kLinear, 2, 0);
  std::vector<Candidate> items;
  for (int i = 0; i < 12; ++i) {
    // Pairs of identical contexts exercise the tie-break.
    const double a = rng.normal(), b = rng.normal();
    items.push_back({"p" + std::to_string(2 * i), {a, b}});
    items.push_back({"p" + std::to_string(2 * i + 1), {a, b}});
  }
  const auto reference = rank_products(p, items);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(items);
    EXPECT_EQ(rank_products(p, items), reference);
  }
}

TEST(ModelFile, RoundTrip) {
  Rng rng(30);
  for (auto kind : {ScorerKind::kLinear, ScorerKind::kMlp}) {
    auto p = testing::random_params(rng, kind, 4, kind == ScorerKind::kMlp ? 3 : 0);
    p.seed = 1234567890123ULL;
    p.values[0] = 1e-300;
    std::stringstream buffer;
    write_model(p, buffer);
    EXPECT_EQ(parse_model(buffer), p);
  }
  std::istringstream bad(R"({"kind":"linear","feature_dim":2,"hidden":0,"seed":0,"output_weights":[1,2,3],"output_bias":[0,0]})");
  EXPECT_THROW(parse_model(bad), DimensionError);
  std::istringstream garbage("not a model");
  EXPECT_THROW(parse_model(garbage), ParseError);
  EXPECT_THROW(read_model_file("/nonexistent/dir/model.json"), IoError);
}

}  // namespace
}  // namespace crmltr
