#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neurosel/neurosel.hpp"
#include "neurosel/testkit.hpp"

using namespace neurosel;

namespace {

EmbeddingDataset planted(std::vector<std::size_t> features, std::size_t N, std::size_t rows, std::uint64_t seed) {
  testkit::PlantedSpec spec;
  spec.layer_map = make_layer_map(1, N);
  spec.planted = std::move(features);
  spec.rows = rows;
  spec.seed = Seed{seed};
  return testkit::gen_planted(spec);
}

RandomForestConfig small_forest(std::size_t trees = 30) {
  RandomForestConfig c;
  c.num_trees = trees;
  c.max_depth = 10;
  c.seed = Seed{1};
  c.num_threads = 1;
  return c;
}

Matrix<double> q_of(std::vector<std::vector<double>> rows) {
  Matrix<double> q(rows.size(), rows.front().size());
  for (std::size_t j = 0; j < rows.size(); ++j) std::copy(rows[j].begin(), rows[j].end(), q.row(j).begin());
  return q;
}

}  // namespace

TEST(Forest, SeparableFeatureGivesPerfectTrainingFit) {
  // two features, feature 0 alone decides the label
  EmbeddingDataset ds{"sep", "t", make_layer_map(1, 2), Matrix<float>(200, 2), {}};
  Rng rng(Seed{3});
  for (std::size_t r = 0; r < 200; ++r) {
    ds.X(r, 0) = static_cast<float>(rng.normal());
    ds.X(r, 1) = static_cast<float>(rng.normal());
    ds.y.push_back(ds.X(r, 0) > 0.0f ? 1 : 0);
  }
  auto config = small_forest(20);
  config.features_per_split = FeatureRule::All;
  const auto model = fit_forest(ds, config);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < ds.rows(); ++r) correct += predict(model, ds.X.row(r)) == ds.y[r];
  EXPECT_EQ(correct, ds.rows());
}

TEST(Forest, SingleClassRejected) {
  auto ds = planted({0}, 5, 50, 1);
  std::fill(ds.y.begin(), ds.y.end(), Label{0});
  try {
    fit_forest(ds, small_forest());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleClassError);
  }
}

TEST(Forest, DeterministicAndThreadIndependent) {
  const auto ds = planted({1, 4}, 12, 300, 2);
  auto config = small_forest(16);
  const auto a = fit_forest(ds, config);
  const auto b = fit_forest(ds, config);
  config.num_threads = 4;
  const auto c = fit_forest(ds, config);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(a == c);
}

TEST(Forest, InvalidConfig) {
  auto config = small_forest();
  config.num_trees = 0;
  EXPECT_THROW(validate(config), Error);
  config = small_forest();
  config.max_depth = 0;
  EXPECT_THROW(validate(config), Error);
}

TEST(Gini, PlantedFeatureIsMaximal) {
  const auto ds = planted({3}, 10, 500, 4);
  const auto imp = gini_importance(fit_forest(ds, small_forest(50)));
  EXPECT_EQ(std::max_element(imp.begin(), imp.end()) - imp.begin(), 3);
  EXPECT_NEAR(std::accumulate(imp.begin(), imp.end(), 0.0), 1.0, 1e-12);
  for (double v : imp) EXPECT_GE(v, 0.0);
}

TEST(Gini, NoSplitsGivesZeroVector) {
  const auto ds = planted({3}, 10, 100, 4);
  auto config = small_forest(10);
  config.min_samples_leaf = 1000;  // no node can be split
  const auto imp = gini_importance(fit_forest(ds, config));
  for (double v : imp) EXPECT_EQ(v, 0.0);
}

TEST(Gini, MatchesHandComputedStump) {
  // one tree, one split on feature 1 at the root: importance is all on feature 1
  const auto ds = planted({1}, 3, 80, 5);
  auto config = small_forest(1);
  config.max_depth = 1;
  config.features_per_split = FeatureRule::All;
  const auto model = fit_forest(ds, config);
  ASSERT_EQ(model.trees.front().nodes.front().feature, 1u);
  const auto imp = gini_importance(model);
  EXPECT_DOUBLE_EQ(imp[1], 1.0);
  EXPECT_DOUBLE_EQ(imp[0] + imp[2], 0.0);
}

TEST(Gini, ImpurityDecreaseMatchesDirectFormula) {
  const auto ds = planted({0}, 4, 120, 6);
  auto config = small_forest(1);
  config.max_depth = 1;
  config.features_per_split = FeatureRule::All;
  const auto model = fit_forest(ds, config);
  const auto& root = model.trees.front().nodes.front();
  ASSERT_FALSE(root.is_leaf());
  // The builder gets its bootstrap from the documented per-tree stream; redo
  // it here and evaluate n*G - nL*GL - nR*GR for the chosen split.
  Rng rng(derive_seed(config.seed, 0));
  std::vector<std::size_t> sample(ds.rows());
  for (auto& s : sample) s = rng.uniform_index(ds.rows());
  auto gini_sum = [](double n0, double n1) {
    const double n = n0 + n1;
    return n == 0 ? 0.0 : n * (1.0 - (n0 / n) * (n0 / n) - (n1 / n) * (n1 / n));
  };
  double a0 = 0, a1 = 0, l0 = 0, l1 = 0;
  for (auto s : sample) {
    (ds.y[s] ? a1 : a0) += 1;
    if (static_cast<double>(ds.X(s, root.feature)) <= root.threshold) (ds.y[s] ? l1 : l0) += 1;
  }
  const double expected = gini_sum(a0, a1) - gini_sum(l0, l1) - gini_sum(a0 - l0, a1 - l1);
  EXPECT_NEAR(root.impurity_decrease, expected, 1e-9 * std::max(1.0, expected));
}

TEST(Gini, NoSignalNoDominantFeature) {
  // labels independent of features: max importance stays within 3x the mean
  std::size_t ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = planted({}, 10, 300, 100 + seed);
    auto config = small_forest(30);
    config.seed = Seed{seed};
    const auto imp = gini_importance(fit_forest(ds, config));
    const double mean = std::accumulate(imp.begin(), imp.end(), 0.0) / imp.size();
    ok += *std::max_element(imp.begin(), imp.end()) <= 3.0 * mean;
  }
  EXPECT_EQ(ok, 20u);
}

TEST(Aggregate, MeanWhenAlphaOne) {
  const auto m = aggregate_importance(q_of({{0.2}, {0.4}, {0.6}}), 1.0, 1e-6);
  EXPECT_NEAR(m[0], 0.4, 1e-15);
}

TEST(Aggregate, StabilityWhenAlphaZero) {
  const auto m = aggregate_importance(q_of({{0.2}, {0.4}, {0.6}}), 0.0, 1e-6);
  const double sigma = std::sqrt(2.0 * 0.04 / 3.0);
  EXPECT_NEAR(m[0], 0.4 / (sigma + 1e-6), 1e-12);
  EXPECT_NEAR(m[0], 2.44946, 5e-5);  // the rounded figure; exact value is 2.4494747...
}

TEST(Aggregate, ConstantColumnDominatesAtAlphaZero) {
  const double c = 0.05;
  const auto m = aggregate_importance(q_of({{c}, {c}, {c}}), 0.0, 1e-6);
  EXPECT_NEAR(m[0], c / 1e-6, 1e-6);
}

TEST(Aggregate, NeedsTwoIterations) {
  try {
    aggregate_importance(q_of({{0.1, 0.2}}), 1.0, 1e-6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::JTooSmall);
  }
}

TEST(Importance, ConfigValidation) {
  ImportanceConfig c;
  c.iterations = 1;
  EXPECT_THROW(validate(c), Error);
  c = {};
  c.beta = 0.0;
  EXPECT_THROW(validate(c), Error);
  c = {};
  c.alpha = 1.5;
  EXPECT_THROW(validate(c), Error);
  c = {};
  c.epsilon = 0.0;
  EXPECT_THROW(validate(c), Error);
}

TEST(Importance, SingleSourceFindsPlanted) {
  const auto ds = planted({2, 7}, 15, 400, 8);
  ImportanceConfig config;
  config.iterations = 4;
  config.forest = small_forest(30);
  const auto m = single_source_importance(ds, config, Seed{5});
  EXPECT_EQ(m.values.size(), 15u);
  EXPECT_EQ(m.iterations, 4u);
  const auto sel = select_top_k(m.values, 2);
  auto ids = selected_indices(sel);
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, (std::vector<std::size_t>{2, 7}));
}

TEST(Importance, IterationsAreSeedDeterministic) {
  const auto ds = planted({1}, 8, 200, 9);
  ImportanceConfig config;
  config.iterations = 3;
  config.forest = small_forest(10);
  const auto a = compute_iteration_importances(ds, config, Seed{1});
  const auto b = compute_iteration_importances(ds, config, Seed{1});
  const auto c = compute_iteration_importances(ds, config, Seed{2});
  EXPECT_EQ(a.q, b.q);
  EXPECT_NE(a.q, c.q);
}

TEST(Importance, JsonRoundTrip) {
  ImportanceVector v{{0.1, 0.5, 0.25}, "src", 7, 0.5, 0.7};
  const nlohmann::json j = v;
  const auto back = j.get<ImportanceVector>();
  EXPECT_EQ(back.values, v.values);
  EXPECT_EQ(back.source_name, "src");
  EXPECT_EQ(back.iterations, 7u);
  EXPECT_EQ(j.at("N"), 3);
}
