#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "neurosel/neurosel.hpp"

using namespace neurosel;

namespace {

struct Problem {
  Matrix<double> X;
  std::vector<Label> y;
  std::size_t classes;
};

// Gaussian blobs, one centre per class; `gap` scales the centre spread.
Problem blobs(std::size_t rows, std::size_t cols, std::size_t classes, double gap, Seed seed) {
  Rng rng(seed);
  Matrix<double> centres(classes, cols);
  for (auto& v : centres.data()) v = gap * rng.normal();
  Problem p{Matrix<double>(rows, cols), std::vector<Label>(rows), classes};
  for (std::size_t r = 0; r < rows; ++r) {
    const auto c = static_cast<Label>(r % classes);
    p.y[r] = c;
    for (std::size_t k = 0; k < cols; ++k) p.X(r, k) = centres(c, k) + rng.normal();
  }
  return p;
}

}  // namespace

TEST(Restrict, ColumnGather) {
  Matrix<float> X(2, 10);
  for (std::size_t c = 0; c < 10; ++c) {
    X(0, c) = static_cast<float>(c);
    X(1, c) = static_cast<float>(10 + c);
  }
  const std::vector<NeuronId> ids = {{5}, {2}};
  const auto R = restrict_columns(X, ids);
  ASSERT_EQ(R.cols(), 2u);
  EXPECT_EQ(R(0, 0), 5.0);
  EXPECT_EQ(R(0, 1), 2.0);
  EXPECT_EQ(R(1, 0), 15.0);

  std::vector<NeuronId> all(10);
  for (std::size_t i = 0; i < 10; ++i) all[i] = {i};
  const auto same = restrict_columns(X, all);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(same(r, c), X(r, c));
  }
  EXPECT_THROW(restrict_columns(X, std::vector<NeuronId>{{10}}), Error);
}

TEST(Restrict, FiveHundredOfFullWidth) {
  EmbeddingDataset ds{"d", "t", make_layer_map(24, 1024), Matrix<float>(3, 24576), {0, 1, 0}};
  std::vector<double> scores(24576);
  std::iota(scores.begin(), scores.end(), 0.0);
  EXPECT_EQ(restrict(ds, select_top_k(scores, 500)).cols(), 500u);
  EmbeddingDataset narrow{"n", "t", make_layer_map(1, 10), Matrix<float>(3, 10), {0, 1, 0}};
  try {
    restrict(narrow, select_top_k(scores, 500));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IncompatibleSelection);
  }
}

TEST(Logistic, GradientMatchesFiniteDifferences) {
  Rng rng(Seed{4});
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t C = 2 + rng.uniform_index(3);
    const std::size_t K = 1 + rng.uniform_index(5);
    const auto p = blobs(12, K, C, 1.0, Seed{static_cast<std::uint64_t>(trial)});
    const double l2 = rng.uniform01() * 2.0;
    std::vector<double> w(C * K + C);
    for (auto& v : w) v = 0.5 * rng.normal();
    std::vector<double> g(w.size());
    logistic_objective(p.X, p.y, C, l2, w, g);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(w[i]));
      auto plus = w, minus = w;
      plus[i] += h;
      minus[i] -= h;
      const double fd =
          (logistic_objective(p.X, p.y, C, l2, plus) - logistic_objective(p.X, p.y, C, l2, minus)) / (2.0 * h);
      EXPECT_LE(std::abs(fd - g[i]), 1e-6 * std::max(1.0, std::abs(g[i])));
    }
  }
}

TEST(Logistic, ObjectiveTraceIsMonotone) {
  const auto p = blobs(200, 6, 3, 0.8, Seed{5});
  const auto model = train_logreg(p.X, p.y, 1.0);
  const auto& trace = model.diagnostics.objective_trace;
  ASSERT_GE(trace.size(), 2u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LT(trace[i], trace[i - 1]);
  EXPECT_TRUE(model.diagnostics.converged);
}

TEST(Logistic, SeparableDataFitsAndReproducesLabels) {
  const auto p = blobs(300, 5, 2, 6.0, Seed{6});
  const auto model = train_logreg(p.X, p.y, 1.0);
  const auto pred = predict(model, p.X);
  EXPECT_GE(evaluate(pred, p.y).micro_accuracy, 0.99);
}

TEST(Logistic, SingleClassRejected) {
  const Matrix<double> X(4, 2, 1.0);
  const std::vector<Label> y(4, 1);
  try {
    train_logreg(X, y, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleClassError);
  }
}

TEST(Logistic, ShapeMismatch) {
  const Matrix<double> X(4, 2, 1.0);
  const std::vector<Label> y = {0, 1, 0};
  EXPECT_THROW(train_logreg(X, y, 1.0), Error);
}

TEST(Logistic, ZeroModelPredictsClassZero) {
  LogisticModel model;
  model.weights = Matrix<double>(3, 2, 0.0);
  model.bias = {0.0, 0.0, 0.0};
  model.standardizer.mean = {0.0, 0.0};
  model.standardizer.scale = {1.0, 1.0};
  Matrix<double> X(5, 2, 3.0);
  for (auto l : predict(model, X)) EXPECT_EQ(l, 0);
  const auto proba = predict_proba(model, X);
  EXPECT_NEAR(proba(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(Logistic, StandardizationMakesFitScaleInvariant) {
  auto p = blobs(150, 4, 2, 1.0, Seed{7});
  auto scaled = p.X;
  for (std::size_t r = 0; r < scaled.rows(); ++r) {
    for (std::size_t c = 0; c < scaled.cols(); ++c) scaled(r, c) = 1000.0 * scaled(r, c) + 17.0 * c;
  }
  const auto a = predict(train_logreg(p.X, p.y, 1.0), p.X);
  const auto b = predict(train_logreg(scaled, p.y, 1.0), scaled);
  EXPECT_EQ(a, b);
}

TEST(Logistic, ConstantColumnIsHarmless) {
  auto p = blobs(100, 3, 2, 3.0, Seed{8});
  for (std::size_t r = 0; r < p.X.rows(); ++r) p.X(r, 1) = 42.0;
  const auto model = train_logreg(p.X, p.y, 1.0);
  for (double w : model.weights.data()) EXPECT_TRUE(std::isfinite(w));
  EXPECT_EQ(model.standardizer.scale[1], 1.0);
}

TEST(Logistic, Deterministic) {
  const auto p = blobs(120, 4, 3, 1.0, Seed{9});
  const auto a = train_logreg(p.X, p.y, 0.5);
  const auto b = train_logreg(p.X, p.y, 0.5);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(Logistic, IterationCapReportedNotThrown) {
  const auto p = blobs(100, 4, 2, 1.0, Seed{10});
  LogisticOptions options;
  options.max_iterations = 1;
  options.relative_tolerance = 0.0;
  const auto model = train_logreg(p.X, p.y, options);
  EXPECT_FALSE(model.diagnostics.converged);
  EXPECT_EQ(model.diagnostics.iterations, 1u);
}

TEST(Evaluate, MicroAccuracy) {
  const std::vector<Label> t = {0, 1, 1, 0};
  EXPECT_EQ(evaluate(t, t).micro_accuracy, 1.0);
  EXPECT_EQ(evaluate(std::vector<Label>{1, 0, 0, 1}, t).micro_accuracy, 0.0);
  const auto r = evaluate(std::vector<Label>{0, 1, 0, 0}, t);
  EXPECT_EQ(r.micro_accuracy, 0.75);
  EXPECT_EQ(r.confusion(1, 0), 1u);
  EXPECT_EQ(r.confusion(0, 0), 2u);
}

TEST(Evaluate, Errors) {
  EXPECT_THROW(evaluate(std::vector<Label>{0}, std::vector<Label>{0, 1}), Error);
  EXPECT_THROW(evaluate(std::vector<Label>{}, std::vector<Label>{}), Error);
}
