#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurosel/core.hpp"
#include "neurosel/forest.hpp"

namespace neurosel {

struct ImportanceVector {
  std::vector<double> values;
  std::string source_name;
  std::size_t iterations = 0;
  double alpha = 1.0;
  double beta = 1.0;

  std::size_t size() const noexcept { return values.size(); }
};

struct ImportanceConfig {
  std::size_t iterations = 100;  // J
  double beta = 0.7;
  double alpha = 1.0;
  double epsilon = 1e-6;
  bool stratified = true;
  RandomForestConfig forest;
};

inline void validate(const ImportanceConfig& config) {
  require(config.iterations >= 2, ErrorCode::JTooSmall,
          "J must be >= 2 for the standard deviation to be defined, got " + std::to_string(config.iterations));
  require(config.beta > 0.0 && config.beta <= 1.0, ErrorCode::FractionOutOfRange, "beta must lie in (0, 1]");
  require(config.alpha >= 0.0 && config.alpha <= 1.0, ErrorCode::ConfigError, "alpha must lie in [0, 1]");
  require(config.epsilon > 0.0, ErrorCode::ConfigError, "epsilon must be > 0");
  validate(config.forest);
}

// Per-iteration Gini importances q^j, one row per subsample. They do not
// depend on alpha, so alpha sweeps re-aggregate the same rows.
struct IterationImportances {
  Matrix<double> q;  // J x N
  std::string source_name;
  double beta = 1.0;

  std::size_t iterations() const noexcept { return q.rows(); }
  std::size_t features() const noexcept { return q.cols(); }
};

// m_i = alpha * mean_j(q_i^j) + (1 - alpha) * mean_j(q_i^j) / (sigma_j(q_i^j) + epsilon)
// with sigma the population standard deviation over j.
inline std::vector<double> aggregate_importance(const Matrix<double>& q, double alpha, double epsilon) {
  require(q.rows() >= 2, ErrorCode::JTooSmall, "need at least two iterations");
  const std::size_t J = q.rows();
  const std::size_t N = q.cols();
  std::vector<double> mean(N, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    const auto row = q.row(j);
    for (std::size_t i = 0; i < N; ++i) mean[i] += row[i];
  }
  for (auto& m : mean) m /= static_cast<double>(J);
  std::vector<double> var(N, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    const auto row = q.row(j);
    for (std::size_t i = 0; i < N; ++i) {
      const double d = row[i] - mean[i];
      var[i] += d * d;
    }
  }
  std::vector<double> m(N);
  for (std::size_t i = 0; i < N; ++i) {
    const double sigma = std::sqrt(var[i] / static_cast<double>(J));
    m[i] = alpha * mean[i] + (1.0 - alpha) * mean[i] / (sigma + epsilon);
  }
  return m;
}

inline ImportanceVector aggregate_importance(const IterationImportances& it, double alpha, double epsilon) {
  return ImportanceVector{aggregate_importance(it.q, alpha, epsilon), it.source_name, it.iterations(), alpha, it.beta};
}

// Iteration j subsamples with seed derive_seed(seed, j) and fits its forest
// with that same seed.
inline IterationImportances compute_iteration_importances(const EmbeddingDataset& ds, const ImportanceConfig& config,
                                                          Seed seed) {
  validate(config);
  IterationImportances out;
  out.source_name = ds.name;
  out.beta = config.beta;
  out.q = Matrix<double>(config.iterations, ds.cols());
  for (std::size_t j = 0; j < config.iterations; ++j) {
    const Seed seed_j = derive_seed(seed, j);
    const auto rows = subsample_indices(ds.y, config.beta, seed_j, config.stratified);
    RandomForestConfig forest = config.forest;
    forest.seed = seed_j;
    const auto q = gini_importance(fit_forest(ds, rows, forest));
    std::copy(q.begin(), q.end(), out.q.row(j).begin());
  }
  return out;
}

inline ImportanceVector single_source_importance(const EmbeddingDataset& ds, const ImportanceConfig& config, Seed seed) {
  return aggregate_importance(compute_iteration_importances(ds, config, seed), config.alpha, config.epsilon);
}

inline void to_json(nlohmann::json& j, const ImportanceVector& v) {
  j = nlohmann::json{{"source", v.source_name}, {"N", v.values.size()}, {"alpha", v.alpha},
                     {"beta", v.beta},          {"J", v.iterations},    {"values", v.values}};
}

inline void from_json(const nlohmann::json& j, ImportanceVector& v) {
  j.at("source").get_to(v.source_name);
  j.at("alpha").get_to(v.alpha);
  j.at("beta").get_to(v.beta);
  j.at("J").get_to(v.iterations);
  j.at("values").get_to(v.values);
  require(j.at("N").get<std::size_t>() == v.values.size(), ErrorCode::LengthMismatch,
          "importance vector length does not match N");
}

}  // namespace neurosel
