#pragma once

// Multinomial logistic regression on a restricted (rows x K) feature matrix,
// plus the micro-accuracy evaluation used throughout.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurosel/core.hpp"
#include "neurosel/select.hpp"

namespace neurosel {

// Column j of the result is column ids[j] of X.
inline Matrix<double> restrict_columns(const Matrix<float>& X, std::span<const NeuronId> ids) {
  for (auto id : ids) {
    require(id.index < X.cols(), ErrorCode::IncompatibleSelection,
            "selected id " + std::to_string(id.index) + " >= feature count " + std::to_string(X.cols()));
  }
  Matrix<double> out(X.rows(), ids.size());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto src = X.row(r);
    auto dst = out.row(r);
    for (std::size_t k = 0; k < ids.size(); ++k) dst[k] = static_cast<double>(src[ids[k].index]);
  }
  return out;
}

inline Matrix<double> restrict(const EmbeddingDataset& ds, const SelectionResult& selection) {
  require(selection.n_features == ds.cols(), ErrorCode::IncompatibleSelection,
          "selection was made over N=" + std::to_string(selection.n_features) + " but dataset '" + ds.name +
              "' has N=" + std::to_string(ds.cols()));
  return restrict_columns(ds.X, selection.neuron_ids);
}

// Per-column affine map fitted on training data only.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix<double>& X) {
    Standardizer s;
    const std::size_t n = X.rows();
    s.mean.assign(X.cols(), 0.0);
    s.scale.assign(X.cols(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = X.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) s.mean[c] += row[c];
    }
    for (auto& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = X.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) s.scale[c] += (row[c] - s.mean[c]) * (row[c] - s.mean[c]);
    }
    for (auto& v : s.scale) {
      const double sd = std::sqrt(v / static_cast<double>(n));
      v = sd > 0.0 ? sd : 1.0;  // constant columns map to zero
    }
    return s;
  }

  Matrix<double> apply(const Matrix<double>& X) const {
    Matrix<double> out(X.rows(), X.cols());
    for (std::size_t r = 0; r < X.rows(); ++r) {
      const auto src = X.row(r);
      auto dst = out.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] = (src[c] - mean[c]) / scale[c];
    }
    return out;
  }
};

struct FitDiagnostics {
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;
  double gradient_norm = 0.0;
  std::vector<double> objective_trace;  // objective after each accepted step, starting at the initial point
};

struct LogisticModel {
  Matrix<double> weights;  // C x K, in standardized feature space
  std::vector<double> bias;
  double l2 = 1.0;
  std::vector<NeuronId> selected;  // column order of the reduced matrix
  Standardizer standardizer;
  FitDiagnostics diagnostics;

  std::size_t classes() const noexcept { return bias.size(); }
  std::size_t features() const noexcept { return weights.cols(); }
};

struct LogisticOptions {
  double l2 = 1.0;
  std::size_t max_iterations = 1000;
  double relative_tolerance = 1e-8;
  std::size_t history = 10;
};

// Objective: sum_r -log softmax(W x_r + b)[y_r] + (l2/2) ||W||^2.
// Parameters are laid out as W (C x K, row-major) followed by b (C).
// Returns the objective; writes the gradient into `grad` when non-empty.
inline double logistic_objective(const Matrix<double>& Xs, std::span<const Label> y, std::size_t classes, double l2,
                                 std::span<const double> params, std::span<double> grad = {}) {
  const std::size_t K = Xs.cols();
  const std::size_t C = classes;
  const double* W = params.data();
  const double* b = params.data() + C * K;
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> z(C);
  double loss = 0.0;
  for (std::size_t r = 0; r < Xs.rows(); ++r) {
    const auto x = Xs.row(r);
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) {
      double s = b[c];
      const double* w = W + c * K;
      for (std::size_t k = 0; k < K; ++k) s += w[k] * x[k];
      z[c] = s;
      zmax = std::max(zmax, s);
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(z[c] - zmax);
    const double log_norm = zmax + std::log(denom);
    loss += log_norm - z[y[r]];
    if (want_grad) {
      for (std::size_t c = 0; c < C; ++c) {
        const double residual = std::exp(z[c] - log_norm) - (y[r] == c ? 1.0 : 0.0);
        double* g = grad.data() + c * K;
        for (std::size_t k = 0; k < K; ++k) g[k] += residual * x[k];
        grad[C * K + c] += residual;
      }
    }
  }
  double penalty = 0.0;
  for (std::size_t i = 0; i < C * K; ++i) {
    penalty += W[i] * W[i];
    if (want_grad) grad[i] += l2 * W[i];
  }
  return loss + 0.5 * l2 * penalty;
}

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

// L-BFGS with Armijo backtracking; every accepted step strictly lowers the
// objective. Stops when the relative decrease drops below the tolerance or
// after max_iterations (diagnostics.converged = false, model still usable).
inline LogisticModel train_logreg(const Matrix<double>& Xr, std::span<const Label> y,
                                  const LogisticOptions& options = {}) {
  require(Xr.rows() == y.size(), ErrorCode::ShapeMismatch,
          "reduced matrix has " + std::to_string(Xr.rows()) + " rows but " + std::to_string(y.size()) + " labels");
  require(!y.empty() && std::any_of(y.begin(), y.end(), [&](Label l) { return l != y.front(); }),
          ErrorCode::SingleClassError, "logistic regression needs at least two classes");
  require(options.l2 >= 0.0, ErrorCode::ConfigError, "l2 must be >= 0");

  LogisticModel model;
  model.l2 = options.l2;
  model.standardizer = Standardizer::fit(Xr);
  const Matrix<double> Xs = model.standardizer.apply(Xr);
  const std::size_t C = num_classes(y);
  const std::size_t K = Xr.cols();
  const std::size_t P = C * K + C;

  std::vector<double> x(P, 0.0), g(P), x_new(P), g_new(P), d(P);
  double f = logistic_objective(Xs, y, C, options.l2, x, g);
  model.diagnostics.objective_trace.push_back(f);
  std::deque<std::pair<std::vector<double>, std::vector<double>>> memory;  // (s, y) pairs
  std::deque<double> rho;
  bool converged = false;
  std::size_t iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (std::sqrt(detail::dot(g, g)) == 0.0) {
      converged = true;
      break;
    }
    // two-loop recursion
    std::copy(g.begin(), g.end(), d.begin());
    std::vector<double> a(memory.size());
    for (std::size_t m = memory.size(); m-- > 0;) {
      a[m] = rho[m] * detail::dot(memory[m].first, d);
      for (std::size_t i = 0; i < P; ++i) d[i] -= a[m] * memory[m].second[i];
    }
    if (!memory.empty()) {
      const auto& [s_last, y_last] = memory.back();
      const double gamma = detail::dot(s_last, y_last) / detail::dot(y_last, y_last);
      for (auto& v : d) v *= gamma;
    } else {
      const double gnorm = std::sqrt(detail::dot(g, g));
      for (auto& v : d) v /= std::max(1.0, gnorm);
    }
    for (std::size_t m = 0; m < memory.size(); ++m) {
      const double beta = rho[m] * detail::dot(memory[m].second, d);
      for (std::size_t i = 0; i < P; ++i) d[i] += (a[m] - beta) * memory[m].first[i];
    }
    for (auto& v : d) v = -v;
    double slope = detail::dot(g, d);
    if (!(slope < 0.0)) {
      memory.clear();
      rho.clear();
      const double gnorm = std::sqrt(detail::dot(g, g));
      for (std::size_t i = 0; i < P; ++i) d[i] = -g[i] / std::max(1.0, gnorm);
      slope = detail::dot(g, d);
    }

    double step = 1.0;
    double f_new = f;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t i = 0; i < P; ++i) x_new[i] = x[i] + step * d[i];
      f_new = logistic_objective(Xs, y, C, options.l2, x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope && f_new < f) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // no representable decrease along the search direction
      converged = true;
      break;
    }

    std::vector<double> s(P), yv(P);
    for (std::size_t i = 0; i < P; ++i) {
      s[i] = x_new[i] - x[i];
      yv[i] = g_new[i] - g[i];
    }
    const double sy = detail::dot(s, yv);
    if (sy > 1e-12 * std::sqrt(detail::dot(s, s) * detail::dot(yv, yv))) {
      memory.emplace_back(std::move(s), std::move(yv));
      rho.push_back(1.0 / sy);
      if (memory.size() > options.history) {
        memory.pop_front();
        rho.pop_front();
      }
    }
    const double decrease = (f - f_new) / std::max(std::abs(f), std::numeric_limits<double>::min());
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    model.diagnostics.objective_trace.push_back(f);
    if (decrease < options.relative_tolerance) {
      converged = true;
      ++iter;
      break;
    }
  }

  model.weights = Matrix<double>(C, K, std::vector<double>(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(C * K)));
  model.bias.assign(x.begin() + static_cast<std::ptrdiff_t>(C * K), x.end());
  model.diagnostics.iterations = iter;
  model.diagnostics.converged = converged;
  model.diagnostics.objective = f;
  model.diagnostics.gradient_norm = std::sqrt(detail::dot(g, g));
  return model;
}

inline LogisticModel train_logreg(const Matrix<double>& Xr, std::span<const Label> y, double l2) {
  LogisticOptions options;
  options.l2 = l2;
  return train_logreg(Xr, y, options);
}

// Class scores W s(x) + b in standardized space, one row per example.
inline Matrix<double> decision_function(const LogisticModel& model, const Matrix<double>& Xr) {
  require(Xr.cols() == model.features(), ErrorCode::ShapeMismatch,
          "model expects " + std::to_string(model.features()) + " columns, got " + std::to_string(Xr.cols()));
  const Matrix<double> Xs = model.standardizer.apply(Xr);
  const std::size_t C = model.classes();
  Matrix<double> scores(Xr.rows(), C);
  for (std::size_t r = 0; r < Xs.rows(); ++r) {
    const auto x = Xs.row(r);
    for (std::size_t c = 0; c < C; ++c) {
      const auto w = model.weights.row(c);
      scores(r, c) = model.bias[c] + detail::dot(w, x);
    }
  }
  return scores;
}

inline Matrix<double> predict_proba(const LogisticModel& model, const Matrix<double>& Xr) {
  Matrix<double> p = decision_function(model, Xr);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    const double zmax = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (auto& v : row) {
      v = std::exp(v - zmax);
      denom += v;
    }
    for (auto& v : row) v /= denom;
  }
  return p;
}

// Argmax class per row; ties go to the lowest class id.
inline std::vector<Label> predict(const LogisticModel& model, const Matrix<double>& Xr) {
  const Matrix<double> scores = decision_function(model, Xr);
  std::vector<Label> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    out[r] = static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

struct EvalReport {
  double micro_accuracy = 0.0;
  Matrix<std::size_t> confusion;  // truth x predicted
  std::size_t n = 0;
};

inline EvalReport evaluate(std::span<const Label> predicted, std::span<const Label> truth) {
  require(predicted.size() == truth.size(), ErrorCode::LengthMismatch,
          std::to_string(predicted.size()) + " predictions for " + std::to_string(truth.size()) + " labels");
  require(!truth.empty(), ErrorCode::EmptyDataset, "nothing to evaluate");
  const std::size_t C = std::max<std::size_t>({num_classes(predicted), num_classes(truth), 2});
  EvalReport report;
  report.n = truth.size();
  report.confusion = Matrix<std::size_t>(C, C, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++report.confusion(truth[i], predicted[i]);
    if (truth[i] == predicted[i]) ++correct;
  }
  report.micro_accuracy = static_cast<double>(correct) / static_cast<double>(report.n);
  return report;
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json confusion = nlohmann::json::array();
  for (std::size_t t = 0; t < r.confusion.rows(); ++t) {
    const auto row = r.confusion.row(t);
    confusion.push_back(std::vector<std::size_t>(row.begin(), row.end()));
  }
  j = nlohmann::json{{"micro_accuracy", r.micro_accuracy}, {"n", r.n}, {"confusion", confusion}};
}

}  // namespace neurosel
