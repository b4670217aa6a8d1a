#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "neurosel/core.hpp"
#include "neurosel/parallel.hpp"
#include "neurosel/random.hpp"

namespace neurosel {

enum class FeatureRule { Sqrt, Log2, All };

struct RandomForestConfig {
  std::size_t num_trees = 100;
  std::size_t max_depth = 20;
  FeatureRule features_per_split = FeatureRule::Sqrt;
  std::size_t min_samples_leaf = 1;
  Seed seed{};
  // 0 = hardware concurrency. Never affects the fitted model.
  unsigned num_threads = 0;

  // 1000 trees of depth 200, the large-scale setting.
  static RandomForestConfig large_scale() {
    RandomForestConfig c;
    c.num_trees = 1000;
    c.max_depth = 200;
    return c;
  }
};

inline void validate(const RandomForestConfig& config) {
  require(config.num_trees >= 1, ErrorCode::ConfigError, "num_trees must be >= 1");
  require(config.max_depth >= 1, ErrorCode::ConfigError, "max_depth must be >= 1");
  require(config.min_samples_leaf >= 1, ErrorCode::ConfigError, "min_samples_leaf must be >= 1");
}

inline std::size_t features_per_split(FeatureRule rule, std::size_t n_features) {
  switch (rule) {
    case FeatureRule::Sqrt:
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(n_features))));
    case FeatureRule::Log2:
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::log2(static_cast<double>(n_features))));
    case FeatureRule::All:
      return n_features;
  }
  return n_features;
}

struct TreeNode {
  static constexpr std::uint32_t kLeaf = 0xFFFFFFFFu;

  std::uint32_t feature = kLeaf;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  // Weighted Gini decrease n_t*G_t - n_L*G_L - n_R*G_R of this split.
  double impurity_decrease = 0.0;
  // Offset of this leaf's class distribution in DecisionTree::leaf_values.
  std::uint32_t value_offset = 0;

  bool is_leaf() const noexcept { return feature == kLeaf; }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  std::vector<double> leaf_values;

  std::span<const double> predict_proba(std::span<const float> row, std::size_t classes) const {
    std::uint32_t at = 0;
    while (!nodes[at].is_leaf()) {
      const auto& n = nodes[at];
      at = static_cast<double>(row[n.feature]) <= n.threshold ? n.left : n.right;
    }
    return {leaf_values.data() + nodes[at].value_offset, classes};
  }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::size_t n_features = 0;
  std::size_t n_classes = 0;

  friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

namespace detail {

struct SortItem {
  float value;
  Label label;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix<float>& X, std::span<const Label> y, std::size_t classes, const RandomForestConfig& config)
      : X_(X), y_(y), classes_(classes), config_(config), mtry_(features_per_split(config.features_per_split, X.cols())) {
    features_.resize(X.cols());
    std::iota(features_.begin(), features_.end(), std::uint32_t{0});
  }

  DecisionTree build(std::vector<std::uint32_t> samples, Rng& rng) {
    samples_ = std::move(samples);
    tree_ = DecisionTree{};
    buffer_.resize(samples_.size());
    struct Task {
      std::size_t begin, end, depth;
      std::uint32_t node;
    };
    std::vector<Task> stack;
    tree_.nodes.emplace_back();
    stack.push_back({0, samples_.size(), 0, 0});
    std::vector<double> counts(classes_);
    while (!stack.empty()) {
      const Task task = stack.back();
      stack.pop_back();
      std::fill(counts.begin(), counts.end(), 0.0);
      for (std::size_t i = task.begin; i < task.end; ++i) counts[y_[samples_[i]]] += 1.0;
      const std::size_t n = task.end - task.begin;
      double sum_sq = 0.0;
      for (double c : counts) sum_sq += c * c;
      const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; }) <= 1;

      Split split;
      if (!pure && task.depth < config_.max_depth && n >= 2 * config_.min_samples_leaf) {
        split = best_split(task.begin, task.end, sum_sq / static_cast<double>(n), rng);
      }
      if (!split.valid) {
        make_leaf(task.node, counts, n);
        continue;
      }
      const auto mid = std::partition(samples_.begin() + static_cast<std::ptrdiff_t>(task.begin),
                                      samples_.begin() + static_cast<std::ptrdiff_t>(task.end), [&](std::uint32_t r) {
                                        return static_cast<double>(X_(r, split.feature)) <= split.threshold;
                                      });
      const std::size_t cut = static_cast<std::size_t>(mid - samples_.begin());
      const auto left = static_cast<std::uint32_t>(tree_.nodes.size());
      tree_.nodes.emplace_back();
      tree_.nodes.emplace_back();
      auto& node = tree_.nodes[task.node];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      node.impurity_decrease = split.decrease;
      // right child pushed first so the left subtree is built first
      stack.push_back({cut, task.end, task.depth + 1, left + 1});
      stack.push_back({task.begin, cut, task.depth + 1, left});
    }
    return std::move(tree_);
  }

 private:
  struct Split {
    bool valid = false;
    std::uint32_t feature = 0;
    double threshold = 0.0;
    double decrease = 0.0;
    double score = -1.0;
  };

  void make_leaf(std::uint32_t node, const std::vector<double>& counts, std::size_t n) {
    tree_.nodes[node].value_offset = static_cast<std::uint32_t>(tree_.leaf_values.size());
    for (double c : counts) tree_.leaf_values.push_back(c / static_cast<double>(n));
  }

  // Visits features in random order until mtry non-constant ones have been
  // scored. Score = sum_c L_c^2/n_L + sum_c R_c^2/n_R; maximizing it
  // minimizes the weighted child Gini impurity.
  Split best_split(std::size_t begin, std::size_t end, double parent_term, Rng& rng) {
    const std::size_t n = end - begin;
    const std::size_t min_leaf = config_.min_samples_leaf;
    Split best;
    std::vector<double> left(classes_), right(classes_);
    std::size_t scored = 0;
    for (std::size_t k = 0; k < features_.size() && scored < mtry_; ++k) {
      const auto j = k + static_cast<std::size_t>(rng.uniform_index(features_.size() - k));
      std::swap(features_[k], features_[j]);
      const std::uint32_t f = features_[k];

      for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t r = samples_[begin + i];
        buffer_[i] = SortItem{X_(r, f), y_[r]};
      }
      std::sort(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(n),
                [](const SortItem& a, const SortItem& b) { return a.value < b.value; });
      if (!(buffer_[0].value < buffer_[n - 1].value)) continue;
      ++scored;

      std::fill(left.begin(), left.end(), 0.0);
      std::fill(right.begin(), right.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) right[buffer_[i].label] += 1.0;
      double left_sq = 0.0;
      double right_sq = 0.0;
      for (double c : right) right_sq += c * c;
      for (std::size_t i = 1; i < n; ++i) {
        const Label moved = buffer_[i - 1].label;
        left_sq += 2.0 * left[moved] + 1.0;
        left[moved] += 1.0;
        right_sq -= 2.0 * right[moved] - 1.0;
        right[moved] -= 1.0;
        if (i < min_leaf || n - i < min_leaf) continue;
        if (!(buffer_[i - 1].value < buffer_[i].value)) continue;
        const double score = left_sq / static_cast<double>(i) + right_sq / static_cast<double>(n - i);
        if (score > best.score) {
          const double lo = buffer_[i - 1].value;
          const double hi = buffer_[i].value;
          double threshold = lo + (hi - lo) / 2.0;
          if (!(threshold < hi)) threshold = lo;
          best = Split{true, f, threshold, 0.0, score};
        }
      }
    }
    if (best.valid) best.decrease = std::max(0.0, best.score - parent_term);
    return best;
  }

  const Matrix<float>& X_;
  std::span<const Label> y_;
  std::size_t classes_;
  const RandomForestConfig& config_;
  std::size_t mtry_;
  std::vector<std::uint32_t> features_;
  std::vector<std::uint32_t> samples_;
  std::vector<SortItem> buffer_;
  DecisionTree tree_;
};

}  // namespace detail

// Trains on the given rows of `ds`; each tree on a bootstrap resample of
// them. Tree t uses seed derive_seed(config.seed, t).
inline ForestModel fit_forest(const EmbeddingDataset& ds, std::span<const std::size_t> rows,
                              const RandomForestConfig& config) {
  validate(config);
  require(ds.cols() == ds.layer_map.total(), ErrorCode::DimensionMismatch, "dataset columns do not match layer map");
  require(!rows.empty(), ErrorCode::EmptyDataset, "no rows to train on");
  const Label first = ds.y[rows.front()];
  require(std::any_of(rows.begin(), rows.end(), [&](std::size_t r) { return ds.y[r] != first; }),
          ErrorCode::SingleClassError, "training rows contain a single class");

  ForestModel model;
  model.n_features = ds.cols();
  model.n_classes = num_classes(ds);
  model.trees.resize(config.num_trees);
  parallel_for(config.num_trees, config.num_threads, [&](std::size_t t) {
    Rng rng(derive_seed(config.seed, t));
    std::vector<std::uint32_t> sample(rows.size());
    for (auto& s : sample) s = static_cast<std::uint32_t>(rows[rng.uniform_index(rows.size())]);
    detail::TreeBuilder builder(ds.X, ds.y, model.n_classes, config);
    model.trees[t] = builder.build(std::move(sample), rng);
  });
  return model;
}

inline ForestModel fit_forest(const EmbeddingDataset& ds, const RandomForestConfig& config) {
  std::vector<std::size_t> rows(ds.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return fit_forest(ds, rows, config);
}

inline std::vector<double> predict_proba(const ForestModel& model, std::span<const float> row) {
  std::vector<double> proba(model.n_classes, 0.0);
  for (const auto& tree : model.trees) {
    const auto p = tree.predict_proba(row, model.n_classes);
    for (std::size_t c = 0; c < proba.size(); ++c) proba[c] += p[c];
  }
  for (auto& p : proba) p /= static_cast<double>(model.trees.size());
  return proba;
}

inline Label predict(const ForestModel& model, std::span<const float> row) {
  const auto proba = predict_proba(model, row);
  return static_cast<Label>(std::max_element(proba.begin(), proba.end()) - proba.begin());
}

// Mean decrease in Gini impurity. Each tree's vector is normalized to sum to
// one, trees without any split are skipped, and the average is renormalized.
// A forest without any split yields the all-zero vector.
inline std::vector<double> gini_importance(const ForestModel& model) {
  std::vector<double> total(model.n_features, 0.0);
  std::vector<double> per_tree(model.n_features, 0.0);
  std::vector<char> seen(model.n_features, 0);
  std::vector<std::uint32_t> touched;
  std::size_t contributing = 0;
  for (const auto& tree : model.trees) {
    double sum = 0.0;
    touched.clear();
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      if (!seen[node.feature]) {
        seen[node.feature] = 1;
        touched.push_back(node.feature);
      }
      per_tree[node.feature] += node.impurity_decrease;
      sum += node.impurity_decrease;
    }
    if (sum > 0.0) {
      ++contributing;
      for (auto f : touched) total[f] += per_tree[f] / sum;
    }
    for (auto f : touched) {
      per_tree[f] = 0.0;
      seen[f] = 0;
    }
  }
  if (contributing == 0) return total;
  const double sum = std::accumulate(total.begin(), total.end(), 0.0);
  for (auto& v : total) v /= sum;
  return total;
}

}  // namespace neurosel
