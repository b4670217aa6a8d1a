#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "neurosel/error.hpp"
#include "neurosel/matrix.hpp"
#include "neurosel/random.hpp"

namespace neurosel {

using Label = std::uint16_t;

// Geometry of the concatenated per-layer activations.
struct LayerMap {
  std::size_t layer_count = 1;
  std::size_t layer_width = 1;

  std::size_t total() const noexcept { return layer_count * layer_width; }
  std::size_t layer_of(std::size_t neuron) const noexcept { return neuron / layer_width; }

  friend bool operator==(const LayerMap&, const LayerMap&) = default;
};

inline LayerMap make_layer_map(std::size_t layer_count, std::size_t layer_width) {
  require(layer_count >= 1 && layer_width >= 1, ErrorCode::ConfigError, "layer_count and layer_width must be >= 1");
  return LayerMap{layer_count, layer_width};
}

struct NeuronId {
  std::size_t index = 0;

  friend auto operator<=>(const NeuronId&, const NeuronId&) = default;
};

// Activations are held as float (the on-disk precision); every consumer
// promotes to double before doing arithmetic.
struct EmbeddingDataset {
  std::string name;
  std::string task_tag;
  LayerMap layer_map;
  Matrix<float> X;
  std::vector<Label> y;

  std::size_t rows() const noexcept { return X.rows(); }
  std::size_t cols() const noexcept { return X.cols(); }

  friend bool operator==(const EmbeddingDataset&, const EmbeddingDataset&) = default;
};

inline std::size_t num_classes(std::span<const Label> labels) {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

inline std::size_t num_classes(const EmbeddingDataset& ds) { return num_classes(ds.y); }

inline std::vector<std::size_t> class_counts(std::span<const Label> labels, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (Label l : labels) ++counts[l];
  return counts;
}

// Labels must be exactly {0..C-1} with C >= 2.
inline void validate_labels(std::span<const Label> labels) {
  const std::size_t classes = num_classes(labels);
  require(classes >= 2, ErrorCode::LabelError, "labels must contain at least two classes");
  const auto counts = class_counts(labels, classes);
  for (std::size_t c = 0; c < classes; ++c) {
    require(counts[c] > 0, ErrorCode::LabelError,
            "labels are not contiguous: class " + std::to_string(c) + " has no examples");
  }
}

inline void validate_finite(const Matrix<float>& X) {
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto row = X.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!std::isfinite(row[c])) {
        fail(ErrorCode::NonFiniteActivation,
             "non-finite activation at row " + std::to_string(r) + ", col " + std::to_string(c));
      }
    }
  }
}

// Checks every dataset invariant; throws the matching error on the first violation.
inline void validate(const EmbeddingDataset& ds) {
  require(ds.layer_map.layer_count >= 1 && ds.layer_map.layer_width >= 1, ErrorCode::DimensionMismatch,
          "layer geometry must be positive");
  require(ds.rows() > 0, ErrorCode::EmptyDataset, "dataset '" + ds.name + "' has no rows");
  require(ds.cols() == ds.layer_map.total(), ErrorCode::DimensionMismatch,
          "column count " + std::to_string(ds.cols()) + " != layer_count*layer_width " +
              std::to_string(ds.layer_map.total()));
  require(ds.y.size() == ds.rows(), ErrorCode::DimensionMismatch,
          "label count " + std::to_string(ds.y.size()) + " != row count " + std::to_string(ds.rows()));
  validate_finite(ds.X);
  validate_labels(ds.y);
}

inline EmbeddingDataset take_rows(const EmbeddingDataset& ds, std::span<const std::size_t> rows) {
  EmbeddingDataset out;
  out.name = ds.name;
  out.task_tag = ds.task_tag;
  out.layer_map = ds.layer_map;
  out.X = Matrix<float>(rows.size(), ds.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = ds.X.row(rows[i]);
    std::copy(src.begin(), src.end(), out.X.row(i).begin());
    out.y.push_back(ds.y[rows[i]]);
  }
  return out;
}

inline std::size_t subsample_size(std::size_t rows, double fraction) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(rows) - 1e-9));
}

// Row indices of a without-replacement subsample, in draw order.
//
// Stratified mode gives each class its largest-remainder quota of
// ceil(fraction * rows), so per-class proportions match the full set to
// within one row.
inline std::vector<std::size_t> subsample_indices(std::span<const Label> labels, double fraction, Seed seed,
                                                  bool stratified = true) {
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::FractionOutOfRange,
          "fraction must lie in (0, 1], got " + std::to_string(fraction));
  const std::size_t rows = labels.size();
  require(rows > 0, ErrorCode::EmptyDataset, "cannot subsample an empty dataset");
  const std::size_t target = std::min(rows, subsample_size(rows, fraction));
  Rng rng(seed);

  if (!stratified) {
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < target; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.uniform_index(rows - i));
      std::swap(order[i], order[j]);
    }
    order.resize(target);
    return order;
  }

  const std::size_t classes = num_classes(labels);
  require(target >= classes, ErrorCode::TooFewExamples,
          "stratified subsample of " + std::to_string(target) + " rows cannot cover " + std::to_string(classes) +
              " classes");
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t r = 0; r < rows; ++r) by_class[labels[r]].push_back(r);

  std::vector<std::size_t> quota(classes);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double exact = static_cast<double>(target) * static_cast<double>(by_class[c].size()) / rows;
    quota[c] = std::min(by_class[c].size(), static_cast<std::size_t>(std::floor(exact)));
    assigned += quota[c];
    remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < target; k = (k + 1) % classes) {
    const std::size_t c = remainders[k].second;
    if (quota[c] < by_class[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }

  std::vector<std::size_t> picked;
  picked.reserve(target);
  for (std::size_t c = 0; c < classes; ++c) {
    auto& pool = by_class[c];
    for (std::size_t i = 0; i < quota[c]; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
      std::swap(pool[i], pool[j]);
      picked.push_back(pool[i]);
    }
  }
  rng.shuffle(std::span<std::size_t>(picked));
  return picked;
}

inline EmbeddingDataset subsample(const EmbeddingDataset& ds, double fraction, Seed seed, bool stratified = true) {
  const auto rows = subsample_indices(ds.y, fraction, seed, stratified);
  return take_rows(ds, rows);
}

inline bool compatible(const EmbeddingDataset& a, const EmbeddingDataset& b) {
  return a.layer_map == b.layer_map && a.cols() == b.cols() && num_classes(a) == num_classes(b);
}

// Concatenates datasets in name order, then shuffles rows by seed.
inline EmbeddingDataset merge_datasets(std::vector<const EmbeddingDataset*> parts, Seed seed) {
  require(!parts.empty(), ErrorCode::NoSources, "nothing to merge");
  std::stable_sort(parts.begin(), parts.end(), [](const auto* a, const auto* b) { return a->name < b->name; });
  std::size_t total = 0;
  for (const auto* p : parts) {
    require(compatible(*p, *parts.front()), ErrorCode::IncompatibleSources,
            "dataset '" + p->name + "' does not match '" + parts.front()->name + "'");
    total += p->rows();
  }
  EmbeddingDataset out;
  out.layer_map = parts.front()->layer_map;
  out.task_tag = parts.front()->task_tag;
  for (std::size_t i = 0; i < parts.size(); ++i) out.name += (i ? "+" : "") + parts[i]->name;
  if (parts.size() == 1) {
    out.X = parts.front()->X;
    out.y = parts.front()->y;
  } else {
    std::vector<float> data;
    data.reserve(total * out.layer_map.total());
    for (const auto* p : parts) {
      data.insert(data.end(), p->X.data().begin(), p->X.data().end());
      out.y.insert(out.y.end(), p->y.begin(), p->y.end());
    }
    out.X = Matrix<float>(total, out.layer_map.total(), std::move(data));
  }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  auto shuffled = take_rows(out, order);
  shuffled.name = out.name;
  return shuffled;
}

}  // namespace neurosel
