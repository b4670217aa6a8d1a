#pragma once

// Synthetic generators and naive reference oracles. Test-only: nothing in
// the library proper includes this header.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "neurosel/core.hpp"
#include "neurosel/multisource.hpp"
#include "neurosel/random.hpp"

namespace neurosel::testkit {

enum class PlantedRule {
  Threshold,     // label = [sum_k w_k x_k + noise > threshold]
  MajoritySign,  // label = [#{k : x_k > 0} + noise > |planted| / 2]
};

struct PlantedSpec {
  LayerMap layer_map{1, 10};
  std::vector<std::size_t> planted;
  std::vector<double> weights;  // per planted feature; empty = all ones
  PlantedRule rule = PlantedRule::Threshold;
  double threshold = 0.0;
  double noise_std = 0.0;
  std::size_t rows = 500;
  Seed seed{};
  std::string name = "planted";
  std::string task_tag = "synthetic";
};

// Features are i.i.d. N(0, 1); labels depend only on the planted features.
// With no planted features the labels are fair coin flips.
inline EmbeddingDataset gen_planted(const PlantedSpec& spec) {
  const std::size_t N = spec.layer_map.total();
  require(N >= 1 && spec.rows >= 2, ErrorCode::ConfigError, "spec error: need N >= 1 and rows >= 2");
  for (auto f : spec.planted) require(f < N, ErrorCode::ConfigError, "spec error: planted feature outside [0, N)");
  require(spec.weights.empty() || spec.weights.size() == spec.planted.size(), ErrorCode::ConfigError,
          "spec error: one weight per planted feature");
  Rng rng(spec.seed);
  EmbeddingDataset ds{spec.name, spec.task_tag, spec.layer_map, Matrix<float>(spec.rows, N), {}};
  ds.y.resize(spec.rows);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    auto row = ds.X.row(r);
    for (auto& v : row) v = static_cast<float>(rng.normal());
    if (spec.planted.empty()) {
      ds.y[r] = static_cast<Label>(rng.uniform_index(2));
      continue;
    }
    double score = 0.0;
    for (std::size_t k = 0; k < spec.planted.size(); ++k) {
      const double x = row[spec.planted[k]];
      const double w = spec.weights.empty() ? 1.0 : spec.weights[k];
      score += spec.rule == PlantedRule::Threshold ? w * x : (x > 0.0 ? 1.0 : 0.0);
    }
    const double cut = spec.rule == PlantedRule::Threshold ? spec.threshold : spec.planted.size() / 2.0;
    score += spec.noise_std * rng.normal();
    ds.y[r] = score > cut ? 1 : 0;
  }
  require(std::count(ds.y.begin(), ds.y.end(), Label{1}) > 0 && std::count(ds.y.begin(), ds.y.end(), Label{0}) > 0,
          ErrorCode::ConfigError, "spec error: generated labels contain a single class");
  return ds;
}

// r_i = 1 + #{j : m_j > m_i} + #{j < i : m_j == m_i}, by direct comparison.
inline std::vector<std::size_t> brute_rank(const std::vector<double>& m) {
  std::vector<std::size_t> ranks(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::size_t r = 1;
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (m[j] > m[i] || (m[j] == m[i] && j < i)) ++r;
    }
    ranks[i] = r;
  }
  return ranks;
}

// Bisection on the integer water level L: the largest L with
// sum_s min(size_s, L) <= budget. Sources above L get L, plus one leftover
// unit each in (size desc, name asc) order.
inline std::map<std::string, std::size_t> brute_waterfill(std::size_t budget,
                                                          const std::map<std::string, std::size_t>& sizes) {
  auto filled = [&](std::size_t level) {
    std::size_t s = 0;
    for (const auto& [name, size] : sizes) s += std::min(size, level);
    return s;
  };
  std::size_t lo = 0;
  std::size_t hi = 0;
  for (const auto& [name, size] : sizes) hi = std::max(hi, size);
  if (filled(hi) <= budget) {
    lo = hi;
  } else {
    // invariant: filled(lo) <= budget < filled(hi)
    while (hi - lo > 1) {
      const std::size_t mid = lo + (hi - lo) / 2;
      (filled(mid) <= budget ? lo : hi) = mid;
    }
  }
  std::map<std::string, std::size_t> out;
  std::vector<std::pair<std::size_t, std::string>> above;
  for (const auto& [name, size] : sizes) {
    out[name] = std::min(size, lo);
    if (size > lo) above.emplace_back(size, name);
  }
  std::sort(above.begin(), above.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::size_t leftover = budget - filled(lo);
  for (const auto& [size, name] : above) {
    if (leftover == 0) break;
    ++out[name];
    --leftover;
  }
  return out;
}

// Fraction of `truth` present in the selection.
inline double recall(const SelectionResult& selection, const std::vector<std::size_t>& truth) {
  const auto ids = selected_indices(selection);
  const std::set<std::size_t> chosen(ids.begin(), ids.end());
  std::size_t hit = 0;
  for (auto t : truth) hit += chosen.count(t);
  return truth.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace neurosel::testkit
