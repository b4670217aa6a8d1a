#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurosel/core.hpp"

namespace neurosel {

struct Provenance {
  std::string algorithm = "single";  // "single" | "multi"
  std::vector<std::string> sources;
  std::uint64_t seed = 0;
  nlohmann::json hyperparameters = nlohmann::json::object();
  nlohmann::json learners = nlohmann::json::array();
};

struct SelectionResult {
  std::vector<NeuronId> neuron_ids;  // descending score, ties by ascending id
  std::vector<double> scores;
  std::size_t n_features = 0;  // N of the scored vector
  Provenance provenance;

  std::size_t k() const noexcept { return neuron_ids.size(); }
};

// The K highest scores; equal scores are ordered by ascending neuron id.
inline SelectionResult select_top_k(std::span<const double> scores, std::size_t K) {
  const std::size_t N = scores.size();
  require(K >= 1 && K <= N, ErrorCode::KOutOfRange,
          "K must lie in [1, " + std::to_string(N) + "], got " + std::to_string(K));
  for (std::size_t i = 0; i < N; ++i) {
    require(std::isfinite(scores[i]), ErrorCode::ConfigError, "score " + std::to_string(i) + " is not finite");
  }
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(K), order.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  SelectionResult out;
  out.n_features = N;
  out.neuron_ids.reserve(K);
  out.scores.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    out.neuron_ids.push_back(NeuronId{order[k]});
    out.scores.push_back(scores[order[k]]);
  }
  return out;
}

inline std::vector<std::size_t> selected_indices(const SelectionResult& s) {
  std::vector<std::size_t> ids;
  ids.reserve(s.neuron_ids.size());
  for (auto id : s.neuron_ids) ids.push_back(id.index);
  return ids;
}

inline void to_json(nlohmann::json& j, const Provenance& p) {
  j = nlohmann::json{{"algorithm", p.algorithm},
                     {"sources", p.sources},
                     {"seed", p.seed},
                     {"hyperparameters", p.hyperparameters},
                     {"learners", p.learners}};
}

inline void from_json(const nlohmann::json& j, Provenance& p) {
  j.at("algorithm").get_to(p.algorithm);
  j.at("sources").get_to(p.sources);
  j.at("seed").get_to(p.seed);
  p.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
  p.learners = j.value("learners", nlohmann::json::array());
}

inline void to_json(nlohmann::json& j, const SelectionResult& s) {
  j = nlohmann::json{{"K", s.k()},
                     {"N", s.n_features},
                     {"ids", selected_indices(s)},
                     {"scores", s.scores},
                     {"provenance", s.provenance}};
}

inline void from_json(const nlohmann::json& j, SelectionResult& s) {
  const auto ids = j.at("ids").get<std::vector<std::size_t>>();
  j.at("scores").get_to(s.scores);
  j.at("N").get_to(s.n_features);
  require(ids.size() == j.at("K").get<std::size_t>() && s.scores.size() == ids.size(), ErrorCode::LengthMismatch,
          "selection K, ids and scores disagree");
  s.neuron_ids.clear();
  for (auto id : ids) {
    require(id < s.n_features, ErrorCode::IdOutOfRange, "selected id " + std::to_string(id) + " >= N");
    s.neuron_ids.push_back(NeuronId{id});
  }
  if (j.contains("provenance")) j.at("provenance").get_to(s.provenance);
}

}  // namespace neurosel
