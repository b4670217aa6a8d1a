#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurosel/core.hpp"
#include "neurosel/select.hpp"

namespace neurosel {

// Fraction of the K selected neurons that falls in each layer.
struct Fingerprint {
  std::vector<double> per_layer;
  std::size_t K = 0;
  std::string source_name;
  std::string task_tag;

  std::size_t layer_count() const noexcept { return per_layer.size(); }
};

inline Fingerprint compute_fingerprint(const SelectionResult& selection, const LayerMap& layer_map) {
  require(selection.k() > 0, ErrorCode::KOutOfRange, "empty selection");
  Fingerprint fp;
  fp.K = selection.k();
  fp.per_layer.assign(layer_map.layer_count, 0.0);
  std::vector<std::size_t> counts(layer_map.layer_count, 0);
  for (auto id : selection.neuron_ids) {
    require(id.index < layer_map.total(), ErrorCode::IdOutOfRange,
            "neuron " + std::to_string(id.index) + " outside layer map of " + std::to_string(layer_map.total()));
    ++counts[layer_map.layer_of(id.index)];
  }
  for (std::size_t l = 0; l < counts.size(); ++l) {
    fp.per_layer[l] = static_cast<double>(counts[l]) / static_cast<double>(fp.K);
  }
  if (!selection.provenance.sources.empty()) {
    for (std::size_t i = 0; i < selection.provenance.sources.size(); ++i) {
      fp.source_name += (i ? "+" : "") + selection.provenance.sources[i];
    }
  }
  return fp;
}

// Mean over repeated selections (e.g. one per seed).
inline Fingerprint average_fingerprint(const std::vector<Fingerprint>& runs) {
  require(!runs.empty(), ErrorCode::ConfigError, "no fingerprints to average");
  Fingerprint out = runs.front();
  std::fill(out.per_layer.begin(), out.per_layer.end(), 0.0);
  for (const auto& fp : runs) {
    require(fp.layer_count() == out.layer_count(), ErrorCode::LayerCountMismatch, "fingerprints differ in layer count");
    for (std::size_t l = 0; l < fp.layer_count(); ++l) out.per_layer[l] += fp.per_layer[l];
  }
  for (auto& v : out.per_layer) v /= static_cast<double>(runs.size());
  return out;
}

// Cosine similarity; both vectors are non-negative so the result is in [0, 1].
inline double fingerprint_similarity(const Fingerprint& a, const Fingerprint& b) {
  require(a.layer_count() == b.layer_count(), ErrorCode::LayerCountMismatch,
          std::to_string(a.layer_count()) + " vs " + std::to_string(b.layer_count()) + " layers");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    dot += a.per_layer[l] * b.per_layer[l];
    na += a.per_layer[l] * a.per_layer[l];
    nb += b.per_layer[l] * b.per_layer[l];
  }
  require(na > 0.0 && nb > 0.0, ErrorCode::ZeroVector, "cannot compare an all-zero fingerprint");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

struct RankedSource {
  std::size_t index = 0;  // position in the candidate list
  double similarity = 0.0;
};

inline std::vector<RankedSource> rank_sources_by_similarity(const Fingerprint& target,
                                                            const std::vector<Fingerprint>& candidates) {
  std::vector<RankedSource> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out.push_back({i, fingerprint_similarity(target, candidates[i])});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.similarity > b.similarity; });
  return out;
}

inline void to_json(nlohmann::json& j, const Fingerprint& fp) {
  j = nlohmann::json{{"task", fp.task_tag}, {"source", fp.source_name}, {"K", fp.K}, {"layers", fp.per_layer}};
}

inline void from_json(const nlohmann::json& j, Fingerprint& fp) {
  j.at("task").get_to(fp.task_tag);
  j.at("source").get_to(fp.source_name);
  j.at("K").get_to(fp.K);
  j.at("layers").get_to(fp.per_layer);
}

// Rows = sources, columns = layers.
inline std::string fingerprint_table_csv(const std::vector<Fingerprint>& rows) {
  std::ostringstream out;
  out.precision(17);
  const std::size_t layers = rows.empty() ? 0 : rows.front().layer_count();
  out << "source,task";
  for (std::size_t l = 0; l < layers; ++l) out << ",layer" << l;
  out << '\n';
  for (const auto& fp : rows) {
    require(fp.layer_count() == layers, ErrorCode::LayerCountMismatch, "fingerprints differ in layer count");
    out << fp.source_name << ',' << fp.task_tag;
    for (double v : fp.per_layer) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace neurosel
