#pragma once

// Experiment configuration shared by the command-line front end.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurosel/error.hpp"
#include "neurosel/forest.hpp"
#include "neurosel/importance.hpp"
#include "neurosel/multisource.hpp"
#include "neurosel/random.hpp"
#include "neurosel/transfer.hpp"

namespace neurosel {

struct ExperimentConfig {
  std::vector<std::string> sources;
  std::string target;
  SelectionMode mode = SelectionMode::Single;
  std::size_t K = 500;
  std::size_t J = 100;
  double alpha = 1.0;
  std::vector<double> alpha_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  double beta = 0.7;
  double gamma = 10.0;
  double epsilon = 1e-6;
  std::optional<std::size_t> budget;
  AllocationRule allocation = AllocationRule::WaterFill;
  bool stratified = true;
  RandomForestConfig rf;
  double l2 = 1.0;
  std::size_t repeats = 5;
  std::optional<std::uint64_t> seed;
  std::string output = "neurosel-out";
};

inline FeatureRule parse_feature_rule(const std::string& s) {
  if (s == "sqrt") return FeatureRule::Sqrt;
  if (s == "log2") return FeatureRule::Log2;
  if (s == "all") return FeatureRule::All;
  fail(ErrorCode::ConfigError, "features_per_split must be sqrt, log2 or all, got '" + s + "'");
}

inline std::string to_string(FeatureRule rule) {
  switch (rule) {
    case FeatureRule::Sqrt: return "sqrt";
    case FeatureRule::Log2: return "log2";
    case FeatureRule::All: return "all";
  }
  return "sqrt";
}

inline SelectionMode parse_mode(const std::string& s) {
  if (s == "single") return SelectionMode::Single;
  if (s == "multi") return SelectionMode::Multi;
  fail(ErrorCode::ConfigError, "mode must be single or multi, got '" + s + "'");
}

inline AllocationRule parse_allocation(const std::string& s) {
  if (s == "water_fill") return AllocationRule::WaterFill;
  if (s == "proportional") return AllocationRule::Proportional;
  fail(ErrorCode::ConfigError, "allocation must be water_fill or proportional, got '" + s + "'");
}

// Relative paths are resolved against `base_dir` (the config file's folder).
inline ExperimentConfig parse_experiment(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  try {
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path path(p);
      return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).string();
    };
    if (j.contains("sources")) {
      for (const auto& s : j.at("sources")) c.sources.push_back(resolve(s.get<std::string>()));
    }
    if (j.contains("target")) c.target = resolve(j.at("target").get<std::string>());
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    c.K = j.value("K", c.K);
    c.J = j.value("J", c.J);
    c.alpha = j.value("alpha", c.alpha);
    if (j.contains("alpha_grid")) j.at("alpha_grid").get_to(c.alpha_grid);
    c.beta = j.value("beta", c.beta);
    c.gamma = j.value("gamma", c.gamma);
    c.epsilon = j.value("epsilon", c.epsilon);
    if (j.contains("budget") && !j.at("budget").is_null()) c.budget = j.at("budget").get<std::size_t>();
    if (j.contains("allocation")) c.allocation = parse_allocation(j.at("allocation").get<std::string>());
    c.stratified = j.value("stratified", c.stratified);
    if (j.contains("rf")) {
      const auto& rf = j.at("rf");
      c.rf.num_trees = rf.value("num_trees", c.rf.num_trees);
      c.rf.max_depth = rf.value("max_depth", c.rf.max_depth);
      c.rf.min_samples_leaf = rf.value("min_samples_leaf", c.rf.min_samples_leaf);
      if (rf.contains("features_per_split")) {
        c.rf.features_per_split = parse_feature_rule(rf.at("features_per_split").get<std::string>());
      }
    }
    c.l2 = j.value("l2", c.l2);
    c.repeats = j.value("repeats", c.repeats);
    if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("output")) c.output = resolve(j.at("output").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("malformed config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  require(f != nullptr, ErrorCode::ConfigError, "cannot open config '" + path.string() + "'");
  std::string text;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, f)) > 0;) text.append(buf, n);
  std::fclose(f);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_experiment(j, path.parent_path());
}

// Seed precedence: explicit value, then NEUROSEL_SEED, then 0.
inline Seed resolve_seed(const std::optional<std::uint64_t>& explicit_seed) {
  if (explicit_seed) return Seed{*explicit_seed};
  if (const char* env = std::getenv("NEUROSEL_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    require(end != nullptr && *end == '\0', ErrorCode::ConfigError, "NEUROSEL_SEED must be an unsigned integer");
    return Seed{v};
  }
  return Seed{0};
}

// The result-determining part of the config. Thread count and output
// location are deliberately absent so they cannot change artifact bytes.
inline nlohmann::json canonical_json(const ExperimentConfig& c, Seed seed) {
  nlohmann::json j{{"sources", c.sources},
                   {"mode", c.mode == SelectionMode::Single ? "single" : "multi"},
                   {"K", c.K},
                   {"J", c.J},
                   {"alpha", c.alpha},
                   {"alpha_grid", c.alpha_grid},
                   {"beta", c.beta},
                   {"gamma", c.gamma},
                   {"epsilon", c.epsilon},
                   {"allocation", c.allocation == AllocationRule::WaterFill ? "water_fill" : "proportional"},
                   {"stratified", c.stratified},
                   {"rf",
                    {{"num_trees", c.rf.num_trees},
                     {"max_depth", c.rf.max_depth},
                     {"min_samples_leaf", c.rf.min_samples_leaf},
                     {"features_per_split", to_string(c.rf.features_per_split)}}},
                   {"l2", c.l2},
                   {"repeats", c.repeats},
                   {"seed", seed.value}};
  j["budget"] = c.budget ? nlohmann::json(*c.budget) : nlohmann::json(nullptr);
  return j;
}

inline std::string config_hash(const ExperimentConfig& c, Seed seed) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_json(c, seed).dump())));
  return buf;
}

inline void validate(const ExperimentConfig& c) {
  require(!c.sources.empty(), ErrorCode::NoSources, "config lists no sources");
  require(c.K >= 1, ErrorCode::KOutOfRange, "K must be >= 1");
  require(c.repeats >= 1, ErrorCode::ConfigError, "repeats must be >= 1");
  require(c.l2 >= 0.0, ErrorCode::ConfigError, "l2 must be >= 0");
}

inline ImportanceConfig importance_config(const ExperimentConfig& c) {
  ImportanceConfig ic;
  ic.iterations = c.J;
  ic.beta = c.beta;
  ic.alpha = c.alpha;
  ic.epsilon = c.epsilon;
  ic.stratified = c.stratified;
  ic.forest = c.rf;
  return ic;
}

inline SelectionConfig selection_config(const ExperimentConfig& c) {
  SelectionConfig sc;
  sc.mode = c.mode;
  sc.K = c.K;
  sc.importance = importance_config(c);
  sc.multi.importance = sc.importance;
  sc.multi.alpha_grid = c.alpha_grid;
  sc.multi.gamma = c.gamma;
  sc.multi.l2 = c.l2;
  sc.multi.budget = c.budget;
  sc.multi.allocation = c.allocation;
  return sc;
}

}  // namespace neurosel
