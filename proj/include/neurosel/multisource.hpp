#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurosel/core.hpp"
#include "neurosel/importance.hpp"
#include "neurosel/logistic.hpp"
#include "neurosel/select.hpp"

namespace neurosel {

// ---------------------------------------------------------------------------
// Learner pairs

struct LearnerPair {
  std::vector<std::string> train_sources;
  std::vector<std::string> tune_sources;

  friend bool operator==(const LearnerPair&, const LearnerPair&) = default;
};

struct PairPlan {
  std::vector<LearnerPair> pairs;
  std::optional<std::string> warning;  // set in the single-source degraded mode

  bool degenerate() const noexcept { return warning.has_value(); }
};

// One leave-one-out learner per source: tune on {D_m}, train on the rest.
inline PairPlan enumerate_pairs(const std::vector<std::string>& sources) {
  require(!sources.empty(), ErrorCode::NoSources, "at least one source is required");
  require(std::set<std::string>(sources.begin(), sources.end()).size() == sources.size(), ErrorCode::ConfigError,
          "source names must be unique");
  PairPlan plan;
  if (sources.size() == 1) {
    plan.pairs.push_back({{sources[0]}, {sources[0]}});
    plan.warning = "single source '" + sources[0] +
                   "': degraded mode, alpha is tuned on a held-out slice of the same source";
    return plan;
  }
  for (std::size_t m = 0; m < sources.size(); ++m) {
    LearnerPair pair;
    pair.tune_sources = {sources[m]};
    for (std::size_t o = 0; o < sources.size(); ++o) {
      if (o != m) pair.train_sources.push_back(sources[o]);
    }
    plan.pairs.push_back(std::move(pair));
  }
  return plan;
}

inline void validate(const LearnerPair& pair) {
  require(!pair.train_sources.empty() && !pair.tune_sources.empty(), ErrorCode::ConfigError,
          "learner pair needs non-empty train and tune sets");
  for (const auto& t : pair.tune_sources) {
    require(std::find(pair.train_sources.begin(), pair.train_sources.end(), t) == pair.train_sources.end(),
            ErrorCode::ConfigError, "source '" + t + "' is in both the train and tune set of a learner");
  }
}

// ---------------------------------------------------------------------------
// Rank scores and meta-aggregation

// r_i = 1 for the largest m_i, equal values take consecutive ranks in
// ascending index order; h_i = (2N - r_i) / N, so 1 <= h_i <= (2N-1)/N.
inline std::vector<double> rank_scores(std::span<const double> m) {
  const std::size_t N = m.size();
  for (std::size_t i = 0; i < N; ++i) {
    require(std::isfinite(m[i]), ErrorCode::ConfigError, "importance " + std::to_string(i) + " is not finite");
  }
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m[a] > m[b]; });
  std::vector<double> h(N);
  const double n = static_cast<double>(N);
  for (std::size_t pos = 0; pos < N; ++pos) h[order[pos]] = (2.0 * n - static_cast<double>(pos + 1)) / n;
  return h;
}

struct MetaImportance {
  std::vector<double> h;
  std::vector<std::vector<double>> per_learner;
  std::vector<double> alphas;
  double gamma = 10.0;
};

inline MetaImportance meta_aggregate(std::vector<std::vector<double>> per_learner) {
  require(!per_learner.empty(), ErrorCode::LengthMismatch, "no learner vectors to aggregate");
  const std::size_t N = per_learner.front().size();
  MetaImportance out;
  out.h.assign(N, 0.0);
  for (std::size_t p = 0; p < per_learner.size(); ++p) {
    require(per_learner[p].size() == N, ErrorCode::LengthMismatch,
            "learner " + std::to_string(p) + " has length " + std::to_string(per_learner[p].size()) + ", expected " +
                std::to_string(N));
    for (std::size_t i = 0; i < N; ++i) out.h[i] += per_learner[p][i];
  }
  out.per_learner = std::move(per_learner);
  return out;
}

// ---------------------------------------------------------------------------
// Sample-budget allocation

struct BudgetAllocation {
  std::map<std::string, std::size_t> per_source;
  std::size_t total_budget = 0;

  std::size_t allocated() const {
    std::size_t s = 0;
    for (const auto& [name, n] : per_source) s += n;
    return s;
  }
};

enum class AllocationRule { WaterFill, Proportional };

// Max-min fair split of `budget` over sources capped by their sizes.
// Each round the level is remaining_budget / remaining_sources; sources at or
// below it are filled completely and dropped. Survivors get floor(level) and
// the leftover units go one each to the largest survivors (name breaks ties).
inline BudgetAllocation water_fill(std::size_t budget, const std::map<std::string, std::size_t>& sizes) {
  require(!sizes.empty(), ErrorCode::NoSources, "no sources to allocate over");
  require(budget >= sizes.size(), ErrorCode::BudgetTooSmall,
          "budget " + std::to_string(budget) + " is smaller than the number of sources " +
              std::to_string(sizes.size()));
  BudgetAllocation out;
  out.total_budget = budget;
  std::vector<std::pair<std::string, std::size_t>> remaining(sizes.begin(), sizes.end());
  std::size_t left = budget;
  bool changed = true;
  while (changed && !remaining.empty()) {
    changed = false;
    const std::size_t R = remaining.size();
    std::vector<std::pair<std::string, std::size_t>> keep;
    for (const auto& [name, size] : remaining) {
      // size <= left / R without rounding
      if (size * R <= left) {
        out.per_source[name] = size;
        changed = true;
      } else {
        keep.emplace_back(name, size);
      }
    }
    if (changed) {
      for (const auto& [name, size] : remaining) {
        if (out.per_source.count(name)) left -= size;
      }
      remaining = std::move(keep);
    }
  }
  if (!remaining.empty()) {
    const std::size_t level = left / remaining.size();
    std::size_t extra = left - level * remaining.size();
    std::stable_sort(remaining.begin(), remaining.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [name, size] : remaining) {
      out.per_source[name] = level + (extra > 0 ? 1 : 0);
      if (extra > 0) --extra;
    }
  }
  return out;
}

// Largest-remainder split proportional to source size.
inline BudgetAllocation proportional_allocation(std::size_t budget, const std::map<std::string, std::size_t>& sizes) {
  require(!sizes.empty(), ErrorCode::NoSources, "no sources to allocate over");
  require(budget >= sizes.size(), ErrorCode::BudgetTooSmall, "budget is smaller than the number of sources");
  BudgetAllocation out;
  out.total_budget = budget;
  std::size_t total = 0;
  for (const auto& [name, size] : sizes) total += size;
  if (budget >= total) {
    out.per_source = sizes;
    return out;
  }
  std::vector<std::pair<double, std::string>> remainders;
  std::size_t assigned = 0;
  for (const auto& [name, size] : sizes) {
    const double exact = static_cast<double>(budget) * static_cast<double>(size) / static_cast<double>(total);
    const auto base = static_cast<std::size_t>(std::floor(exact));
    out.per_source[name] = base;
    assigned += base;
    remainders.emplace_back(exact - static_cast<double>(base), name);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < budget; ++k, ++assigned) ++out.per_source[remainders[k % remainders.size()].second];
  return out;
}

inline BudgetAllocation allocate_budget(std::size_t budget, const std::map<std::string, std::size_t>& sizes,
                                        AllocationRule rule) {
  return rule == AllocationRule::WaterFill ? water_fill(budget, sizes) : proportional_allocation(budget, sizes);
}

// Subsamples each source to its allocation (stratified); sources at full
// allocation are kept as-is.
inline std::vector<EmbeddingDataset> apply_budget(const std::vector<EmbeddingDataset>& sources,
                                                  const BudgetAllocation& allocation, Seed seed) {
  std::vector<EmbeddingDataset> out;
  out.reserve(sources.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto& src = sources[s];
    const std::size_t n = allocation.per_source.at(src.name);
    if (n >= src.rows()) {
      out.push_back(src);
      continue;
    }
    const double fraction = static_cast<double>(n) / static_cast<double>(src.rows());
    auto rows = subsample_indices(src.y, fraction, derive_seed(seed, src.name), true);
    rows.resize(std::min(rows.size(), n));
    out.push_back(take_rows(src, rows));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Alpha tuning

struct MultiConfig {
  ImportanceConfig importance;  // alpha inside is ignored; it is tuned
  std::vector<double> alpha_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  double gamma = 10.0;  // percent of the tune sources sampled for alpha selection
  double l2 = 1.0;
  std::optional<std::size_t> budget;
  AllocationRule allocation = AllocationRule::WaterFill;
  std::vector<LearnerPair> pairs;  // explicit learner pairs; empty = leave-one-out
};

struct AlphaTuning {
  double alpha = 1.0;
  ImportanceVector importance;
  std::vector<std::pair<double, double>> scores;  // (alpha, tune micro accuracy)
  std::size_t tune_rows = 0;
};

inline void validate_tuning(double gamma, const std::vector<double>& grid) {
  require(gamma > 0.0 && gamma <= 100.0, ErrorCode::ConfigError, "gamma must lie in (0, 100]");
  require(!grid.empty(), ErrorCode::ConfigError, "alpha grid is empty");
  for (double a : grid) require(a >= 0.0 && a <= 1.0, ErrorCode::ConfigError, "alpha grid values must lie in [0, 1]");
}

// Picks alpha from the grid by micro accuracy on a gamma% sample of `tune`,
// training the logistic classifier on `train` restricted to the top-K
// neurons for each alpha. Ties go to the larger alpha.
inline AlphaTuning tune_alpha(const IterationImportances& iterations, const EmbeddingDataset& train,
                              const EmbeddingDataset& tune, std::size_t K, const MultiConfig& config, Seed seed) {
  validate_tuning(config.gamma, config.alpha_grid);
  const double epsilon = config.importance.epsilon;
  AlphaTuning out;
  if (config.alpha_grid.size() == 1) {
    out.alpha = config.alpha_grid.front();
    out.importance = aggregate_importance(iterations, out.alpha, epsilon);
    return out;
  }
  require(tune.rows() > 0, ErrorCode::EmptyTuneSample, "tune dataset '" + tune.name + "' is empty");
  const double fraction = config.gamma / 100.0;
  const bool can_stratify = subsample_size(tune.rows(), fraction) >= num_classes(tune);
  const auto tune_rows = subsample_indices(tune.y, fraction, derive_seed(seed, "tune"), can_stratify);
  require(!tune_rows.empty(), ErrorCode::EmptyTuneSample, "gamma sample of '" + tune.name + "' is empty");
  const EmbeddingDataset tune_sample = take_rows(tune, tune_rows);
  out.tune_rows = tune_rows.size();

  std::vector<double> grid = config.alpha_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  double best_accuracy = -1.0;
  for (double alpha : grid) {
    ImportanceVector m = aggregate_importance(iterations, alpha, epsilon);
    const SelectionResult sel = select_top_k(m.values, K);
    const LogisticModel model = train_logreg(restrict(train, sel), train.y, config.l2);
    const double accuracy = evaluate(predict(model, restrict(tune_sample, sel)), tune_sample.y).micro_accuracy;
    out.scores.emplace_back(alpha, accuracy);
    if (accuracy >= best_accuracy) {  // ascending grid, so ties favour larger alpha
      best_accuracy = accuracy;
      out.alpha = alpha;
      out.importance = std::move(m);
    }
  }
  return out;
}

inline AlphaTuning tune_alpha(const EmbeddingDataset& train, const EmbeddingDataset& tune, std::size_t K,
                              const MultiConfig& config, Seed seed) {
  validate_tuning(config.gamma, config.alpha_grid);
  return tune_alpha(compute_iteration_importances(train, config.importance, derive_seed(seed, "importance")), train,
                    tune, K, config, seed);
}

// ---------------------------------------------------------------------------
// End-to-end multi-source selection

struct MultiTsnsResult {
  SelectionResult selection;
  MetaImportance meta;
  std::vector<LearnerPair> pairs;
  std::optional<BudgetAllocation> allocation;
  std::vector<std::string> warnings;
};

inline void check_compatible(const std::vector<EmbeddingDataset>& sources) {
  require(!sources.empty(), ErrorCode::NoSources, "at least one source is required");
  for (const auto& s : sources) {
    require(compatible(s, sources.front()), ErrorCode::IncompatibleSources,
            "source '" + s.name + "' differs from '" + sources.front().name + "' in layer geometry or class count");
  }
}

inline MultiTsnsResult multi_tsns(const std::vector<EmbeddingDataset>& input, std::size_t K, const MultiConfig& config,
                                  Seed seed) {
  check_compatible(input);
  validate(config.importance);
  validate_tuning(config.gamma, config.alpha_grid);
  require(K >= 1 && K <= input.front().cols(), ErrorCode::KOutOfRange, "K must lie in [1, N]");

  MultiTsnsResult result;
  std::vector<EmbeddingDataset> budgeted;
  const std::vector<EmbeddingDataset>* sources = &input;
  if (config.budget) {
    std::map<std::string, std::size_t> sizes;
    for (const auto& s : input) sizes[s.name] = s.rows();
    result.allocation = allocate_budget(*config.budget, sizes, config.allocation);
    budgeted = apply_budget(input, *result.allocation, derive_seed(seed, "budget"));
    sources = &budgeted;
  }
  std::map<std::string, const EmbeddingDataset*> by_name;
  std::vector<std::string> names;
  for (const auto& s : *sources) {
    by_name[s.name] = &s;
    names.push_back(s.name);
  }

  PairPlan plan;
  if (config.pairs.empty()) {
    plan = enumerate_pairs(names);
  } else {
    plan.pairs = config.pairs;
    for (const auto& p : plan.pairs) {
      validate(p);
      for (const auto& n : p.train_sources) require(by_name.count(n) > 0, ErrorCode::ConfigError, "unknown source " + n);
      for (const auto& n : p.tune_sources) require(by_name.count(n) > 0, ErrorCode::ConfigError, "unknown source " + n);
    }
  }
  if (plan.warning) result.warnings.push_back(*plan.warning);

  std::vector<std::vector<double>> per_learner;
  std::vector<double> alphas;
  nlohmann::json learners = nlohmann::json::array();
  for (std::size_t p = 0; p < plan.pairs.size(); ++p) {
    const auto& pair = plan.pairs[p];
    const Seed learner_seed = derive_seed(seed, p);
    EmbeddingDataset train, tune;
    MultiConfig learner_config = config;
    if (plan.degenerate()) {
      // hold out gamma% of the single source for tuning, train on the rest
      const auto& only = *by_name.at(pair.train_sources.front());
      const double fraction = config.gamma / 100.0;
      auto held = subsample_indices(only.y, fraction, derive_seed(learner_seed, "holdout"),
                                    subsample_size(only.rows(), fraction) >= num_classes(only));
      std::vector<char> is_held(only.rows(), 0);
      for (auto r : held) is_held[r] = 1;
      std::vector<std::size_t> rest;
      for (std::size_t r = 0; r < only.rows(); ++r) {
        if (!is_held[r]) rest.push_back(r);
      }
      train = take_rows(only, rest);
      tune = take_rows(only, held);
      learner_config.gamma = 100.0;
    } else {
      std::vector<const EmbeddingDataset*> train_parts, tune_parts;
      for (const auto& n : pair.train_sources) train_parts.push_back(by_name.at(n));
      for (const auto& n : pair.tune_sources) tune_parts.push_back(by_name.at(n));
      train = merge_datasets(train_parts, derive_seed(learner_seed, "merge-train"));
      tune = merge_datasets(tune_parts, derive_seed(learner_seed, "merge-tune"));
    }
    AlphaTuning tuned = tune_alpha(train, tune, K, learner_config, learner_seed);
    per_learner.push_back(rank_scores(tuned.importance.values));
    alphas.push_back(tuned.alpha);
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& [a, acc] : tuned.scores) scores.push_back({{"alpha", a}, {"accuracy", acc}});
    learners.push_back({{"train", pair.train_sources},
                        {"tune", pair.tune_sources},
                        {"alpha", tuned.alpha},
                        {"tune_rows", tuned.tune_rows},
                        {"tune_scores", scores}});
  }

  result.meta = meta_aggregate(std::move(per_learner));
  result.meta.alphas = alphas;
  result.meta.gamma = config.gamma;
  result.selection = select_top_k(result.meta.h, K);
  result.pairs = plan.pairs;

  auto& prov = result.selection.provenance;
  prov.algorithm = "multi";
  prov.sources = names;
  prov.seed = seed.value;
  prov.learners = std::move(learners);
  prov.hyperparameters = {{"P", plan.pairs.size()},
                          {"K", K},
                          {"gamma", config.gamma},
                          {"J", config.importance.iterations},
                          {"beta", config.importance.beta},
                          {"epsilon", config.importance.epsilon},
                          {"alpha_grid", config.alpha_grid},
                          {"l2", config.l2}};
  if (config.budget) prov.hyperparameters["budget"] = *config.budget;
  return result;
}

inline void to_json(nlohmann::json& j, const BudgetAllocation& a) {
  j = nlohmann::json{{"total_budget", a.total_budget}, {"allocated", a.allocated()}, {"per_source", a.per_source}};
}

inline void to_json(nlohmann::json& j, const MetaImportance& m) {
  j = nlohmann::json{{"N", m.h.size()}, {"gamma", m.gamma}, {"alphas", m.alphas}, {"h", m.h}, {"per_learner", m.per_learner}};
}

}  // namespace neurosel
