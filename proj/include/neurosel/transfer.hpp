#pragma once

// Unsupervised transfer: select on sources, train on sources, and only then
// touch the target (features at prediction, labels at evaluation).

#include <cmath>
#include <concepts>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurosel/importance.hpp"
#include "neurosel/logistic.hpp"
#include "neurosel/multisource.hpp"
#include "neurosel/select.hpp"

namespace neurosel {

enum class SelectionMode { Single, Multi };

struct SelectionConfig {
  SelectionMode mode = SelectionMode::Single;
  std::size_t K = 500;
  ImportanceConfig importance;  // single mode uses importance.alpha as given
  MultiConfig multi;            // multi mode
};

// Single-source selection over the (merged) sources. Multiple sources in
// single mode are concatenated first.
inline SelectionResult single_tsns(const std::vector<EmbeddingDataset>& sources, std::size_t K,
                                   const ImportanceConfig& config, Seed seed) {
  check_compatible(sources);
  std::vector<const EmbeddingDataset*> parts;
  for (const auto& s : sources) parts.push_back(&s);
  const EmbeddingDataset merged =
      sources.size() == 1 ? sources.front() : merge_datasets(parts, derive_seed(seed, "merge-train"));
  const ImportanceVector m = single_source_importance(merged, config, seed);
  SelectionResult sel = select_top_k(m.values, K);
  sel.provenance.algorithm = "single";
  for (const auto& s : sources) sel.provenance.sources.push_back(s.name);
  sel.provenance.seed = seed.value;
  sel.provenance.hyperparameters = {{"K", K},
                                    {"J", config.iterations},
                                    {"alpha", config.alpha},
                                    {"beta", config.beta},
                                    {"epsilon", config.epsilon},
                                    {"num_trees", config.forest.num_trees},
                                    {"max_depth", config.forest.max_depth}};
  return sel;
}

inline SelectionResult run_selection(const std::vector<EmbeddingDataset>& sources, const SelectionConfig& config,
                                     Seed seed) {
  if (config.mode == SelectionMode::Single) return single_tsns(sources, config.K, config.importance, seed);
  return multi_tsns(sources, config.K, config.multi, seed).selection;
}

// What run_transfer needs from a target. The pipeline asks for features
// only when predicting and for labels only when evaluating.
template <typename T>
concept TransferTarget = requires(T& t) {
  { t.name() } -> std::convertible_to<std::string>;
  { t.n_features() } -> std::convertible_to<std::size_t>;
  { t.features() } -> std::convertible_to<const Matrix<float>&>;
  { t.labels() } -> std::convertible_to<std::span<const Label>>;
};

class DatasetTarget {
 public:
  explicit DatasetTarget(const EmbeddingDataset& ds) : ds_(ds) {}

  std::string name() const { return ds_.name; }
  std::size_t n_features() const { return ds_.cols(); }
  const Matrix<float>& features() const { return ds_.X; }
  std::span<const Label> labels() const { return ds_.y; }

 private:
  const EmbeddingDataset& ds_;
};

enum class TransferPhase { Budget, Selection, Training, Prediction, Evaluation };

constexpr std::string_view to_string(TransferPhase phase) {
  switch (phase) {
    case TransferPhase::Budget: return "budget";
    case TransferPhase::Selection: return "selection";
    case TransferPhase::Training: return "training";
    case TransferPhase::Prediction: return "prediction";
    case TransferPhase::Evaluation: return "evaluation";
  }
  return "unknown";
}

class TransferObserver {
 public:
  virtual ~TransferObserver() = default;
  virtual void on_phase(std::size_t /*run*/, TransferPhase /*phase*/) {}
};

struct TransferOptions {
  std::size_t repeats = 5;
  double l2 = 1.0;
  std::optional<std::size_t> budget;  // caps the source rows used for training
  AllocationRule allocation = AllocationRule::WaterFill;
  Seed seed{};
};

struct TransferRun {
  std::uint64_t seed = 0;
  SelectionResult selection;
  EvalReport report;
  FitDiagnostics fit;
};

struct TransferReport {
  std::vector<std::string> sources;
  std::string target;
  std::vector<TransferRun> runs;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population standard deviation over runs
};

using SelectionPlan = std::variant<SelectionResult, SelectionConfig>;

// Run r uses seed derive_seed(options.seed, r).
template <TransferTarget Target>
TransferReport run_transfer(const std::vector<EmbeddingDataset>& sources, Target& target, const SelectionPlan& plan,
                            const TransferOptions& options, TransferObserver* observer = nullptr) {
  check_compatible(sources);
  require(options.repeats >= 1, ErrorCode::ConfigError, "repeats must be >= 1");
  require(target.n_features() == sources.front().cols(), ErrorCode::IncompatibleSelection,
          "target has N=" + std::to_string(target.n_features()) + ", sources have N=" +
              std::to_string(sources.front().cols()));
  auto phase = [&](std::size_t run, TransferPhase p) {
    if (observer) observer->on_phase(run, p);
  };

  TransferReport out;
  out.target = target.name();
  for (const auto& s : sources) out.sources.push_back(s.name);
  for (std::size_t r = 0; r < options.repeats; ++r) {
    const Seed run_seed = derive_seed(options.seed, r);
    TransferRun run;
    run.seed = run_seed.value;

    phase(r, TransferPhase::Budget);
    std::vector<EmbeddingDataset> budgeted;
    const std::vector<EmbeddingDataset>* train_sources = &sources;
    if (options.budget) {
      std::map<std::string, std::size_t> sizes;
      for (const auto& s : sources) sizes[s.name] = s.rows();
      budgeted = apply_budget(sources, allocate_budget(*options.budget, sizes, options.allocation),
                              derive_seed(run_seed, "budget"));
      train_sources = &budgeted;
    }

    phase(r, TransferPhase::Selection);
    if (const auto* fixed = std::get_if<SelectionResult>(&plan)) {
      run.selection = *fixed;
    } else {
      // the budget has already been applied above
      SelectionConfig config = std::get<SelectionConfig>(plan);
      config.multi.budget.reset();
      run.selection = run_selection(*train_sources, config, derive_seed(run_seed, "selection"));
    }
    require(run.selection.n_features == sources.front().cols(), ErrorCode::IncompatibleSelection,
            "selection N=" + std::to_string(run.selection.n_features) + " does not match sources");

    phase(r, TransferPhase::Training);
    std::vector<const EmbeddingDataset*> parts;
    for (const auto& s : *train_sources) parts.push_back(&s);
    const EmbeddingDataset train = merge_datasets(parts, derive_seed(run_seed, "train"));
    LogisticModel model = train_logreg(restrict(train, run.selection), train.y, options.l2);
    model.selected = run.selection.neuron_ids;
    run.fit = model.diagnostics;
    run.fit.objective_trace.clear();

    phase(r, TransferPhase::Prediction);
    const Matrix<float>& target_features = target.features();
    require(target_features.cols() == run.selection.n_features, ErrorCode::IncompatibleSelection,
            "target feature matrix does not match the selection");
    const std::vector<Label> predicted = predict(model, restrict_columns(target_features, run.selection.neuron_ids));

    phase(r, TransferPhase::Evaluation);
    run.report = evaluate(predicted, target.labels());
    out.runs.push_back(std::move(run));
  }

  double sum = 0.0;
  for (const auto& run : out.runs) sum += run.report.micro_accuracy;
  out.mean_accuracy = sum / static_cast<double>(out.runs.size());
  double var = 0.0;
  for (const auto& run : out.runs) var += std::pow(run.report.micro_accuracy - out.mean_accuracy, 2);
  out.std_accuracy = std::sqrt(var / static_cast<double>(out.runs.size()));
  return out;
}

inline TransferReport run_transfer(const std::vector<EmbeddingDataset>& sources, const EmbeddingDataset& target,
                                   const SelectionPlan& plan, const TransferOptions& options,
                                   TransferObserver* observer = nullptr) {
  DatasetTarget adapter(target);
  return run_transfer(sources, adapter, plan, options, observer);
}

inline void to_json(nlohmann::json& j, const TransferReport& r) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs) {
    nlohmann::json entry = run.report;
    entry["seed"] = run.seed;
    entry["K"] = run.selection.k();
    entry["fit"] = {{"iterations", run.fit.iterations},
                    {"converged", run.fit.converged},
                    {"objective", run.fit.objective},
                    {"gradient_norm", run.fit.gradient_norm}};
    runs.push_back(std::move(entry));
  }
  j = nlohmann::json{{"sources", r.sources},
                     {"target", r.target},
                     {"runs", runs},
                     {"mean_accuracy", r.mean_accuracy},
                     {"std_accuracy", r.std_accuracy}};
}

}  // namespace neurosel
