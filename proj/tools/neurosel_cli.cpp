// neurosel: command-line front end.
//
//   neurosel ingest      --csv raw.csv --layers L --width W --out data.nsd
//   neurosel dump        --in data.nsd --csv out.csv
//   neurosel select      --config exp.json [overrides]
//   neurosel transfer    --config exp.json --selection out/selection.json
//   neurosel fingerprint --selection sel.json [--selection ...] --dataset data.nsd
//   neurosel sweep       --config exp.json [--ks 100,300,500,700,1024]
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
// Errors are printed to stderr as one JSON object.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "neurosel/experiment.hpp"
#include "neurosel/neurosel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(neurosel::ErrorCode code) {
  switch (neurosel::category_of(code)) {
    case neurosel::ErrorCategory::Config: return kExitConfig;
    case neurosel::ErrorCategory::Data: return kExitData;
    case neurosel::ErrorCategory::Numeric: return kExitNumeric;
  }
  return kExitData;
}

void report_error(const std::string& code, const std::string& message, int exit_code) {
  std::cerr << json{{"error", code}, {"message", message}, {"exit_code", exit_code}}.dump() << std::endl;
}

void warn(const std::string& message) { std::cerr << "warning: " << message << std::endl; }

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  neurosel::require(static_cast<bool>(out), neurosel::ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  neurosel::require(static_cast<bool>(in), neurosel::ErrorCode::IoError, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    neurosel::fail(neurosel::ErrorCode::IoError, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

// Flags that override the config file.
struct Overrides {
  std::vector<std::string> sources;
  std::string target;
  std::string mode;
  std::optional<std::size_t> K, J, budget, repeats, trees, depth;
  std::optional<double> alpha, beta, gamma, epsilon, l2;
  std::optional<std::uint64_t> seed;
  std::string output;
  std::string allocation;
  unsigned threads = 0;

  void attach(CLI::App* app) {
    app->add_option("--source", sources, "Source NSD file (repeatable; replaces config sources)");
    app->add_option("--target", target, "Target NSD file");
    app->add_option("--mode", mode, "single | multi")->check(CLI::IsMember({"single", "multi"}));
    app->add_option("--K", K, "Number of neurons to select");
    app->add_option("--J", J, "Subsample iterations per importance estimate");
    app->add_option("--alpha", alpha, "Mean/stability blend (single mode)");
    app->add_option("--beta", beta, "Subsample fraction per iteration");
    app->add_option("--gamma", gamma, "Percent of tune sources used to pick alpha");
    app->add_option("--epsilon", epsilon, "Stability denominator offset");
    app->add_option("--budget", budget, "Total source-sample budget");
    app->add_option("--allocation", allocation, "water_fill | proportional")
        ->check(CLI::IsMember({"water_fill", "proportional"}));
    app->add_option("--trees", trees, "Trees per forest");
    app->add_option("--depth", depth, "Maximum tree depth");
    app->add_option("--l2", l2, "L2 strength of the logistic classifier");
    app->add_option("--repeats", repeats, "Independent transfer runs");
    app->add_option("--seed", seed, "Master seed (falls back to NEUROSEL_SEED)");
    app->add_option("--output", output, "Output directory");
    app->add_option("--threads", threads, "Worker cap (0 = all cores); never changes results");
  }

  void apply(neurosel::ExperimentConfig& c) const {
    if (!sources.empty()) c.sources = sources;
    if (!target.empty()) c.target = target;
    if (!mode.empty()) c.mode = neurosel::parse_mode(mode);
    if (K) c.K = *K;
    if (J) c.J = *J;
    if (alpha) c.alpha = *alpha;
    if (beta) c.beta = *beta;
    if (gamma) c.gamma = *gamma;
    if (epsilon) c.epsilon = *epsilon;
    if (budget) c.budget = *budget;
    if (!allocation.empty()) c.allocation = neurosel::parse_allocation(allocation);
    if (trees) c.rf.num_trees = *trees;
    if (depth) c.rf.max_depth = *depth;
    if (l2) c.l2 = *l2;
    if (repeats) c.repeats = *repeats;
    if (seed) c.seed = *seed;
    if (!output.empty()) c.output = output;
    c.rf.num_threads = threads;
  }
};

struct Experiment {
  neurosel::ExperimentConfig config;
  neurosel::Seed seed;
  std::string hash;
};

Experiment resolve_experiment(const std::string& config_path, const Overrides& overrides) {
  Experiment e;
  if (!config_path.empty()) e.config = neurosel::load_experiment(config_path);
  overrides.apply(e.config);
  neurosel::validate(e.config);
  e.seed = neurosel::resolve_seed(e.config.seed);
  e.hash = neurosel::config_hash(e.config, e.seed);
  return e;
}

json provenance_block(const Experiment& e) {
  return json{{"config_hash", e.hash}, {"seed", e.seed.value}, {"tool_version", std::string(neurosel::kVersion)}};
}

std::vector<neurosel::EmbeddingDataset> load_sources(const neurosel::ExperimentConfig& c) {
  std::vector<neurosel::EmbeddingDataset> sources;
  for (const auto& path : c.sources) sources.push_back(neurosel::load_dataset(path));
  neurosel::check_compatible(sources);
  return sources;
}

std::string joined_names(const std::vector<neurosel::EmbeddingDataset>& sources) {
  std::string out;
  for (std::size_t i = 0; i < sources.size(); ++i) out += (i ? "+" : "") + sources[i].name;
  return out;
}

std::vector<neurosel::EmbeddingDataset> budgeted(const std::vector<neurosel::EmbeddingDataset>& sources,
                                                 const Experiment& e, std::optional<neurosel::BudgetAllocation>* out) {
  if (!e.config.budget) return sources;
  std::map<std::string, std::size_t> sizes;
  for (const auto& s : sources) sizes[s.name] = s.rows();
  auto allocation = neurosel::allocate_budget(*e.config.budget, sizes, e.config.allocation);
  auto result = neurosel::apply_budget(sources, allocation, neurosel::derive_seed(e.seed, "budget"));
  if (out) *out = std::move(allocation);
  return result;
}

struct SelectionArtifacts {
  neurosel::SelectionResult selection;
  json importance;  // importance.json or meta_importance.json payload
  std::optional<neurosel::BudgetAllocation> allocation;
};

SelectionArtifacts run_select(const std::vector<neurosel::EmbeddingDataset>& sources, const Experiment& e,
                              std::size_t K) {
  SelectionArtifacts out;
  const auto sc = neurosel::selection_config(e.config);
  if (e.config.mode == neurosel::SelectionMode::Single) {
    const auto used = budgeted(sources, e, &out.allocation);
    std::vector<const neurosel::EmbeddingDataset*> parts;
    for (const auto& s : used) parts.push_back(&s);
    const auto merged =
        used.size() == 1 ? used.front() : neurosel::merge_datasets(parts, neurosel::derive_seed(e.seed, "merge-train"));
    auto importance = neurosel::single_source_importance(merged, sc.importance, e.seed);
    out.selection = neurosel::select_top_k(importance.values, K);
    auto& prov = out.selection.provenance;
    prov.algorithm = "single";
    for (const auto& s : sources) prov.sources.push_back(s.name);
    prov.seed = e.seed.value;
    prov.hyperparameters = {{"K", K},
                            {"J", e.config.J},
                            {"alpha", e.config.alpha},
                            {"beta", e.config.beta},
                            {"epsilon", e.config.epsilon},
                            {"num_trees", e.config.rf.num_trees},
                            {"max_depth", e.config.rf.max_depth}};
    if (e.config.budget) prov.hyperparameters["budget"] = *e.config.budget;
    out.importance = importance;
  } else {
    auto config = sc.multi;
    auto result = neurosel::multi_tsns(sources, K, config, e.seed);
    for (const auto& w : result.warnings) warn(w);
    out.selection = std::move(result.selection);
    out.importance = result.meta;
    out.allocation = result.allocation;
  }
  return out;
}

json selection_json(const neurosel::SelectionResult& s, const Experiment& e) {
  json j = s;
  j["provenance"].update(provenance_block(e));
  return j;
}

neurosel::Fingerprint fingerprint_for(const neurosel::SelectionResult& s,
                                      const std::vector<neurosel::EmbeddingDataset>& sources) {
  auto fp = neurosel::compute_fingerprint(s, sources.front().layer_map);
  fp.task_tag = sources.front().task_tag;
  return fp;
}

neurosel::TransferOptions transfer_options(const Experiment& e) {
  neurosel::TransferOptions opts;
  opts.repeats = e.config.repeats;
  opts.l2 = e.config.l2;
  opts.budget = e.config.budget;
  opts.allocation = e.config.allocation;
  opts.seed = neurosel::derive_seed(e.seed, "transfer");
  return opts;
}

void print_transfer_rows(const neurosel::TransferReport& report) {
  std::string sources;
  for (std::size_t i = 0; i < report.sources.size(); ++i) sources += (i ? "+" : "") + report.sources[i];
  for (std::size_t r = 0; r < report.runs.size(); ++r) {
    std::printf("%s ---> %s, %.1f  (run %zu)\n", sources.c_str(), report.target.c_str(),
                100.0 * report.runs[r].report.micro_accuracy, r);
  }
  std::printf("%s ---> %s, %.1f  (mean of %zu, std %.2f)\n", sources.c_str(), report.target.c_str(),
              100.0 * report.mean_accuracy, report.runs.size(), 100.0 * report.std_accuracy);
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& csv, std::optional<std::size_t> layers, std::optional<std::size_t> width,
               const std::string& name, const std::string& tag, const std::string& out) {
  std::optional<neurosel::LayerMap> geometry;
  if (layers || width) {
    neurosel::require(layers && width, neurosel::ErrorCode::ConfigError, "--layers and --width go together");
    geometry = neurosel::make_layer_map(*layers, *width);
  }
  const auto ds = neurosel::read_csv_dataset(csv, geometry, name.empty() ? fs::path(csv).stem().string() : name, tag);
  neurosel::save_dataset(ds, out);
  std::cout << json{{"name", ds.name},
                    {"task", ds.task_tag},
                    {"rows", ds.rows()},
                    {"N", ds.cols()},
                    {"layer_count", ds.layer_map.layer_count},
                    {"layer_width", ds.layer_map.layer_width},
                    {"classes", neurosel::num_classes(ds)},
                    {"output", out}}
                   .dump()
            << std::endl;
  return 0;
}

int cmd_dump(const std::string& in, const std::string& csv) {
  const auto ds = neurosel::load_dataset(in);
  if (!csv.empty()) neurosel::write_csv_dataset(ds, csv);
  std::cout << json{{"name", ds.name},
                    {"task", ds.task_tag},
                    {"rows", ds.rows()},
                    {"N", ds.cols()},
                    {"layer_count", ds.layer_map.layer_count},
                    {"layer_width", ds.layer_map.layer_width},
                    {"classes", neurosel::num_classes(ds)}}
                   .dump()
            << std::endl;
  return 0;
}

int cmd_select(const Experiment& e) {
  const auto sources = load_sources(e.config);
  const fs::path out_dir(e.config.output);
  fs::create_directories(out_dir);
  const auto artifacts = run_select(sources, e, e.config.K);
  write_json(out_dir / "selection.json", selection_json(artifacts.selection, e));
  json fp = fingerprint_for(artifacts.selection, sources);
  fp["provenance"] = provenance_block(e);
  write_json(out_dir / "fingerprint.json", fp);
  json imp = artifacts.importance;
  imp["provenance"] = provenance_block(e);
  write_json(out_dir / (e.config.mode == neurosel::SelectionMode::Single ? "importance.json" : "meta_importance.json"),
             imp);
  if (artifacts.allocation) {
    json alloc = *artifacts.allocation;
    alloc["provenance"] = provenance_block(e);
    write_json(out_dir / "allocation.json", alloc);
  }
  std::cout << "selected " << artifacts.selection.k() << " of " << artifacts.selection.n_features << " neurons from "
            << joined_names(sources) << " -> " << (out_dir / "selection.json").string() << std::endl;
  return 0;
}

int cmd_transfer(const Experiment& e, const std::string& selection_path) {
  neurosel::require(!e.config.target.empty(), neurosel::ErrorCode::ConfigError, "no target configured");
  neurosel::SelectionResult selection = read_json(selection_path).get<neurosel::SelectionResult>();
  const auto sources = load_sources(e.config);
  const auto target = neurosel::load_dataset(e.config.target);
  require(selection.n_features == target.cols(), neurosel::ErrorCode::IncompatibleSelection,
          "selection was made over N=" + std::to_string(selection.n_features) + " but target '" + target.name +
              "' has N=" + std::to_string(target.cols()));
  const auto report = neurosel::run_transfer(sources, target, selection, transfer_options(e));
  const fs::path out_dir(e.config.output);
  fs::create_directories(out_dir);
  json j = report;
  j["provenance"] = provenance_block(e);
  j["provenance"]["selection_K"] = selection.k();
  write_json(out_dir / "report.json", j);
  std::printf("S ---> T, accuracy\n");
  print_transfer_rows(report);
  return 0;
}

int cmd_fingerprint(const std::vector<std::string>& selections, std::optional<std::size_t> layers,
                    std::optional<std::size_t> width, const std::string& dataset, const std::string& task,
                    const std::string& out_json, const std::string& out_csv) {
  neurosel::LayerMap map;
  std::string tag = task;
  if (!dataset.empty()) {
    const auto ds = neurosel::load_dataset(dataset);
    map = ds.layer_map;
    if (tag.empty()) tag = ds.task_tag;
  } else {
    neurosel::require(layers && width, neurosel::ErrorCode::ConfigError, "give --dataset or both --layers and --width");
    map = neurosel::make_layer_map(*layers, *width);
  }
  std::vector<neurosel::Fingerprint> fps;
  for (const auto& path : selections) {
    const auto sel = read_json(path).get<neurosel::SelectionResult>();
    require(sel.n_features == map.total(), neurosel::ErrorCode::IncompatibleSelection,
            "selection '" + path + "' has N=" + std::to_string(sel.n_features) + ", geometry gives " +
                std::to_string(map.total()));
    auto fp = neurosel::compute_fingerprint(sel, map);
    fp.task_tag = tag;
    if (fp.source_name.empty()) fp.source_name = fs::path(path).stem().string();
    fps.push_back(std::move(fp));
  }
  json j = fps.size() == 1 ? json(fps.front()) : json(fps);
  if (!out_json.empty()) {
    write_json(out_json, j);
  } else {
    std::cout << j.dump(2) << std::endl;
  }
  if (!out_csv.empty()) {
    std::ofstream csv(out_csv, std::ios::binary | std::ios::trunc);
    neurosel::require(static_cast<bool>(csv), neurosel::ErrorCode::IoError, "cannot write '" + out_csv + "'");
    csv << neurosel::fingerprint_table_csv(fps);
  }
  if (fps.size() > 1) {
    std::vector<neurosel::Fingerprint> candidates(fps.begin() + 1, fps.end());
    std::printf("similarity to %s\n", fps.front().source_name.c_str());
    for (const auto& r : neurosel::rank_sources_by_similarity(fps.front(), candidates)) {
      std::printf("  %s, %.4f\n", candidates[r.index].source_name.c_str(), r.similarity);
    }
  }
  return 0;
}

int cmd_sweep(const Experiment& e, const std::vector<std::size_t>& ks) {
  neurosel::require(!e.config.target.empty(), neurosel::ErrorCode::ConfigError, "no target configured");
  const auto sources = load_sources(e.config);
  const auto target = neurosel::load_dataset(e.config.target);
  const fs::path out_dir(e.config.output);
  fs::create_directories(out_dir);
  for (auto K : ks) {
    neurosel::require(K >= 1 && K <= sources.front().cols(), neurosel::ErrorCode::KOutOfRange,
                      "sweep K=" + std::to_string(K) + " outside [1, " + std::to_string(sources.front().cols()) + "]");
  }

  // Single mode: the importance vector does not depend on K, compute it once.
  std::optional<SelectionArtifacts> shared;
  if (e.config.mode == neurosel::SelectionMode::Single) shared = run_select(sources, e, ks.front());

  json summary = json::array();
  std::printf("S ---> T, K, accuracy\n");
  for (auto K : ks) {
    neurosel::SelectionResult selection;
    if (shared) {
      const auto& values = shared->importance.at("values").get_ref<const json::array_t&>();
      std::vector<double> scores;
      scores.reserve(values.size());
      for (const auto& v : values) scores.push_back(v.get<double>());
      selection = neurosel::select_top_k(scores, K);
      selection.provenance = shared->selection.provenance;
      selection.provenance.hyperparameters["K"] = K;
    } else {
      selection = run_select(sources, e, K).selection;
    }
    const auto report = neurosel::run_transfer(sources, target, selection, transfer_options(e));
    write_json(out_dir / ("selection_K" + std::to_string(K) + ".json"), selection_json(selection, e));
    json rj = report;
    rj["provenance"] = provenance_block(e);
    rj["provenance"]["selection_K"] = K;
    write_json(out_dir / ("report_K" + std::to_string(K) + ".json"), rj);
    summary.push_back({{"K", K}, {"mean_accuracy", report.mean_accuracy}, {"std_accuracy", report.std_accuracy}});
    std::printf("%s ---> %s, %zu, %.1f\n", joined_names(sources).c_str(), target.name.c_str(), K,
                100.0 * report.mean_accuracy);
  }
  write_json(out_dir / "sweep.json", json{{"results", summary}, {"provenance", provenance_block(e)}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-specific neuron selection and unsupervised transfer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(neurosel::kVersion));

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert a CSV debug matrix (label,n0,n1,...) to NSD");
  std::string ingest_csv, ingest_out, ingest_name, ingest_tag = "unknown";
  std::optional<std::size_t> ingest_layers, ingest_width;
  ingest->add_option("--csv", ingest_csv, "CSV input with header label,n0,n1,...")->required()->check(CLI::ExistingFile);
  ingest->add_option("--layers", ingest_layers, "Layer count");
  ingest->add_option("--width", ingest_width, "Neurons per layer");
  ingest->add_option("--name", ingest_name, "Dataset name (default: file stem)");
  ingest->add_option("--tag", ingest_tag, "Task tag, e.g. sentiment");
  ingest->add_option("--out", ingest_out, "Output NSD path")->required();

  // dump
  auto* dump = app.add_subcommand("dump", "Print an NSD summary, optionally writing it back out as CSV");
  std::string dump_in, dump_csv;
  dump->add_option("--in", dump_in, "NSD input")->required();
  dump->add_option("--csv", dump_csv, "CSV output");

  // select / transfer / sweep share the experiment flags
  std::string select_config, transfer_config, sweep_config, transfer_selection;
  Overrides select_over, transfer_over, sweep_over;
  auto* select = app.add_subcommand("select", "Select task-specific neurons (writes selection.json, fingerprint.json)");
  select->add_option("--config", select_config, "Experiment config (JSON)");
  select_over.attach(select);

  auto* transfer = app.add_subcommand("transfer", "Train on sources with a selection, evaluate on the target");
  transfer->add_option("--config", transfer_config, "Experiment config (JSON)");
  transfer->add_option("--selection", transfer_selection, "selection.json from `select`")->required();
  transfer_over.attach(transfer);

  auto* sweep = app.add_subcommand("sweep", "Run select + transfer for each K");
  std::vector<std::size_t> sweep_ks = {100, 300, 500, 700, 1024};
  sweep->add_option("--config", sweep_config, "Experiment config (JSON)");
  sweep->add_option("--ks", sweep_ks, "K values")->delimiter(',');
  sweep_over.attach(sweep);

  auto* fingerprint = app.add_subcommand("fingerprint", "Per-layer distribution of selected neurons");
  std::vector<std::string> fp_selections;
  std::optional<std::size_t> fp_layers, fp_width;
  std::string fp_dataset, fp_task, fp_out, fp_csv;
  fingerprint->add_option("--selection", fp_selections, "selection.json (repeatable)")->required();
  fingerprint->add_option("--dataset", fp_dataset, "NSD file providing the layer geometry");
  fingerprint->add_option("--layers", fp_layers, "Layer count");
  fingerprint->add_option("--width", fp_width, "Neurons per layer");
  fingerprint->add_option("--task", fp_task, "Task tag recorded in the output");
  fingerprint->add_option("--out", fp_out, "JSON output (default: stdout)");
  fingerprint->add_option("--csv", fp_csv, "CSV heatmap table (rows = sources, cols = layers)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("ConfigError", e.what(), kExitConfig);
    return kExitConfig;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_csv, ingest_layers, ingest_width, ingest_name, ingest_tag, ingest_out);
    if (*dump) return cmd_dump(dump_in, dump_csv);
    if (*select) return cmd_select(resolve_experiment(select_config, select_over));
    if (*transfer) return cmd_transfer(resolve_experiment(transfer_config, transfer_over), transfer_selection);
    if (*sweep) return cmd_sweep(resolve_experiment(sweep_config, sweep_over), sweep_ks);
    if (*fingerprint) return cmd_fingerprint(fp_selections, fp_layers, fp_width, fp_dataset, fp_task, fp_out, fp_csv);
  } catch (const neurosel::Error& e) {
    const int code = exit_code_for(e.code());
    report_error(std::string(neurosel::to_string(e.code())), e.detail(), code);
    return code;
  } catch (const fs::filesystem_error& e) {
    report_error("IoError", e.what(), kExitData);
    return kExitData;
  } catch (const std::exception& e) {
    report_error("InternalError", e.what(), kExitNumeric);
    return kExitNumeric;
  }
  return 0;
}
