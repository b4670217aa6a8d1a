#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>

#include "neurosel/experiment.hpp"
#include "neurosel/neurosel.hpp"
#include "neurosel/testkit.hpp"
#include "support.hpp"

#ifndef NEUROSEL_CLI_PATH
#error "NEUROSEL_CLI_PATH must point at the neurosel executable"
#endif

using namespace neurosel;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

RunResult run_cli(const test::TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string("cd '") + dir.path().string() + "' && '" + NEUROSEL_CLI_PATH + "' " + args +
                          " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, test::slurp(out), test::slurp(err)};
}

EmbeddingDataset make(const std::string& name, std::size_t N, std::size_t rows, std::uint64_t seed) {
  testkit::PlantedSpec spec;
  spec.layer_map = make_layer_map(3, N / 3);
  spec.planted = {1, N - 2};
  spec.rows = rows;
  spec.seed = Seed{seed};
  spec.name = name;
  spec.task_tag = "syn";
  return testkit::gen_planted(spec);
}

// Two sources and a target in `dir`, plus a small config.
void write_fixture(const test::TempDir& dir) {
  save_dataset(make("a", 12, 200, 1), dir / "a.nsd");
  save_dataset(make("b", 12, 150, 2), dir / "b.nsd");
  save_dataset(make("t", 12, 120, 3), dir / "t.nsd");
  test::spit(dir / "exp.json", R"({"sources": ["a.nsd", "b.nsd"], "target": "t.nsd", "K": 3, "J": 3,
    "rf": {"num_trees": 12, "max_depth": 6}, "repeats": 2, "seed": 11, "output": "out"})");
}

}  // namespace

TEST(ExperimentConfig, ParseAndOverrideDefaults) {
  const auto c = parse_experiment(nlohmann::json::parse(R"({"sources":["x.nsd"],"mode":"multi","budget":100})"), "/data");
  EXPECT_EQ(c.sources.front(), "/data/x.nsd");
  EXPECT_EQ(c.mode, SelectionMode::Multi);
  EXPECT_EQ(c.K, 500u);
  EXPECT_EQ(c.J, 100u);
  EXPECT_EQ(c.beta, 0.7);
  EXPECT_EQ(c.gamma, 10.0);
  EXPECT_EQ(c.epsilon, 1e-6);
  EXPECT_EQ(c.alpha, 1.0);
  EXPECT_EQ(c.repeats, 5u);
  EXPECT_EQ(*c.budget, 100u);
}

TEST(ExperimentConfig, BadValuesAreConfigErrors) {
  for (const char* text : {R"({"mode":"both"})", R"({"K":"many"})", R"({"rf":{"features_per_split":"half"}})"}) {
    try {
      parse_experiment(nlohmann::json::parse(text));
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(category_of(e.code()), ErrorCategory::Config) << text;
    }
  }
}

TEST(ExperimentConfig, HashIgnoresThreadsAndOutput) {
  ExperimentConfig a;
  a.sources = {"x"};
  ExperimentConfig b = a;
  b.rf.num_threads = 8;
  b.output = "elsewhere";
  EXPECT_EQ(config_hash(a, Seed{1}), config_hash(b, Seed{1}));
  EXPECT_NE(config_hash(a, Seed{1}), config_hash(a, Seed{2}));
  b.K = 7;
  EXPECT_NE(config_hash(a, Seed{1}), config_hash(b, Seed{1}));
}

TEST(ExperimentConfig, SeedPrecedence) {
  ::setenv("NEUROSEL_SEED", "77", 1);
  EXPECT_EQ(resolve_seed(std::nullopt).value, 77u);
  EXPECT_EQ(resolve_seed(5).value, 5u);
  ::unsetenv("NEUROSEL_SEED");
  EXPECT_EQ(resolve_seed(std::nullopt).value, 0u);
}

TEST(Cli, IngestDumpRoundTrip) {
  test::TempDir dir;
  const auto ds = make("x", 12, 30, 5);
  write_csv_dataset(ds, dir / "in.csv");
  auto r = run_cli(dir, "ingest --csv in.csv --layers 3 --width 4 --name x --tag syn --out x.nsd");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  r = run_cli(dir, "dump --in x.nsd --csv back.csv");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(test::slurp(dir / "in.csv"), test::slurp(dir / "back.csv"));
  const auto loaded = load_dataset(dir / "x.nsd");
  EXPECT_EQ(loaded.layer_map.layer_count, 3u);
  EXPECT_EQ(loaded.task_tag, "syn");

  r = run_cli(dir, "ingest --csv in.csv --layers 5 --width 4 --out y.nsd");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("DimensionMismatch"), std::string::npos);
}

TEST(Cli, SelectTransferArtifacts) {
  test::TempDir dir;
  write_fixture(dir);
  auto r = run_cli(dir, "select --config exp.json");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  for (const char* f : {"selection.json", "fingerprint.json", "importance.json"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
  const auto sel = nlohmann::json::parse(test::slurp(dir / "out/selection.json"));
  EXPECT_EQ(sel.at("K"), 3);
  EXPECT_EQ(sel.at("provenance").at("tool_version"), std::string(kVersion));
  EXPECT_EQ(sel.at("provenance").at("seed"), 11);
  EXPECT_TRUE(sel.at("provenance").contains("config_hash"));

  r = run_cli(dir, "transfer --config exp.json --selection out/selection.json");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("a+b ---> t, "), std::string::npos) << r.out;
  const auto report = nlohmann::json::parse(test::slurp(dir / "out/report.json"));
  EXPECT_EQ(report.at("runs").size(), 2u);
  EXPECT_TRUE(report.contains("provenance"));
}

TEST(Cli, MultiModeAndBudget) {
  test::TempDir dir;
  write_fixture(dir);
  const auto r = run_cli(dir, "select --config exp.json --mode multi --budget 200 --output m");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "m/meta_importance.json"));
  const auto alloc = nlohmann::json::parse(test::slurp(dir / "m/allocation.json"));
  EXPECT_EQ(alloc.at("per_source").at("a"), 100);
  EXPECT_EQ(alloc.at("per_source").at("b"), 100);
}

TEST(Cli, MultiWithOneSourceWarns) {
  test::TempDir dir;
  write_fixture(dir);
  const auto r = run_cli(dir, "select --source a.nsd --mode multi --K 2 --J 2 --trees 8 --output solo");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.err.find("degraded"), std::string::npos) << r.err;
}

TEST(Cli, FlagsOverrideConfig) {
  test::TempDir dir;
  write_fixture(dir);
  const auto r = run_cli(dir, "select --config exp.json --K 2 --seed 4 --output o2");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto sel = nlohmann::json::parse(test::slurp(dir / "o2/selection.json"));
  EXPECT_EQ(sel.at("K"), 2);
  EXPECT_EQ(sel.at("provenance").at("seed"), 4);
}

TEST(Cli, ExitCodes) {
  test::TempDir dir;
  write_fixture(dir);
  auto r = run_cli(dir, "transfer --config exp.json --selection missing.json");
  EXPECT_EQ(r.exit_code, 3);
  const auto err = nlohmann::json::parse(r.err);
  EXPECT_EQ(err.at("exit_code"), 3);
  EXPECT_TRUE(err.contains("message"));

  r = run_cli(dir, "select --config exp.json --K 0");
  EXPECT_EQ(r.exit_code, 2);
  r = run_cli(dir, "select --config exp.json --J 1");
  EXPECT_EQ(r.exit_code, 2);
  r = run_cli(dir, "select --config nope.json");
  EXPECT_EQ(r.exit_code, 2);
  r = run_cli(dir, "select --bogus-flag");
  EXPECT_EQ(r.exit_code, 2);

  // selection over N=12 applied to a target with N=9
  save_dataset(make("narrow", 9, 60, 4), dir / "narrow.nsd");
  ASSERT_EQ(run_cli(dir, "select --config exp.json").exit_code, 0);
  r = run_cli(dir, "transfer --config exp.json --target narrow.nsd --selection out/selection.json");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("IncompatibleSelection"), std::string::npos) << r.err;
}

TEST(Cli, FingerprintCommand) {
  test::TempDir dir;
  write_fixture(dir);
  ASSERT_EQ(run_cli(dir, "select --config exp.json").exit_code, 0);
  ASSERT_EQ(run_cli(dir, "select --config exp.json --mode multi --output m").exit_code, 0);
  const auto r = run_cli(dir,
                         "fingerprint --selection out/selection.json --selection m/selection.json --dataset t.nsd "
                         "--out fp.json --csv fp.csv");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto fp = nlohmann::json::parse(test::slurp(dir / "fp.json"));
  ASSERT_EQ(fp.size(), 2u);
  EXPECT_EQ(fp[0].at("layers").size(), 3u);
  EXPECT_EQ(test::slurp(dir / "fp.csv").rfind("source,task,layer0,layer1,layer2\n", 0), 0u);
  EXPECT_NE(r.out.find("similarity"), std::string::npos);
}

TEST(Cli, Sweep) {
  test::TempDir dir;
  write_fixture(dir);
  const auto r = run_cli(dir, "sweep --config exp.json --ks 2,4");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "out/report_K2.json"));
  EXPECT_TRUE(fs::exists(dir / "out/report_K4.json"));
  const auto sweep = nlohmann::json::parse(test::slurp(dir / "out/sweep.json"));
  EXPECT_EQ(sweep.at("results").size(), 2u);
  EXPECT_EQ(run_cli(dir, "sweep --config exp.json --ks 2,99").exit_code, 2);
}
