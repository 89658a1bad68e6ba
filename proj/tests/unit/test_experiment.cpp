#include <catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <set>

#include "polyglot/experiment.hpp"
#include "polyglot/io.hpp"

using namespace polyglot;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("polyglot-test-" + name);
  fs::remove_all(p);
  return p;
}

experiment::ExperimentConfig tiny_config() {
  auto c = experiment::default_config();
  c.scenario_name = c.scenario.name = "tiny";
  c.scenario.utterances_per_reading = 10;
  synth::GroupSpec a;
  a.name = "A";
  a.size = 2;
  a.readings = 1;
  synth::GroupSpec x;
  x.name = "X";
  x.size = 1;
  x.readings = 2;
  x.role = "target";
  x.inventory_from = "A";
  c.scenario.groups = {a, x};
  c.pretrain.epochs = 1;
  c.adapt.epochs = 1;
  c.beam = 1;
  experiment::Condition base;
  base.name = "baseline";
  experiment::Condition mono;
  mono.name = "mono";
  mono.pretrain = false;
  c.conditions = {base, mono};
  return c;
}

}  // namespace

TEST_CASE("bundled experiments validate and survive a JSON round trip", "[experiment]") {
  for (const auto& name : experiment::bundled_scenario_names()) {
    INFO(name);
    const auto c = experiment::bundled_experiment(name);
    CHECK_NOTHROW(c.validate());
    const auto j = experiment::to_json(c);
    CHECK(experiment::to_json(experiment::from_json(j)) == j);
  }
  CHECK_THROWS(experiment::bundled_experiment("no-such-scenario"));
}

TEST_CASE("bundled scenario shapes", "[experiment]") {
  const auto diverse = experiment::bundled_experiment("diverse-groups");
  std::set<std::size_t> scripts;
  std::size_t pretrain_languages = 0;
  for (const auto& g : diverse.scenario.groups) {
    if (g.role != "pretrain") continue;
    CHECK(g.size == 4);
    scripts.insert(g.script);
    pretrain_languages += g.size;
  }
  CHECK(scripts.size() == 2);
  CHECK(pretrain_languages == 8);

  const auto many = experiment::bundled_experiment("many-languages");
  std::size_t many_count = 0;
  for (const auto& g : many.scenario.groups)
    if (g.role == "pretrain") many_count += g.size;
  CHECK(many_count == 12);
  CHECK(many.protocol == eval::Protocol::LanguageAdaptation);
}

TEST_CASE("config JSON overrides and rejects unknown keys", "[experiment]") {
  const auto base = tiny_config();
  auto c = experiment::from_json(nlohmann::json{{"seed", 9}, {"beam", 2}}, base);
  CHECK(c.seed == 9);
  CHECK(c.beam == 2);
  CHECK(c.pretrain.epochs == base.pretrain.epochs);
  CHECK_THROWS(experiment::from_json(nlohmann::json{{"seeed", 9}}, base));
  auto named = experiment::from_json(nlohmann::json{{"scenario", "homogeneous-group"}}, base);
  CHECK(named.scenario.name == "homogeneous-group");
}

TEST_CASE("config validation", "[experiment]") {
  auto c = tiny_config();
  CHECK_NOTHROW(c.validate());
  SECTION("duplicate names") {
    c.conditions.push_back(c.conditions.front());
    CHECK_THROWS(c.validate());
  }
  SECTION("auxiliary objectives need pretraining") {
    c.conditions[1].use_phoneme = true;
    CHECK_THROWS(c.validate());
  }
  SECTION("bad name") {
    c.conditions[0].name = "a/b";
    CHECK_THROWS(c.validate());
  }
  SECTION("unknown set kind") {
    experiment::PretrainingSetSpec s;
    s.kind = "nearest";
    c.conditions[0].pretraining_set = s;
    CHECK_THROWS(c.validate());
  }
  SECTION("zero beam") {
    c.beam = 0;
    CHECK_THROWS(c.validate());
  }
}

TEST_CASE("pretraining set resolution", "[experiment]") {
  const auto c = tiny_config();
  const auto corpus = synth::generate_corpus(c.scenario, 1);
  experiment::PretrainingSetSpec all;
  CHECK(experiment::resolve_pretraining_set(all, corpus, "X1") == std::vector<std::string>{"A1", "A2"});
  experiment::PretrainingSetSpec explicit_set;
  explicit_set.kind = "explicit";
  explicit_set.languages = {"A2"};
  CHECK(experiment::resolve_pretraining_set(explicit_set, corpus, "X1") == std::vector<std::string>{"A2"});
  explicit_set.languages = {"X1"};
  CHECK_THROWS(experiment::resolve_pretraining_set(explicit_set, corpus, "X1"));
  experiment::PretrainingSetSpec ranked;
  ranked.kind = "phon_inv";
  ranked.count = 1;
  CHECK(experiment::resolve_pretraining_set(ranked, corpus, "X1").size() == 1);
}

TEST_CASE("directory lock is exclusive", "[experiment]") {
  const auto dir = scratch("lock");
  {
    experiment::DirectoryLock a(dir);
    CHECK(fs::exists(dir / ".lock"));
    CHECK_THROWS(experiment::DirectoryLock(dir));
  }
  CHECK_FALSE(fs::exists(dir / ".lock"));
  CHECK_NOTHROW(experiment::DirectoryLock(dir));
  fs::remove_all(dir);
}

TEST_CASE("metrics CSV header", "[experiment]") {
  const auto csv = experiment::metrics_csv("X1", eval::Protocol::ReadingAdaptation, {});
  CHECK(csv == "condition,language,protocol,utterances,wer,cer,word_errors,words,char_errors,chars\n");
}

TEST_CASE("a run resumes from its manifest", "[experiment][slow]") {
  const auto dir = scratch("run");
  const auto c = tiny_config();
  const auto first = experiment::run_experiment(c, dir);
  REQUIRE(first.results.size() == 2);
  CHECK(first.skipped_phases.empty());
  for (const char* f : {"metrics.csv", "report.tsv", "manifest.json", "selection.tsv",
                        "adapt/baseline/model.ckpt", "adapt/mono/model.ckpt", "eval/baseline/results.csv"})
    CHECK(fs::exists(dir / f));
  CHECK_FALSE(fs::exists(dir / ".lock"));
  const auto metrics = io::read_file(dir / "metrics.csv");

  const auto second = experiment::run_experiment(c, dir);
  CHECK(std::find(second.skipped_phases.begin(), second.skipped_phases.end(), "data") !=
        second.skipped_phases.end());
  CHECK(std::find(second.skipped_phases.begin(), second.skipped_phases.end(), "eval/mono") !=
        second.skipped_phases.end());
  CHECK(io::read_file(dir / "metrics.csv") == metrics);

  // A tampered output is recomputed.
  io::write_file(dir / "eval/mono/results.csv", "garbage\n");
  const auto third = experiment::run_experiment(c, dir);
  CHECK(std::find(third.skipped_phases.begin(), third.skipped_phases.end(), "eval/mono") ==
        third.skipped_phases.end());
  CHECK(io::read_file(dir / "metrics.csv") == metrics);

  auto other = c;
  other.seed = 2;
  CHECK_THROWS(experiment::run_experiment(other, dir));
  fs::remove_all(dir);
}

TEST_CASE("exported scenario files match the bundled experiments", "[experiment]") {
  for (const auto& name : experiment::bundled_scenario_names()) {
    INFO(name);
    const auto path = fs::path(POLYGLOT_SCENARIO_DIR) / (name + ".json");
    REQUIRE(fs::exists(path));
    const auto j = nlohmann::json::parse(io::read_file(path));
    CHECK(experiment::to_json(experiment::from_json(j)) == experiment::to_json(experiment::bundled_experiment(name)));
  }
}
