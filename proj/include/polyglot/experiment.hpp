#pragma once

// End-to-end experiments: generate a corpus, choose pretraining languages,
// pretrain one seed model per condition, adapt to the target language,
// evaluate under a protocol and tabulate the results.
//
// Output directory layout:
//   corpus/                         generated corpus
//   selection.tsv                   pretraining set per condition
//   pretrain/<key>/model.ckpt       seed model, plus train_log.csv
//   adapt/<condition>/model.ckpt    adapted model, plus adapt_log.csv
//   eval/<condition>/results.csv    per-utterance scores
//   metrics.csv                     one row per condition
//   report.tsv                      WER table with average relative deltas
//   manifest.json                   SHA-256 of every file above, by phase
//   .lock                           present while a run owns the directory

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyglot/eval.hpp"
#include "polyglot/synthdata.hpp"
#include "polyglot/train.hpp"

namespace polyglot::experiment {

struct PretrainingSetSpec {
  // all | explicit | phon_inv | geo
  std::string kind = "all";
  std::vector<std::string> languages;  // explicit
  // Similarity-based sets: a fixed count, or (count 0) a duration budget.
  std::size_t count = 0;
  double budget_hours = 0.0;
  std::size_t min_count = 7;
  std::size_t max_count = 14;
  double tolerance = 0.2;
};

struct Condition {
  std::string name;
  // false: train from a randomly initialised model (monolingual baseline).
  bool pretrain = true;
  bool use_phoneme = false;
  bool use_adversarial = false;
  std::optional<PretrainingSetSpec> pretraining_set;  // overrides the default
  std::size_t max_adapt_utterances = 0;                 // 0 keeps all
};

struct ExperimentConfig {
  std::string scenario_name;
  synth::ScenarioConfig scenario;
  std::uint64_t seed = 1;
  PretrainingSetSpec pretraining_set;
  std::string target_language;
  eval::Protocol protocol = eval::Protocol::ReadingAdaptation;
  // Language adaptation only; empty selects the target's last reading.
  std::string held_out_reading;
  std::vector<Condition> conditions;
  train::TrainConfig pretrain;
  train::TrainConfig adapt;
  std::size_t beam = 4;

  void validate() const;
};

// Defaults every experiment starts from.
ExperimentConfig default_config();

nlohmann::json to_json(const ExperimentConfig& c);
// Keys absent from `j` keep the values of `base`. A string "scenario" names a
// bundled scenario; an object is an inline scenario definition.
ExperimentConfig from_json(const nlohmann::json& j, const ExperimentConfig& base = default_config());

std::vector<std::string> bundled_scenario_names();
// Throws for an unknown name.
ExperimentConfig bundled_experiment(const std::string& name);

// The pretraining languages a set spec resolves to for `target`.
std::vector<std::string> resolve_pretraining_set(const PretrainingSetSpec& spec,
                                                 const synth::Corpus& corpus,
                                                 const std::string& target);

// Exclusive ownership of an output directory through a lock file created
// with O_EXCL. Throws if another run holds it.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct ConditionResult {
  std::string condition;
  std::vector<std::string> pretraining_languages;
  eval::Metrics metrics;
};

struct RunSummary {
  std::vector<ConditionResult> results;
  std::vector<std::string> skipped_phases;  // phases reused from an earlier run
};

using Logger = std::function<void(const std::string&)>;

// Runs (or resumes) an experiment in `out`. Phases whose recorded outputs
// exist with matching digests are skipped.
RunSummary run_experiment(const ExperimentConfig& config, const std::filesystem::path& out,
                          const Logger& log = {});

// metrics.csv: condition,language,protocol,utterances,wer,cer,word_errors,
// words,char_errors,chars
std::string metrics_csv(const std::string& language, eval::Protocol protocol,
                        const std::vector<ConditionResult>& results);

}  // namespace polyglot::experiment
