#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyglot/checkpoint.hpp"
#include "polyglot/eval.hpp"
#include "polyglot/experiment.hpp"
#include "polyglot/io.hpp"
#include "polyglot/langselect.hpp"
#include "polyglot/synthdata.hpp"
#include "polyglot/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace polyglot;

namespace {

// Options shared by the subcommands that build an experiment config.
struct ConfigOptions {
  std::string config_file;
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> beam;
  std::string protocol;
  bool print_config = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "Experiment config (JSON)")->check(CLI::ExistingFile);
    app->add_option("--scenario", scenario, "Bundled scenario name or scenario JSON file");
    app->add_option("--seed", seed, "Seed for data generation and training");
    app->add_option("--epochs", epochs, "Override pretraining and adaptation epochs");
    app->add_option("--beam", beam, "Beam size for evaluation");
    app->add_option("--protocol", protocol, "reading_adaptation or language_adaptation");
    app->add_flag("--print-config", print_config, "Print the effective config and exit");
  }

  experiment::ExperimentConfig resolve() const {
    auto c = experiment::default_config();
    c.scenario_name = "diverse-groups";
    if (scenario.empty() && config_file.empty()) c = experiment::bundled_experiment("diverse-groups");
    if (!scenario.empty()) {
      if (fs::exists(scenario)) {
        c.scenario = synth::scenario_from_json(json::parse(io::read_file(scenario)));
        c.scenario_name = c.scenario.name;
      } else {
        c = experiment::bundled_experiment(scenario);
      }
    }
    if (!config_file.empty()) c = experiment::from_json(json::parse(io::read_file(config_file)), c);
    if (seed) c.seed = *seed;
    if (epochs) c.pretrain.epochs = c.adapt.epochs = *epochs;
    if (beam) c.beam = *beam;
    if (!protocol.empty()) c.protocol = eval::parse_protocol(protocol);
    c.validate();
    return c;
  }
};

void log_line(const std::string& m) { std::cerr << m << std::endl; }

// manifest.json next to a subcommand's outputs: digest of every file.
void write_digests(const fs::path& dir, const std::vector<fs::path>& files) {
  json j = json::object();
  for (const auto& f : files) j[fs::relative(f, dir).generic_string()] = io::file_digest(f);
  io::write_file(dir / "manifest.json", json{{"files", j}}.dump(2) + "\n");
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != ".lock" && e.path().filename() != "manifest.json")
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> csv_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& part : io::split(s, ','))
    if (!io::trim(part).empty()) out.push_back(io::trim(part));
  return out;
}

train::TrainConfig phase_config(const experiment::ExperimentConfig& c, bool pretrain) {
  auto tc = pretrain ? c.pretrain : c.adapt;
  tc.mode = pretrain ? train::Mode::Pretrain : train::Mode::Adapt;
  tc.seed = c.seed;
  return tc;
}

train::TrainHooks progress(const std::string& label) {
  train::TrainHooks h;
  h.on_epoch = [label](const train::EpochRecord& e) {
    std::ostringstream m;
    m << label << ": epoch " << e.epoch << " lambda " << e.lambda << " dev_cer " << e.dev_cer;
    log_line(m.str());
  };
  return h;
}

int gen_data(const ConfigOptions& opts, const std::string& out) {
  const auto c = opts.resolve();
  if (opts.print_config) {
    std::cout << synth::scenario_to_json(c.scenario).dump(2) << "\n";
    return 0;
  }
  experiment::DirectoryLock lock(out);
  const auto corpus = synth::generate_corpus(c.scenario, c.seed);
  synth::write_corpus(corpus, out);
  const auto files = files_under(out);
  write_digests(out, files);
  std::string all;
  for (const auto& f : files) all += fs::relative(f, out).generic_string() + " " + io::file_digest(f) + "\n";
  std::cout << "languages\t" << corpus.languages.size() << "\n"
            << "utterances\t" << corpus.utterances.size() << "\n"
            << "corpus_digest\t" << io::sha256_hex(all) << "\n";
  return 0;
}

int select_langs(const std::string& corpus_dir, const std::string& profiles_file, const std::string& target,
                 const std::string& mode, double budget, std::size_t min_count, std::size_t max_count,
                 double tolerance, const std::string& write_profiles) {
  std::vector<select::LanguageProfile> profiles;
  if (!profiles_file.empty()) {
    profiles = select::read_profile_table(io::read_file(profiles_file));
  } else {
    profiles = select::build_profiles_from_corpus(synth::load_corpus(corpus_dir));
  }
  if (!write_profiles.empty()) io::write_file(write_profiles, select::write_profile_table(profiles));
  auto it = std::find_if(profiles.begin(), profiles.end(), [&](const auto& p) { return p.id == target; });
  if (it == profiles.end()) throw std::invalid_argument("unknown target language " + target);
  std::vector<std::string> warnings;
  const auto ranked = select::rank_candidates(*it, profiles, select::parse_mode(mode), &warnings);
  for (const auto& w : warnings) log_line("warning: " + w);
  std::cout << std::setprecision(6) << "rank\tlanguage\tscore\tduration_hours\n";
  for (std::size_t i = 0; i < ranked.size(); ++i)
    std::cout << i + 1 << "\t" << ranked[i].id << "\t" << ranked[i].score << "\t" << ranked[i].duration_hours << "\n";
  if (ranked.empty()) return 1;
  if (budget <= 0.0) {
    for (const auto& r : ranked) budget += r.duration_hours;
    budget /= 2.0;
  }
  const auto s = select::select_pretraining_set(ranked, budget, min_count, max_count, tolerance);
  std::cout << "selected\t" << io::join(s.languages, ",") << "\n"
            << "total_hours\t" << s.total_hours << "\n"
            << "budget_hours\t" << budget << "\n";
  if (s.approximate) std::cout << "flag\tapproximate\n";
  if (s.underfull) std::cout << "flag\tunderfull\n";
  return 0;
}

int pretrain_cmd(const ConfigOptions& opts, const std::string& corpus_dir, const std::string& languages,
                 bool no_phoneme, bool no_adversarial, const std::string& out) {
  auto c = opts.resolve();
  if (opts.print_config) {
    std::cout << experiment::to_json(c).at("pretrain").dump(2) << "\n";
    return 0;
  }
  experiment::DirectoryLock lock(out);
  const auto corpus = synth::load_corpus(corpus_dir);
  auto langs = csv_list(languages);
  if (langs.empty())
    for (const auto& l : corpus.languages)
      if (l.role == "pretrain") langs.push_back(l.id);
  auto tc = phase_config(c, true);
  tc.use_phoneme = !no_phoneme;
  tc.use_adversarial = !no_adversarial;
  auto r = train::pretrain(corpus, langs, train::desk_config(corpus, langs.size()), tc, progress("pretrain"));
  save_checkpoint(r.checkpoint, fs::path(out) / "model.ckpt");
  io::write_file(fs::path(out) / "train_log.csv", r.log.csv());
  write_digests(out, {fs::path(out) / "model.ckpt", fs::path(out) / "train_log.csv"});
  std::cout << "checkpoint\t" << (fs::path(out) / "model.ckpt").string() << "\n"
            << "digest\t" << io::file_digest(fs::path(out) / "model.ckpt") << "\n";
  return 0;
}

int adapt_cmd(const ConfigOptions& opts, const std::string& checkpoint, const std::string& corpus_dir,
              const std::string& target, const std::string& readings, std::size_t max_utts,
              const std::string& out) {
  auto c = opts.resolve();
  if (opts.print_config) {
    std::cout << experiment::to_json(c).at("adapt").dump(2) << "\n";
    return 0;
  }
  experiment::DirectoryLock lock(out);
  const auto seed = load_checkpoint(checkpoint);
  const auto corpus = synth::load_corpus(corpus_dir);
  train::AdaptRequest req{target, csv_list(readings), max_utts};
  auto r = train::adapt(seed, corpus, req, phase_config(c, false), progress("adapt"));
  save_checkpoint(r.checkpoint, fs::path(out) / "model.ckpt");
  io::write_file(fs::path(out) / "adapt_log.csv", r.log.csv());
  write_digests(out, {fs::path(out) / "model.ckpt", fs::path(out) / "adapt_log.csv"});
  std::cout << "checkpoint\t" << (fs::path(out) / "model.ckpt").string() << "\n"
            << "digest\t" << io::file_digest(fs::path(out) / "model.ckpt") << "\n";
  return 0;
}

int evaluate_cmd(const std::string& checkpoint, const std::string& corpus_dir, const std::string& protocol,
                 const std::string& held_out, std::size_t beam, const std::string& split,
                 const std::string& condition, const std::string& out) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto corpus = synth::load_corpus(corpus_dir);
  eval::EvaluationSpec spec;
  spec.protocol = eval::parse_protocol(protocol);
  auto target = ckpt.metadata.find("target_language");
  if (target == ckpt.metadata.end()) throw std::invalid_argument("checkpoint was not adapted to a target language");
  spec.language = target->second;
  spec.held_out_reading = held_out;
  spec.split = split;
  spec.beam = beam;
  const auto e = eval::evaluate(ckpt, corpus, spec);
  experiment::ConditionResult r{condition, {}, e.metrics};
  const auto metrics = experiment::metrics_csv(spec.language, spec.protocol, {r});
  if (!out.empty()) {
    experiment::DirectoryLock lock(out);
    io::write_file(fs::path(out) / "results.csv", eval::results_csv(e.utterances));
    io::write_file(fs::path(out) / "metrics.csv", metrics);
    write_digests(out, {fs::path(out) / "results.csv", fs::path(out) / "metrics.csv"});
  }
  std::cout << metrics;
  return 0;
}

int probe_cmd(const std::string& checkpoint, const std::string& corpus_dir, const std::string& languages,
              std::uint64_t seed) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto corpus = synth::load_corpus(corpus_dir);
  auto langs = csv_list(languages);
  if (langs.empty()) langs = ckpt.languages;
  const auto r = eval::probe_language_accuracy(ckpt.params, ckpt.config, corpus, langs, seed);
  std::cout << "languages\t" << langs.size() << "\n"
            << "train_examples\t" << r.train_examples << "\n"
            << "dev_examples\t" << r.dev_examples << "\n"
            << "accuracy\t" << r.accuracy << "\n";
  return 0;
}

int export_cmd(const std::string& checkpoint, const std::string& corpus_dir, const std::string& phonemes,
               const std::string& languages, const std::string& split, const std::string& out) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto corpus = synth::load_corpus(corpus_dir);
  std::set<std::size_t> filter;
  for (const auto& p : csv_list(phonemes)) filter.insert(std::stoul(p));
  auto langs = csv_list(languages);
  if (langs.empty()) langs = ckpt.languages;
  std::vector<std::string> notes;
  const auto rows = eval::export_embeddings(ckpt.params, ckpt.config, corpus, filter, langs, split, &notes);
  for (const auto& n : notes) log_line("note: " + n);
  if (rows.empty()) throw std::runtime_error("no matching phoneme occurrences");
  experiment::DirectoryLock lock(out);
  const fs::path table = fs::path(out) / "embeddings.csv";
  io::write_file(table, eval::embeddings_csv(rows));

  Tensor x(Shape{rows.size(), rows.front().state.size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].state.size(); ++k) x(i, k) = rows[i].state[k];
  const auto proj = eval::pca_2d(x);
  std::ostringstream pca;
  pca << std::setprecision(17) << "language,phoneme,pc1,pc2\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    pca << rows[i].language << "," << rows[i].phoneme << "," << proj.points(i, 0) << "," << proj.points(i, 1) << "\n";
  const fs::path pca_file = fs::path(out) / "pca.csv";
  io::write_file(pca_file, pca.str());
  write_digests(out, {table, pca_file});
  std::cout << "rows\t" << rows.size() << "\n";
  try {
    std::cout << "cluster_separation\t" << eval::cluster_separation(rows) << "\n";
  } catch (const std::invalid_argument& e) {
    log_line(std::string("note: ") + e.what());
  }
  return 0;
}

int report_cmd(const std::vector<std::string>& metrics_files, const std::string& out) {
  std::vector<std::string> conditions;
  std::map<std::string, std::map<std::string, double>> table;
  for (const auto& f : metrics_files) {
    std::istringstream in(io::read_file(f));
    std::string line;
    std::getline(in, line);
    if (line.rfind("condition,language,", 0) != 0) throw std::runtime_error(f + " is not a metrics CSV");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cols = io::split(line, ',');
      if (cols.size() < 5) throw std::runtime_error("short row in " + f);
      if (std::find(conditions.begin(), conditions.end(), cols[0]) == conditions.end())
        conditions.push_back(cols[0]);
      table[cols[0]][cols[1]] = std::stod(cols[4]);
    }
  }
  if (conditions.empty()) throw std::runtime_error("no metrics rows");
  const auto text = eval::render_report(conditions, table);
  if (!out.empty()) io::write_file(out, text);
  std::cout << text;
  return 0;
}

int run_cmd(const ConfigOptions& opts, const std::string& out) {
  const auto c = opts.resolve();
  if (opts.print_config) {
    std::cout << experiment::to_json(c).dump(2) << "\n";
    return 0;
  }
  const auto summary = experiment::run_experiment(c, out, log_line);
  std::cout << io::read_file(fs::path(out) / "report.tsv");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilingual end-to-end ASR experiments on synthetic corpora"};
  app.require_subcommand(1);

  ConfigOptions gen_opts, pre_opts, adapt_opts, run_opts;
  std::string out, corpus_dir, checkpoint, target, languages, readings, profiles, write_profiles;
  std::string mode = "phon_inv", protocol = "reading_adaptation", held_out, split = "test";
  std::string condition = "model", phonemes, export_split;
  std::vector<std::string> metrics_files;
  double budget = 0.0, tolerance = 0.2;
  std::size_t min_count = 7, max_count = 14, max_utts = 0, beam = 4;
  std::uint64_t probe_seed = 1;
  bool no_phoneme = false, no_adversarial = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen_opts.attach(gen);
  gen->add_option("--out", out, "Output directory")->required();

  auto* sel = app.add_subcommand("select-langs", "Rank and select pretraining languages");
  sel->add_option("--corpus", corpus_dir, "Corpus directory")->check(CLI::ExistingDirectory);
  sel->add_option("--profiles", profiles, "Profile table instead of a corpus")->check(CLI::ExistingFile);
  sel->add_option("--target", target, "Target language")->required();
  sel->add_option("--mode", mode, "phon_inv or geo");
  sel->add_option("--budget", budget, "Duration budget in hours (default: half the candidates' total)");
  sel->add_option("--min", min_count, "Minimum number of languages");
  sel->add_option("--max", max_count, "Maximum number of languages");
  sel->add_option("--tolerance", tolerance, "Relative duration tolerance");
  sel->add_option("--write-profiles", write_profiles, "Also write the profile table here");

  auto* pre = app.add_subcommand("pretrain", "Train a multilingual seed model");
  pre_opts.attach(pre);
  pre->add_option("--corpus", corpus_dir, "Corpus directory")->check(CLI::ExistingDirectory);
  pre->add_option("--languages", languages, "Comma-separated pretraining languages (default: all)");
  pre->add_flag("--no-phoneme", no_phoneme, "Drop the phoneme CTC objective");
  pre->add_flag("--no-adversarial", no_adversarial, "Drop the language-adversarial objective");
  pre->add_option("--out", out, "Output directory");

  auto* ad = app.add_subcommand("adapt", "Adapt a seed model to a target language");
  adapt_opts.attach(ad);
  ad->add_option("--checkpoint", checkpoint, "Seed model")->check(CLI::ExistingFile);
  ad->add_option("--corpus", corpus_dir, "Corpus directory")->check(CLI::ExistingDirectory);
  ad->add_option("--target", target, "Target language");
  ad->add_option("--readings", readings, "Comma-separated readings (default: all)");
  ad->add_option("--max-utterances", max_utts, "Cap on adaptation utterances (0: all)");
  ad->add_option("--out", out, "Output directory");

  auto* ev = app.add_subcommand("evaluate", "Score an adapted model");
  ev->add_option("--checkpoint", checkpoint, "Adapted model")->required()->check(CLI::ExistingFile);
  ev->add_option("--corpus", corpus_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--protocol", protocol, "reading_adaptation or language_adaptation");
  ev->add_option("--held-out", held_out, "Held-out reading (language_adaptation)");
  ev->add_option("--beam", beam, "Beam size");
  ev->add_option("--split", split, "Split scored under reading_adaptation");
  ev->add_option("--condition", condition, "Condition label in metrics.csv");
  ev->add_option("--out", out, "Output directory for results.csv and metrics.csv");

  auto* pr = app.add_subcommand("probe", "Language-identity probe on frozen encoder features");
  pr->add_option("--checkpoint", checkpoint, "Model")->required()->check(CLI::ExistingFile);
  pr->add_option("--corpus", corpus_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  pr->add_option("--languages", languages, "Comma-separated languages (default: pretraining set)");
  pr->add_option("--seed", probe_seed, "Probe initialisation seed");

  auto* ex = app.add_subcommand("export-embeddings", "Export phoneme mid-point encoder states");
  ex->add_option("--checkpoint", checkpoint, "Model")->required()->check(CLI::ExistingFile);
  ex->add_option("--corpus", corpus_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  ex->add_option("--phonemes", phonemes, "Comma-separated phoneme ids (default: all)");
  ex->add_option("--languages", languages, "Comma-separated languages (default: pretraining set)");
  ex->add_option("--split", export_split, "Split to export (default: all)");
  ex->add_option("--out", out, "Output directory")->required();

  auto* rep = app.add_subcommand("report", "Combine metrics CSVs into a WER table");
  rep->add_option("--metrics", metrics_files, "metrics.csv files")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", out, "Write the table here");

  auto* run = app.add_subcommand("run-experiment", "Run the full pipeline for one experiment");
  run_opts.attach(run);
  run->add_option("--out", out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    auto need = [](const std::string& v, const char* flag) {
      if (v.empty()) throw CLI::RequiredError(flag);
    };
    if (gen->parsed()) return gen_data(gen_opts, out);
    if (sel->parsed()) {
      if (corpus_dir.empty() == profiles.empty()) throw std::invalid_argument("give exactly one of --corpus or --profiles");
      return select_langs(corpus_dir, profiles, target, mode, budget, min_count, max_count, tolerance,
                          write_profiles);
    }
    if (pre->parsed()) {
      if (!pre_opts.print_config) {
        need(corpus_dir, "--corpus");
        need(out, "--out");
      }
      return pretrain_cmd(pre_opts, corpus_dir, languages, no_phoneme, no_adversarial, out);
    }
    if (ad->parsed()) {
      if (!adapt_opts.print_config) {
        need(checkpoint, "--checkpoint");
        need(corpus_dir, "--corpus");
        need(target, "--target");
        need(out, "--out");
      }
      return adapt_cmd(adapt_opts, checkpoint, corpus_dir, target, readings, max_utts, out);
    }
    if (ev->parsed()) return evaluate_cmd(checkpoint, corpus_dir, protocol, held_out, beam, split, condition, out);
    if (pr->parsed()) return probe_cmd(checkpoint, corpus_dir, languages, probe_seed);
    if (ex->parsed()) return export_cmd(checkpoint, corpus_dir, phonemes, languages, export_split, out);
    if (rep->parsed()) return report_cmd(metrics_files, out);
    if (run->parsed()) {
      if (!run_opts.print_config) need(out, "--out");
      return run_cmd(run_opts, out);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const eval::ProtocolViolation& e) {
    std::cerr << "protocol violation: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
