#include "polyglot/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <set>
#include <sstream>
#include <stdexcept>

#include "polyglot/checkpoint.hpp"
#include "polyglot/io.hpp"
#include "polyglot/langselect.hpp"

namespace polyglot::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
  scenario.validate();
  if (conditions.empty()) throw std::invalid_argument("experiment: no conditions");
  std::set<std::string> names;
  for (const auto& c : conditions) {
    if (c.name.empty() || c.name.find_first_of("/\\ \t,") != std::string::npos) {
      throw std::invalid_argument("experiment: bad condition name '" + c.name + "'");
    }
    if (!names.insert(c.name).second) throw std::invalid_argument("experiment: duplicate condition " + c.name);
    if (!c.pretrain && (c.use_phoneme || c.use_adversarial)) {
      throw std::invalid_argument("experiment: condition " + c.name +
                                  " trains from scratch but enables a pretraining objective");
    }
  }
  std::vector<const PretrainingSetSpec*> specs{&pretraining_set};
  for (const auto& c : conditions)
    if (c.pretraining_set) specs.push_back(&*c.pretraining_set);
  for (const auto* s : specs) {
    static const std::set<std::string> kinds{"all", "explicit", "phon_inv", "geo"};
    if (!kinds.count(s->kind)) throw std::invalid_argument("experiment: unknown pretraining set kind " + s->kind);
  }
  if (beam == 0) throw std::invalid_argument("experiment: beam must be >= 1");
  if (pretrain.batch_size == 0 || adapt.batch_size == 0) {
    throw std::invalid_argument("experiment: batch_size must be >= 1");
  }
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.adapt = c.pretrain;
  c.adapt.mode = train::Mode::Adapt;
  c.conditions = {Condition{"baseline", true, false, false, {}, 0},
                  Condition{"phn+adv", true, true, true, {}, 0}};
  return c;
}

namespace {

json set_to_json(const PretrainingSetSpec& s) {
  return {{"kind", s.kind},           {"languages", s.languages}, {"count", s.count},
          {"budget_hours", s.budget_hours}, {"min_count", s.min_count}, {"max_count", s.max_count},
          {"tolerance", s.tolerance}};
}

PretrainingSetSpec set_from_json(const json& j, PretrainingSetSpec s) {
  s.kind = j.value("kind", s.kind);
  s.languages = j.value("languages", s.languages);
  s.count = j.value("count", s.count);
  s.budget_hours = j.value("budget_hours", s.budget_hours);
  s.min_count = j.value("min_count", s.min_count);
  s.max_count = j.value("max_count", s.max_count);
  s.tolerance = j.value("tolerance", s.tolerance);
  return s;
}

json train_to_json(const train::TrainConfig& t) {
  return {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"learning_rate", t.optimizer.learning_rate},
          {"clip_norm", t.optimizer.clip_norm}};
}

train::TrainConfig train_from_json(const json& j, train::TrainConfig t) {
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.optimizer.learning_rate = j.value("learning_rate", t.optimizer.learning_rate);
  t.optimizer.clip_norm = j.value("clip_norm", t.optimizer.clip_norm);
  return t;
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json conds = json::array();
  for (const auto& k : c.conditions) {
    json cj{{"name", k.name},
            {"pretrain", k.pretrain},
            {"use_phoneme", k.use_phoneme},
            {"use_adversarial", k.use_adversarial},
            {"max_adapt_utterances", k.max_adapt_utterances}};
    if (k.pretraining_set) cj["pretraining_set"] = set_to_json(*k.pretraining_set);
    conds.push_back(std::move(cj));
  }
  json scenario = synth::scenario_to_json(c.scenario);
  return {{"scenario_name", c.scenario_name},
          {"scenario", scenario},
          {"seed", c.seed},
          {"pretraining_set", set_to_json(c.pretraining_set)},
          {"target_language", c.target_language},
          {"protocol", eval::protocol_name(c.protocol)},
          {"held_out_reading", c.held_out_reading},
          {"conditions", conds},
          {"pretrain", train_to_json(c.pretrain)},
          {"adapt", train_to_json(c.adapt)},
          {"beam", c.beam}};
}

ExperimentConfig from_json(const json& j, const ExperimentConfig& base) {
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  static const std::set<std::string> known{"scenario_name", "scenario", "seed", "pretraining_set",
                                           "target_language", "protocol", "held_out_reading",
                                           "conditions", "pretrain", "adapt", "beam"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("experiment config: unknown key '" + key + "'");
  }
  ExperimentConfig c = base;
  if (j.contains("scenario")) {
    const auto& s = j.at("scenario");
    if (s.is_string()) {
      // A bundled scenario brings its whole experiment definition; the rest
      // of this object overrides it.
      c = bundled_experiment(s.get<std::string>());
    } else {
      c.scenario = synth::scenario_from_json(s);
      c.scenario_name = c.scenario.name;
    }
  }
  c.scenario_name = j.value("scenario_name", c.scenario_name);
  c.seed = j.value("seed", c.seed);
  if (j.contains("pretraining_set")) c.pretraining_set = set_from_json(j.at("pretraining_set"), c.pretraining_set);
  c.target_language = j.value("target_language", c.target_language);
  if (j.contains("protocol")) c.protocol = eval::parse_protocol(j.at("protocol").get<std::string>());
  c.held_out_reading = j.value("held_out_reading", c.held_out_reading);
  if (j.contains("conditions")) {
    c.conditions.clear();
    for (const auto& cj : j.at("conditions")) {
      Condition k;
      k.name = cj.at("name").get<std::string>();
      k.pretrain = cj.value("pretrain", k.pretrain);
      k.use_phoneme = cj.value("use_phoneme", k.use_phoneme);
      k.use_adversarial = cj.value("use_adversarial", k.use_adversarial);
      k.max_adapt_utterances = cj.value("max_adapt_utterances", k.max_adapt_utterances);
      if (cj.contains("pretraining_set") && !cj.at("pretraining_set").is_null()) {
        k.pretraining_set = set_from_json(cj.at("pretraining_set"), PretrainingSetSpec{});
      }
      c.conditions.push_back(std::move(k));
    }
  }
  if (j.contains("pretrain")) c.pretrain = train_from_json(j.at("pretrain"), c.pretrain);
  if (j.contains("adapt")) c.adapt = train_from_json(j.at("adapt"), c.adapt);
  c.beam = j.value("beam", c.beam);
  c.validate();
  return c;
}

std::vector<std::string> resolve_pretraining_set(const PretrainingSetSpec& spec,
                                                 const synth::Corpus& corpus,
                                                 const std::string& target) {
  std::vector<std::string> candidates;
  for (const auto& l : corpus.languages)
    if (l.role == "pretrain" && l.id != target) candidates.push_back(l.id);

  if (spec.kind == "all") {
    if (candidates.empty()) throw std::invalid_argument("scenario has no pretraining languages");
    return candidates;
  }
  if (spec.kind == "explicit") {
    if (spec.languages.empty()) throw std::invalid_argument("explicit pretraining set is empty");
    for (const auto& l : spec.languages) {
      corpus.language(l);
      if (l == target) throw std::invalid_argument("pretraining set contains the target " + target);
    }
    return spec.languages;
  }
  const auto mode = select::parse_mode(spec.kind);
  const auto profiles = select::build_profiles_from_corpus(corpus);
  const select::LanguageProfile* tp = nullptr;
  std::vector<select::LanguageProfile> pool;
  for (const auto& p : profiles) {
    if (p.id == target) tp = &p;
    if (std::find(candidates.begin(), candidates.end(), p.id) != candidates.end()) pool.push_back(p);
  }
  if (!tp) throw std::invalid_argument("unknown target language " + target);
  const auto ranked = select::rank_candidates(*tp, pool, mode);
  if (ranked.empty()) throw std::invalid_argument("no eligible pretraining candidates for " + target);
  std::vector<std::string> out;
  if (spec.count > 0) {
    for (std::size_t i = 0; i < std::min(spec.count, ranked.size()); ++i) out.push_back(ranked[i].id);
    return out;
  }
  return select::select_pretraining_set(ranked, spec.budget_hours, spec.min_count, spec.max_count,
                                        spec.tolerance)
      .languages;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw std::runtime_error("output directory " + dir.string() +
                               " is locked by another run (remove " + path_.string() +
                               " if that run is gone)");
    }
    throw std::runtime_error("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  if (::write(fd, pid.data(), pid.size()) < 0) {
    // The lock is held either way; the pid is informational.
  }
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::string metrics_csv(const std::string& language, eval::Protocol protocol,
                        const std::vector<ConditionResult>& results) {
  std::ostringstream out;
  out.precision(17);
  out << "condition,language,protocol,utterances,wer,cer,word_errors,words,char_errors,chars\n";
  for (const auto& r : results) {
    const auto& m = r.metrics;
    out << r.condition << "," << language << "," << eval::protocol_name(protocol) << ","
        << m.utterances << "," << m.wer() << "," << m.cer() << "," << m.words.errors() << ","
        << m.words.reference_length << "," << m.characters.errors() << ","
        << m.characters.reference_length << "\n";
  }
  return out.str();
}

namespace {

// Phase bookkeeping in manifest.json: each phase lists the digests of its
// inputs and outputs, relative to the output directory.
class Manifest {
 public:
  Manifest(fs::path root, const std::string& config_digest) : root_(std::move(root)) {
    const auto path = root_ / "manifest.json";
    if (fs::exists(path)) {
      data_ = json::parse(io::read_file(path));
      if (data_.value("config_digest", "") != config_digest) {
        throw std::runtime_error("output directory " + root_.string() +
                                 " holds a different experiment; choose a new --out");
      }
    } else {
      data_ = {{"config_digest", config_digest}, {"phases", json::object()}};
    }
  }

  bool valid(const std::string& phase, const std::map<std::string, std::string>& inputs) const {
    const auto& phases = data_.at("phases");
    if (!phases.contains(phase)) return false;
    const auto& p = phases.at(phase);
    if (p.at("inputs").get<std::map<std::string, std::string>>() != inputs) return false;
    for (const auto& [rel, digest] : p.at("outputs").items()) {
      const auto file = root_ / rel;
      if (!fs::exists(file) || io::file_digest(file) != digest.get<std::string>()) return false;
    }
    return true;
  }

  void record(const std::string& phase, const std::map<std::string, std::string>& inputs,
              const std::vector<fs::path>& outputs) {
    json out = json::object();
    for (const auto& f : outputs) out[fs::relative(f, root_).generic_string()] = io::file_digest(f);
    data_["phases"][phase] = {{"inputs", inputs}, {"outputs", out}};
    io::write_file(root_ / "manifest.json", data_.dump(2) + "\n");
  }

  std::string digest(const std::string& phase, const fs::path& file) const {
    return data_.at("phases").at(phase).at("outputs").at(fs::relative(file, root_).generic_string());
  }

 private:
  fs::path root_;
  json data_;
};

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::string pretrain_key(const std::vector<std::string>& languages, const Condition& c) {
  return std::string("phn") + (c.use_phoneme ? "1" : "0") + "-adv" + (c.use_adversarial ? "1" : "0") +
         "-" + io::sha256_hex(io::join(languages, ",")).substr(0, 10);
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, const fs::path& out, const Logger& log_fn) {
  config.validate();
  auto log = [&](const std::string& m) {
    if (log_fn) log_fn(m);
  };
  DirectoryLock lock(out);
  Manifest manifest(out, io::sha256_hex(to_json(config).dump()));
  RunSummary summary;

  // Corpus.
  const fs::path corpus_dir = out / "corpus";
  synth::Corpus corpus;
  if (manifest.valid("data", {})) {
    log("data: reusing " + corpus_dir.string());
    corpus = synth::load_corpus(corpus_dir);
    summary.skipped_phases.push_back("data");
  } else {
    log("data: generating scenario " + config.scenario.name);
    corpus = synth::generate_corpus(config.scenario, config.seed);
    fs::remove_all(corpus_dir);
    synth::write_corpus(corpus, corpus_dir);
    manifest.record("data", {}, files_under(corpus_dir));
  }

  std::string target = config.target_language;
  if (target.empty()) {
    for (const auto& l : corpus.languages) {
      if (l.role == "target") {
        target = l.id;
        break;
      }
    }
    if (target.empty()) throw std::invalid_argument("scenario has no target language");
  }
  const auto& target_lang = corpus.language(target);

  std::vector<std::string> adapt_readings;
  std::string held_out = config.held_out_reading;
  if (config.protocol == eval::Protocol::LanguageAdaptation) {
    if (target_lang.readings.size() < 2) {
      throw std::invalid_argument("language_adaptation needs >= 2 readings of " + target);
    }
    if (held_out.empty()) held_out = target_lang.readings.back().id;
  }
  for (const auto& r : target_lang.readings)
    if (r.id != held_out) adapt_readings.push_back(r.id);
  if (config.protocol == eval::Protocol::LanguageAdaptation && adapt_readings.size() == target_lang.readings.size()) {
    throw std::invalid_argument("held-out reading " + held_out + " does not belong to " + target);
  }

  // Pretraining sets.
  std::map<std::string, std::vector<std::string>> sets;
  {
    std::ostringstream sel;
    sel << "condition\tlanguages\n";
    for (const auto& c : config.conditions) {
      if (c.pretrain) sets[c.name] = resolve_pretraining_set(c.pretraining_set.value_or(config.pretraining_set), corpus, target);
      sel << c.name << "\t" << io::join(sets[c.name], ",") << "\n";
    }
    io::write_file(out / "selection.tsv", sel.str());
    manifest.record("select", {}, {out / "selection.tsv"});
  }

  const Vocabulary vocab(corpus.grapheme_inventory());
  std::map<std::string, std::string> data_inputs{{"corpus/manifest.tsv", manifest.digest("data", corpus_dir / "manifest.tsv")}};

  for (const auto& c : config.conditions) {
    // Seed model.
    Checkpoint seed_ckpt;
    std::string seed_digest;
    if (c.pretrain) {
      const auto& langs = sets.at(c.name);
      const std::string phase = "pretrain/" + pretrain_key(langs, c);
      const fs::path dir = out / phase;
      if (manifest.valid(phase, data_inputs)) {
        if (std::find(summary.skipped_phases.begin(), summary.skipped_phases.end(), phase) ==
            summary.skipped_phases.end()) {
          log(phase + ": reusing");
          summary.skipped_phases.push_back(phase);
        }
        seed_ckpt = load_checkpoint(dir / "model.ckpt");
      } else {
        log(phase + ": pretraining on " + io::join(langs, ","));
        auto tc = config.pretrain;
        tc.mode = train::Mode::Pretrain;
        tc.seed = config.seed;
        tc.use_phoneme = c.use_phoneme;
        tc.use_adversarial = c.use_adversarial;
        train::TrainHooks hooks;
        hooks.on_epoch = [&](const train::EpochRecord& e) {
          log(phase + ": epoch " + std::to_string(e.epoch) + " dev_cer " + std::to_string(e.dev_cer));
        };
        auto r = train::pretrain(corpus, langs, train::desk_config(corpus, langs.size()), tc, hooks);
        fs::create_directories(dir);
        save_checkpoint(r.checkpoint, dir / "model.ckpt");
        io::write_file(dir / "train_log.csv", r.log.csv());
        manifest.record(phase, data_inputs, {dir / "model.ckpt", dir / "train_log.csv"});
        seed_ckpt = std::move(r.checkpoint);
      }
      seed_digest = io::file_digest(dir / "model.ckpt");
    } else {
      seed_ckpt = train::initial_checkpoint(corpus, train::desk_config(corpus, 1), config.seed);
      seed_digest = io::sha256_hex(serialize_checkpoint(seed_ckpt));
    }

    // Adaptation.
    const std::string adapt_phase = "adapt/" + c.name;
    const fs::path adapt_dir = out / adapt_phase;
    auto adapt_inputs = data_inputs;
    adapt_inputs["seed_model"] = seed_digest;
    adapt_inputs["max_adapt_utterances"] = std::to_string(c.max_adapt_utterances);
    Checkpoint adapted;
    if (manifest.valid(adapt_phase, adapt_inputs)) {
      log(adapt_phase + ": reusing");
      summary.skipped_phases.push_back(adapt_phase);
      adapted = load_checkpoint(adapt_dir / "model.ckpt");
    } else {
      log(adapt_phase + ": adapting to " + target);
      auto tc = config.adapt;
      tc.mode = train::Mode::Adapt;
      tc.seed = config.seed + 1;
      train::AdaptRequest req{target, adapt_readings, c.max_adapt_utterances};
      auto r = train::adapt(seed_ckpt, corpus, req, tc);
      fs::create_directories(adapt_dir);
      save_checkpoint(r.checkpoint, adapt_dir / "model.ckpt");
      io::write_file(adapt_dir / "adapt_log.csv", r.log.csv());
      manifest.record(adapt_phase, adapt_inputs, {adapt_dir / "model.ckpt", adapt_dir / "adapt_log.csv"});
      adapted = std::move(r.checkpoint);
    }

    // Evaluation.
    const std::string eval_phase = "eval/" + c.name;
    const fs::path eval_dir = out / eval_phase;
    std::map<std::string, std::string> eval_inputs{{"model", io::file_digest(adapt_dir / "model.ckpt")},
                                                   {"beam", std::to_string(config.beam)}};
    ConditionResult cr;
    cr.condition = c.name;
    cr.pretraining_languages = sets[c.name];
    if (manifest.valid(eval_phase, eval_inputs)) {
      log(eval_phase + ": reusing");
      summary.skipped_phases.push_back(eval_phase);
      cr.metrics = eval::aggregate(eval::parse_results_csv(io::read_file(eval_dir / "results.csv")));
    } else {
      eval::EvaluationSpec spec;
      spec.protocol = config.protocol;
      spec.language = target;
      spec.held_out_reading = held_out;
      spec.adapted_readings = adapt_readings;
      spec.beam = config.beam;
      auto e = eval::evaluate(adapted, corpus, spec);
      fs::create_directories(eval_dir);
      io::write_file(eval_dir / "results.csv", eval::results_csv(e.utterances));
      manifest.record(eval_phase, eval_inputs, {eval_dir / "results.csv"});
      cr.metrics = e.metrics;
    }
    log(eval_phase + ": WER " + std::to_string(cr.metrics.wer()) + " CER " + std::to_string(cr.metrics.cer()));
    summary.results.push_back(std::move(cr));
  }

  // Tables.
  io::write_file(out / "metrics.csv", metrics_csv(target, config.protocol, summary.results));
  std::vector<std::string> names;
  std::map<std::string, std::map<std::string, double>> table;
  for (const auto& r : summary.results) {
    names.push_back(r.condition);
    table[r.condition][target] = r.metrics.wer();
  }
  io::write_file(out / "report.tsv", eval::render_report(names, table));
  manifest.record("report", {}, {out / "metrics.csv", out / "report.tsv"});
  return summary;
}

}  // namespace polyglot::experiment
