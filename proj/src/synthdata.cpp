#include "polyglot/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "polyglot/io.hpp"
#include "polyglot/splits.hpp"

namespace polyglot::synth {

using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

std::uint64_t tag(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return h;
}

std::string grapheme_token(std::size_t script, std::size_t symbol) {
  std::ostringstream ss;
  ss << static_cast<char>('a' + static_cast<char>(script % 26)) << std::setw(2) << std::setfill('0')
     << symbol;
  return ss.str();
}

std::vector<double> gaussian_vector(std::size_t dim, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = scale * dist(rng);
  return v;
}

std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t k,
                                                    std::mt19937_64& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min(k, pool.size()));
  return pool;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (num_phonemes == 0 || feature_dim == 0) {
    throw std::invalid_argument("scenario: num_phonemes and feature_dim must be >= 1");
  }
  if (min_duration == 0 || min_duration > max_duration) {
    throw std::invalid_argument("scenario: bad duration range");
  }
  if (min_phonemes == 0 || min_phonemes > max_phonemes) {
    throw std::invalid_argument("scenario: bad phoneme count range");
  }
  if (min_word == 0 || min_word > max_word) throw std::invalid_argument("scenario: bad word length range");
  if (noise < 0.0 || boundary_scale < 0.0 || frame_rate <= 0.0) {
    throw std::invalid_argument("scenario: bad noise, boundary scale or frame rate");
  }
  if (rate_jitter < 0.0 || rate_jitter >= 1.0) throw std::invalid_argument("scenario: rate_jitter must be in [0,1)");
  if (groups.empty()) throw std::invalid_argument("scenario: no language groups");
  std::set<std::string> names;
  for (const auto& g : groups) {
    if (g.name.empty() || !names.insert(g.name).second) {
      throw std::invalid_argument("scenario: group names must be unique and non-empty");
    }
    if (g.inventory_size > num_phonemes) {
      throw std::invalid_argument("scenario: group " + g.name + " inventory size " +
                                  std::to_string(g.inventory_size) + " exceeds " +
                                  std::to_string(num_phonemes) + " phonemes");
    }
    if (g.inventory_size == 0 || g.size == 0 || g.readings == 0) {
      throw std::invalid_argument("scenario: group " + g.name + " has an empty dimension");
    }
    if (g.role != "pretrain" && g.role != "target") {
      throw std::invalid_argument("scenario: group " + g.name + " role must be pretrain or target");
    }
    if (g.inventory_overlap < 0.0 || g.inventory_overlap > 1.0) {
      throw std::invalid_argument("scenario: group " + g.name + " overlap outside [0,1]");
    }
    if (g.quality != "very_good" && g.quality != "good" && g.quality != "okay" &&
        g.quality != "not_okay") {
      throw std::invalid_argument("scenario: group " + g.name + " has unknown quality " + g.quality);
    }
  }
  for (const auto& g : groups) {
    if (!g.inventory_from.empty() && !names.count(g.inventory_from)) {
      throw std::invalid_argument("scenario: group " + g.name + " inherits from unknown group " +
                                  g.inventory_from);
    }
  }
}

ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig s;
  s.name = j.value("name", s.name);
  s.num_phonemes = j.value("num_phonemes", s.num_phonemes);
  s.feature_dim = j.value("feature_dim", s.feature_dim);
  s.prototype_scale = j.value("prototype_scale", s.prototype_scale);
  s.prototype_margin = j.value("prototype_margin", s.prototype_margin);
  s.min_duration = j.value("min_duration", s.min_duration);
  s.max_duration = j.value("max_duration", s.max_duration);
  s.frame_rate = j.value("frame_rate", s.frame_rate);
  s.utterances_per_reading = j.value("utterances_per_reading", s.utterances_per_reading);
  s.min_phonemes = j.value("min_phonemes", s.min_phonemes);
  s.max_phonemes = j.value("max_phonemes", s.max_phonemes);
  s.min_word = j.value("min_word", s.min_word);
  s.max_word = j.value("max_word", s.max_word);
  s.noise = j.value("noise", s.noise);
  s.boundary_scale = j.value("boundary_scale", s.boundary_scale);
  s.speaker_shift_scale = j.value("speaker_shift_scale", s.speaker_shift_scale);
  s.rate_jitter = j.value("rate_jitter", s.rate_jitter);
  s.dirichlet_alpha = j.value("dirichlet_alpha", s.dirichlet_alpha);
  for (const auto& gj : j.at("groups")) {
    GroupSpec g;
    g.name = gj.at("name").get<std::string>();
    g.size = gj.value("size", g.size);
    g.role = gj.value("role", g.role);
    g.script = gj.value("script", g.script);
    g.inventory_size = gj.value("inventory_size", g.inventory_size);
    g.inventory_overlap = gj.value("inventory_overlap", g.inventory_overlap);
    g.inventory_from = gj.value("inventory_from", g.inventory_from);
    g.orthography_noise = gj.value("orthography_noise", g.orthography_noise);
    if (gj.contains("geo_center")) g.geo_center = gj.at("geo_center").get<std::array<double, 2>>();
    g.geo_spread = gj.value("geo_spread", g.geo_spread);
    g.group_shift_scale = gj.value("group_shift_scale", g.group_shift_scale);
    g.language_shift_scale = gj.value("language_shift_scale", g.language_shift_scale);
    g.readings = gj.value("readings", g.readings);
    g.quality = gj.value("quality", g.quality);
    if (gj.contains("utterances_per_reading")) {
      g.utterances_per_reading = gj.at("utterances_per_reading").get<std::size_t>();
    }
    s.groups.push_back(std::move(g));
  }
  s.validate();
  return s;
}

json scenario_to_json(const ScenarioConfig& s) {
  json j{{"name", s.name},
         {"num_phonemes", s.num_phonemes},
         {"feature_dim", s.feature_dim},
         {"prototype_scale", s.prototype_scale},
         {"prototype_margin", s.prototype_margin},
         {"min_duration", s.min_duration},
         {"max_duration", s.max_duration},
         {"frame_rate", s.frame_rate},
         {"utterances_per_reading", s.utterances_per_reading},
         {"min_phonemes", s.min_phonemes},
         {"max_phonemes", s.max_phonemes},
         {"min_word", s.min_word},
         {"max_word", s.max_word},
         {"noise", s.noise},
         {"boundary_scale", s.boundary_scale},
         {"speaker_shift_scale", s.speaker_shift_scale},
         {"rate_jitter", s.rate_jitter},
         {"dirichlet_alpha", s.dirichlet_alpha}};
  json groups = json::array();
  for (const auto& g : s.groups) {
    json gj{{"name", g.name},
            {"size", g.size},
            {"role", g.role},
            {"script", g.script},
            {"inventory_size", g.inventory_size},
            {"inventory_overlap", g.inventory_overlap},
            {"inventory_from", g.inventory_from},
            {"orthography_noise", g.orthography_noise},
            {"geo_center", g.geo_center},
            {"geo_spread", g.geo_spread},
            {"group_shift_scale", g.group_shift_scale},
            {"language_shift_scale", g.language_shift_scale},
            {"readings", g.readings},
            {"quality", g.quality}};
    if (g.utterances_per_reading) gj["utterances_per_reading"] = *g.utterances_per_reading;
    groups.push_back(std::move(gj));
  }
  j["groups"] = std::move(groups);
  return j;
}

const SyntheticLanguage& Corpus::language(const std::string& id) const {
  for (const auto& l : languages)
    if (l.id == id) return l;
  throw std::invalid_argument("unknown language '" + id + "'");
}

std::vector<std::string> Corpus::grapheme_inventory() const {
  std::set<std::string> tokens{kWordSeparator};
  for (const auto& l : languages)
    for (const auto& [p, spelling] : l.orthography) tokens.insert(spelling.begin(), spelling.end());
  return {tokens.begin(), tokens.end()};
}

std::vector<std::string> Corpus::language_ids() const {
  std::vector<std::string> out;
  for (const auto& l : languages) out.push_back(l.id);
  return out;
}

UniversalPhoneSet make_phone_set(const ScenarioConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t P = config.num_phonemes, F = config.feature_dim;
  UniversalPhoneSet set;
  set.prototypes = Tensor(Shape{P, F}, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    for (int attempt = 0;; ++attempt) {
      auto v = gaussian_vector(F, config.prototype_scale, rng);
      double closest = std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < p; ++q) {
        double d = 0.0;
        for (std::size_t k = 0; k < F; ++k) d += (v[k] - set.prototypes(q, k)) * (v[k] - set.prototypes(q, k));
        closest = std::min(closest, std::sqrt(d));
      }
      if (closest >= config.prototype_margin) {
        for (std::size_t k = 0; k < F; ++k) set.prototypes(p, k) = v[k];
        break;
      }
      if (attempt > 10000) {
        throw std::invalid_argument("cannot place " + std::to_string(P) +
                                    " phoneme prototypes with margin " +
                                    std::to_string(config.prototype_margin));
      }
    }
  }
  std::uniform_int_distribution<std::size_t> dur(config.min_duration, config.max_duration);
  for (std::size_t p = 0; p < P; ++p) set.durations.push_back(dur(rng));
  set.boundary = gaussian_vector(F, config.boundary_scale, rng);
  return set;
}

std::vector<SyntheticLanguage> generate_language_set(const ScenarioConfig& config,
                                                     const UniversalPhoneSet& phones,
                                                     std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t P = phones.size();
  std::vector<std::size_t> universe(P);
  std::iota(universe.begin(), universe.end(), std::size_t{0});

  // Canonical spelling per script: phoneme p -> symbol spelling[s][p].
  std::map<std::size_t, std::vector<std::size_t>> canonical;
  for (const auto& g : config.groups) {
    if (canonical.count(g.script)) continue;
    std::mt19937_64 srng(mix(seed, tag("script") + g.script));
    auto perm = universe;
    std::shuffle(perm.begin(), perm.end(), srng);
    canonical[g.script] = perm;
  }

  std::map<std::string, std::vector<std::size_t>> base;
  for (const auto& g : config.groups) {
    if (g.inventory_from.empty()) base[g.name] = sample_without_replacement(universe, g.inventory_size, rng);
  }
  for (const auto& g : config.groups) {
    if (!g.inventory_from.empty()) base[g.name] = base.at(g.inventory_from);
  }

  std::vector<SyntheticLanguage> out;
  for (std::size_t gi = 0; gi < config.groups.size(); ++gi) {
    const GroupSpec& g = config.groups[gi];
    const auto group_shift = gaussian_vector(config.feature_dim, g.group_shift_scale, rng);
    for (std::size_t li = 0; li < g.size; ++li) {
      SyntheticLanguage lang;
      lang.id = g.name + std::to_string(li + 1);
      lang.group = g.name;
      lang.role = g.role;
      lang.family = gi;
      lang.script = g.script;
      lang.quality = g.quality;

      const auto keep = static_cast<std::size_t>(
          std::lround(g.inventory_overlap * static_cast<double>(g.inventory_size)));
      auto inv = sample_without_replacement(base.at(g.name), keep, rng);
      std::vector<std::size_t> rest;
      for (std::size_t p : universe)
        if (std::find(inv.begin(), inv.end(), p) == inv.end()) rest.push_back(p);
      auto extra = sample_without_replacement(rest, g.inventory_size - inv.size(), rng);
      inv.insert(inv.end(), extra.begin(), extra.end());
      std::sort(inv.begin(), inv.end());
      lang.inventory = inv;

      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::uniform_int_distribution<std::size_t> symbol(0, P - 1);
      for (std::size_t p : lang.inventory) {
        std::vector<std::string> spelling{grapheme_token(g.script, canonical.at(g.script)[p])};
        if (unit(rng) < g.orthography_noise) {
          if (unit(rng) < 0.5) {
            spelling[0] = grapheme_token(g.script, symbol(rng));
          } else {
            spelling.push_back(grapheme_token(g.script, symbol(rng)));
          }
        }
        lang.orthography[p] = spelling;
      }

      lang.shift = gaussian_vector(config.feature_dim, g.language_shift_scale, rng);
      for (std::size_t k = 0; k < lang.shift.size(); ++k) lang.shift[k] += group_shift[k];
      std::normal_distribution<double> geo(0.0, g.geo_spread);
      lang.latitude = std::clamp(g.geo_center[0] + geo(rng), -89.0, 89.0);
      lang.longitude = g.geo_center[1] + geo(rng);

      std::gamma_distribution<double> gamma(config.dirichlet_alpha, 1.0);
      for (std::size_t r = 0; r < lang.inventory.size(); ++r) {
        std::vector<double> row(lang.inventory.size());
        double total = 0.0;
        for (double& x : row) {
          x = gamma(rng) + 1e-6;
          total += x;
        }
        for (double& x : row) x /= total;
        lang.transitions.push_back(std::move(row));
      }

      std::uniform_real_distribution<double> rate(1.0 - config.rate_jitter, 1.0 + config.rate_jitter);
      for (std::size_t r = 0; r < g.readings; ++r) {
        SyntheticReading reading;
        reading.id = lang.id + "-r" + std::to_string(r + 1);
        reading.language = lang.id;
        reading.speaker = lang.id + "-spk" + std::to_string(r + 1);
        reading.speaker_shift = gaussian_vector(config.feature_dim, config.speaker_shift_scale, rng);
        reading.rate = rate(rng);
        reading.noise = config.noise;
        reading.utterances = g.utterances_per_reading.value_or(config.utterances_per_reading);
        lang.readings.push_back(std::move(reading));
      }
      out.push_back(std::move(lang));
    }
  }
  return out;
}

std::vector<std::size_t> sample_phonemes(const ScenarioConfig& config, const SyntheticLanguage& lang,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(config.min_phonemes, config.max_phonemes);
  const std::size_t n = len(rng);
  std::uniform_int_distribution<std::size_t> first(0, lang.inventory.size() - 1);
  std::size_t state = first(rng);
  std::vector<std::size_t> out{lang.inventory[state]};
  while (out.size() < n) {
    const auto& row = lang.transitions[state];
    std::discrete_distribution<std::size_t> next(row.begin(), row.end());
    state = next(rng);
    out.push_back(lang.inventory[state]);
  }
  return out;
}

SynthesizedUtterance synthesize_utterance(const ScenarioConfig& config, const UniversalPhoneSet& phones,
                                          const SyntheticLanguage& lang, const SyntheticReading& reading,
                                          const std::vector<std::size_t>& phonemes, std::uint64_t seed) {
  if (phonemes.empty()) throw std::invalid_argument("synthesize_utterance: empty phoneme sequence");
  for (std::size_t p : phonemes) {
    if (!lang.orthography.count(p)) {
      throw std::invalid_argument("phoneme " + std::to_string(p) + " not in inventory of " + lang.id);
    }
  }
  std::mt19937_64 rng(seed);
  SynthesizedUtterance out;

  std::uniform_int_distribution<std::size_t> word_len(config.min_word, config.max_word);
  std::size_t left_in_word = word_len(rng);
  std::vector<bool> word_final(phonemes.size(), false);
  for (std::size_t i = 0; i < phonemes.size(); ++i) {
    if (left_in_word == 0) {
      out.transcript.push_back(kWordSeparator);
      left_in_word = word_len(rng);
      word_final[i - 1] = true;
    }
    const auto& spelling = lang.orthography.at(phonemes[i]);
    out.transcript.insert(out.transcript.end(), spelling.begin(), spelling.end());
    --left_in_word;
  }
  word_final.back() = true;

  const std::size_t F = config.feature_dim;
  std::vector<double> frames;
  std::normal_distribution<double> noise(0.0, 1.0);
  std::size_t t = 0;
  for (std::size_t i = 0; i < phonemes.size(); ++i) {
    const std::size_t p = phonemes[i];
    const auto n = std::max<long>(
        1, std::lround(static_cast<double>(phones.durations[p]) * reading.rate));
    for (long k = 0; k < n; ++k) {
      for (std::size_t d = 0; d < F; ++d) {
        double v = phones.prototypes(p, d) + lang.shift[d] + reading.speaker_shift[d];
        if (word_final[i] && !phones.boundary.empty()) v += phones.boundary[d];
        if (reading.noise > 0.0) v += reading.noise * noise(rng);
        frames.push_back(v);
      }
    }
    out.alignment.push_back({p, t, t + static_cast<std::size_t>(n)});
    t += static_cast<std::size_t>(n);
  }
  out.features = Tensor(Shape{t, F}, std::move(frames));
  return out;
}

std::uint64_t utterance_seed(std::uint64_t corpus_seed, std::size_t language, std::size_t reading,
                             std::size_t index) {
  return mix(mix(mix(corpus_seed, language + 1), reading + 1), index + 1);
}

Corpus generate_corpus(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  Corpus corpus;
  corpus.scenario = config.name;
  corpus.seed = seed;
  corpus.frame_rate = config.frame_rate;
  corpus.feature_dim = config.feature_dim;
  corpus.phones = make_phone_set(config, mix(seed, tag("phones")));
  corpus.languages = generate_language_set(config, corpus.phones, mix(seed, tag("languages")));

  for (std::size_t li = 0; li < corpus.languages.size(); ++li) {
    auto& lang = corpus.languages[li];
    for (std::size_t ri = 0; ri < lang.readings.size(); ++ri) {
      auto& reading = lang.readings[ri];
      std::vector<std::string> ids;
      const std::size_t first = corpus.utterances.size();
      std::size_t frames = 0;
      for (std::size_t k = 0; k < reading.utterances; ++k) {
        const std::uint64_t s = utterance_seed(seed, li, ri, k);
        Utterance u;
        std::ostringstream id;
        id << reading.id << "-" << std::setw(4) << std::setfill('0') << k;
        u.id = id.str();
        u.language = lang.id;
        u.reading = reading.id;
        u.speaker = reading.speaker;
        u.phonemes = sample_phonemes(config, lang, s);
        auto syn = synthesize_utterance(config, corpus.phones, lang, reading, u.phonemes, splitmix(s));
        u.features = std::move(syn.features);
        u.transcript = std::move(syn.transcript);
        u.alignment = std::move(syn.alignment);
        frames += u.frames();
        ids.push_back(u.id);
        corpus.utterances.push_back(std::move(u));
      }
      reading.duration_seconds = static_cast<double>(frames) / config.frame_rate;
      const auto splits = train::make_splits(ids, mix(seed, tag(reading.id)));
      std::map<std::string, std::string> which;
      for (const auto& id : splits.train) which[id] = "train";
      for (const auto& id : splits.dev) which[id] = "dev";
      for (const auto& id : splits.test) which[id] = "test";
      for (std::size_t k = first; k < corpus.utterances.size(); ++k) {
        corpus.utterances[k].split = which.at(corpus.utterances[k].id);
      }
    }
  }
  return corpus;
}

std::string encode_features(const Tensor& features) {
  std::string out = "FEAT1\n" + std::to_string(features.rows()) + " " +
                    std::to_string(features.cols()) + "\n";
  io::append_f64_le(out, features.data());
  return out;
}

Tensor decode_features(const std::string& bytes) {
  if (bytes.rfind("FEAT1\n", 0) != 0) throw std::runtime_error("not a FEAT1 feature file");
  const std::size_t eol = bytes.find('\n', 6);
  if (eol == std::string::npos) throw std::runtime_error("feature file header truncated");
  std::istringstream dims(bytes.substr(6, eol - 6));
  std::size_t rows = 0, cols = 0;
  if (!(dims >> rows >> cols)) throw std::runtime_error("feature file has a bad dimension line");
  auto data = io::read_f64_le(bytes, eol + 1, rows * cols);
  if (eol + 1 + rows * cols * 8 != bytes.size()) throw std::runtime_error("feature file has trailing bytes");
  return Tensor(Shape{rows, cols}, std::move(data));
}

namespace {

std::string feature_path(const Utterance& u) { return "feats/" + u.language + "/" + u.id + ".feat"; }
std::string alignment_path(const Utterance& u) { return "align/" + u.language + "/" + u.id + ".ali"; }

json language_to_json(const SyntheticLanguage& l) {
  json orth = json::object();
  for (const auto& [p, spelling] : l.orthography) orth[std::to_string(p)] = spelling;
  json readings = json::array();
  for (const auto& r : l.readings) {
    readings.push_back({{"id", r.id},
                        {"speaker", r.speaker},
                        {"speaker_shift", r.speaker_shift},
                        {"rate", r.rate},
                        {"noise", r.noise},
                        {"utterances", r.utterances},
                        {"duration_seconds", r.duration_seconds}});
  }
  return {{"id", l.id},           {"group", l.group},
          {"role", l.role},       {"family", l.family},
          {"script", l.script},   {"inventory", l.inventory},
          {"orthography", orth},  {"shift", l.shift},
          {"latitude", l.latitude}, {"longitude", l.longitude},
          {"quality", l.quality}, {"transitions", l.transitions},
          {"readings", readings}};
}

SyntheticLanguage language_from_json(const json& j) {
  SyntheticLanguage l;
  l.id = j.at("id").get<std::string>();
  l.group = j.at("group").get<std::string>();
  l.role = j.at("role").get<std::string>();
  l.family = j.at("family").get<std::size_t>();
  l.script = j.at("script").get<std::size_t>();
  l.inventory = j.at("inventory").get<std::vector<std::size_t>>();
  for (const auto& [k, v] : j.at("orthography").items()) {
    l.orthography[std::stoul(k)] = v.get<std::vector<std::string>>();
  }
  l.shift = j.at("shift").get<std::vector<double>>();
  l.latitude = j.at("latitude").get<double>();
  l.longitude = j.at("longitude").get<double>();
  l.quality = j.at("quality").get<std::string>();
  l.transitions = j.at("transitions").get<std::vector<std::vector<double>>>();
  for (const auto& rj : j.at("readings")) {
    SyntheticReading r;
    r.id = rj.at("id").get<std::string>();
    r.language = l.id;
    r.speaker = rj.at("speaker").get<std::string>();
    r.speaker_shift = rj.at("speaker_shift").get<std::vector<double>>();
    r.rate = rj.at("rate").get<double>();
    r.noise = rj.at("noise").get<double>();
    r.utterances = rj.at("utterances").get<std::size_t>();
    r.duration_seconds = rj.at("duration_seconds").get<double>();
    l.readings.push_back(std::move(r));
  }
  return l;
}

}  // namespace

std::string manifest_text(const Corpus& corpus) {
  std::string out =
      "utterance_id\tlanguage_id\treading_id\tspeaker_id\tfeature_file\tnum_frames\ttranscript\t"
      "phonemes\talignment_file\tsplit\n";
  for (const auto& u : corpus.utterances) {
    std::vector<std::string> ph;
    for (std::size_t p : u.phonemes) ph.push_back(std::to_string(p));
    out += u.id + "\t" + u.language + "\t" + u.reading + "\t" + u.speaker + "\t" + feature_path(u) +
           "\t" + std::to_string(u.frames()) + "\t" + io::join(u.transcript, " ") + "\t" +
           io::join(ph, " ") + "\t" + alignment_path(u) + "\t" + u.split + "\n";
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  json meta{{"scenario", corpus.scenario},
            {"seed", corpus.seed},
            {"frame_rate", corpus.frame_rate},
            {"feature_dim", corpus.feature_dim},
            {"phone_prototypes", corpus.phones.prototypes.values()},
            {"phone_durations", corpus.phones.durations},
            {"phone_boundary", corpus.phones.boundary}};
  json langs = json::array();
  for (const auto& l : corpus.languages) langs.push_back(language_to_json(l));
  meta["languages"] = std::move(langs);
  io::write_file(dir / "corpus.json", meta.dump(1) + "\n");
  for (const auto& u : corpus.utterances) {
    io::write_file(dir / feature_path(u), encode_features(u.features));
    std::string ali;
    for (const auto& s : u.alignment) {
      ali += std::to_string(s.phoneme) + " " + std::to_string(s.start) + " " + std::to_string(s.end) + "\n";
    }
    io::write_file(dir / alignment_path(u), ali);
  }
  io::write_file(dir / "manifest.tsv", manifest_text(corpus));
}

Corpus load_corpus(const std::filesystem::path& dir) {
  const json meta = json::parse(io::read_file(dir / "corpus.json"));
  Corpus corpus;
  corpus.scenario = meta.at("scenario").get<std::string>();
  corpus.seed = meta.at("seed").get<std::uint64_t>();
  corpus.frame_rate = meta.at("frame_rate").get<double>();
  corpus.feature_dim = meta.at("feature_dim").get<std::size_t>();
  corpus.phones.durations = meta.at("phone_durations").get<std::vector<std::size_t>>();
  corpus.phones.boundary = meta.at("phone_boundary").get<std::vector<double>>();
  corpus.phones.prototypes = Tensor(Shape{corpus.phones.durations.size(), corpus.feature_dim},
                                    meta.at("phone_prototypes").get<std::vector<double>>());
  for (const auto& lj : meta.at("languages")) corpus.languages.push_back(language_from_json(lj));

  std::istringstream manifest(io::read_file(dir / "manifest.tsv"));
  std::string line;
  std::getline(manifest, line);
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    auto f = io::split(line, '\t');
    if (f.size() != 10) throw std::runtime_error("manifest row has " + std::to_string(f.size()) + " fields");
    Utterance u;
    u.id = f[0];
    u.language = f[1];
    u.reading = f[2];
    u.speaker = f[3];
    u.features = decode_features(io::read_file(dir / f[4]));
    if (u.frames() != std::stoul(f[5])) throw std::runtime_error("frame count mismatch for " + u.id);
    if (!f[6].empty()) u.transcript = io::split(f[6], ' ');
    if (!f[7].empty())
      for (const auto& p : io::split(f[7], ' ')) u.phonemes.push_back(std::stoul(p));
    std::istringstream ali(io::read_file(dir / f[8]));
    for (Segment s; ali >> s.phoneme >> s.start >> s.end;) u.alignment.push_back(s);
    u.split = f[9];
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace polyglot::synth
