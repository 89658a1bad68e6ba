#pragma once

// Synthetic multilingual corpora: languages are organised in groups that
// share a script, a base phoneme inventory, an acoustic offset and a
// geographic cluster. Each language has a few readings, each with its own
// speaker offset, speaking rate and noise level.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "polyglot/tensor.hpp"

namespace polyglot::synth {

inline const std::string kWordSeparator = "|";

struct GroupSpec {
  std::string name;
  std::size_t size = 4;
  // "pretrain" languages are candidates for multilingual pretraining;
  // "target" languages are only ever adapted to.
  std::string role = "pretrain";
  std::size_t script = 0;
  std::size_t inventory_size = 12;
  // Fraction of each language's inventory drawn from the group base.
  double inventory_overlap = 0.8;
  // Use another group's base inventory instead of drawing a fresh one.
  std::string inventory_from;
  // Per-phoneme probability that a language respells a phoneme.
  double orthography_noise = 0.1;
  std::array<double, 2> geo_center{0.0, 0.0};  // degrees (lat, lon)
  double geo_spread = 2.0;
  double group_shift_scale = 0.5;
  double language_shift_scale = 0.2;
  std::size_t readings = 2;
  std::string quality = "good";
  std::optional<std::size_t> utterances_per_reading;
};

struct ScenarioConfig {
  std::string name = "custom";
  std::size_t num_phonemes = 24;
  std::size_t feature_dim = 8;
  double prototype_scale = 1.0;
  double prototype_margin = 1.0;
  std::size_t min_duration = 7;
  std::size_t max_duration = 10;
  double frame_rate = 100.0;
  std::size_t utterances_per_reading = 60;
  std::size_t min_phonemes = 4;
  std::size_t max_phonemes = 10;
  std::size_t min_word = 2;
  std::size_t max_word = 5;
  double noise = 0.3;
  // Scale of the offset added to every frame of a word-final phoneme, the
  // acoustic cue for word boundaries.
  double boundary_scale = 1.0;
  double speaker_shift_scale = 0.4;
  double rate_jitter = 0.1;
  double dirichlet_alpha = 0.5;
  std::vector<GroupSpec> groups;

  void validate() const;
};

ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& s);

struct UniversalPhoneSet {
  Tensor prototypes;                // P×F
  std::vector<std::size_t> durations;  // nominal frames per phoneme
  std::vector<double> boundary;        // word-final offset, F-dim
  std::size_t size() const { return durations.size(); }
};

struct SyntheticReading {
  std::string id;
  std::string language;
  std::string speaker;
  std::vector<double> speaker_shift;
  double rate = 1.0;
  double noise = 0.0;
  std::size_t utterances = 0;
  double duration_seconds = 0.0;
};

struct SyntheticLanguage {
  std::string id;
  std::string group;
  std::string role;
  std::size_t family = 0;
  std::size_t script = 0;
  std::vector<std::size_t> inventory;  // sorted universal phoneme ids
  std::map<std::size_t, std::vector<std::string>> orthography;
  std::vector<double> shift;
  double latitude = 0.0;
  double longitude = 0.0;
  std::string quality = "good";
  // Row-stochastic transitions between inventory entries, in inventory order.
  std::vector<std::vector<double>> transitions;
  std::vector<SyntheticReading> readings;
};

struct Segment {
  std::size_t phoneme = 0;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
};

struct Utterance {
  std::string id;
  std::string language;
  std::string reading;
  std::string speaker;
  Tensor features;                   // T×F
  std::vector<std::string> transcript;  // grapheme tokens with word separators
  std::vector<std::size_t> phonemes;
  std::vector<Segment> alignment;
  std::string split;  // train | dev | test
  std::size_t frames() const { return features.rows(); }
};

struct Corpus {
  std::string scenario;
  std::uint64_t seed = 0;
  double frame_rate = 100.0;
  std::size_t feature_dim = 0;
  UniversalPhoneSet phones;
  std::vector<SyntheticLanguage> languages;
  std::vector<Utterance> utterances;

  const SyntheticLanguage& language(const std::string& id) const;
  // Sorted union of grapheme tokens over all languages, separator included.
  std::vector<std::string> grapheme_inventory() const;
  std::vector<std::string> language_ids() const;
};

UniversalPhoneSet make_phone_set(const ScenarioConfig& config, std::uint64_t seed);

std::vector<SyntheticLanguage> generate_language_set(const ScenarioConfig& config,
                                                     const UniversalPhoneSet& phones,
                                                     std::uint64_t seed);

struct SynthesizedUtterance {
  Tensor features;
  std::vector<Segment> alignment;
  std::vector<std::string> transcript;
};

// Renders a phoneme sequence. Word separators are inserted every
// min_word..max_word phonemes, drawn from `seed`; the last phoneme of each
// word carries the phone set's boundary offset.
SynthesizedUtterance synthesize_utterance(const ScenarioConfig& config,
                                          const UniversalPhoneSet& phones,
                                          const SyntheticLanguage& lang,
                                          const SyntheticReading& reading,
                                          const std::vector<std::size_t>& phonemes,
                                          std::uint64_t seed);

// Samples a phoneme sequence from the language's Markov chain.
std::vector<std::size_t> sample_phonemes(const ScenarioConfig& config,
                                         const SyntheticLanguage& lang, std::uint64_t seed);

// Deterministic per-utterance seed, independent of generation order.
std::uint64_t utterance_seed(std::uint64_t corpus_seed, std::size_t language, std::size_t reading,
                             std::size_t index);

Corpus generate_corpus(const ScenarioConfig& config, std::uint64_t seed);

// On-disk layout:
//   corpus.json            scenario, phone set, language/reading metadata
//   manifest.tsv           one row per utterance
//   feats/<lang>/<utt>.feat
//   align/<lang>/<utt>.ali
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);
std::string manifest_text(const Corpus& corpus);

// FEAT1 feature file: "FEAT1\n", "<T> <F>\n", then T·F little-endian float64.
std::string encode_features(const Tensor& features);
Tensor decode_features(const std::string& bytes);

}  // namespace polyglot::synth
