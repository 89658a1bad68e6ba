#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyglot/checkpoint.hpp"
#include "polyglot/model.hpp"
#include "polyglot/synthdata.hpp"

namespace polyglot::eval {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  // 100·errors/reference_length; 0 for an empty reference with no errors.
  double rate() const;
  EditCounts& operator+=(const EditCounts& o);
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

// Unit-cost Levenshtein alignment. Among minimal alignments, substitutions
// are preferred over an insertion/deletion pair.
EditCounts edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

// Words are the runs of grapheme tokens between word separators.
std::vector<std::string> words_of(const std::vector<std::string>& tokens);
// Grapheme tokens with separators removed.
std::vector<std::string> characters_of(const std::vector<std::string>& tokens);

struct UtteranceResult {
  std::string utterance_id;
  std::vector<std::string> reference;   // grapheme tokens
  std::vector<std::string> hypothesis;  // grapheme tokens
  EditCounts words;
  EditCounts characters;
};

UtteranceResult score_utterance(std::string id, std::vector<std::string> reference,
                                std::vector<std::string> hypothesis);

struct Metrics {
  EditCounts words;
  EditCounts characters;
  std::size_t utterances = 0;

  double wer() const { return words.rate(); }
  double cer() const { return characters.rate(); }
};

Metrics aggregate(const std::vector<UtteranceResult>& results);

// Columns: utterance_id, reference, hypothesis, S, I, D (word level), then
// N, char_S, char_I, char_D, char_N.
std::string results_csv(const std::vector<UtteranceResult>& results);
std::vector<UtteranceResult> parse_results_csv(const std::string& text);

enum class Protocol { ReadingAdaptation, LanguageAdaptation };
Protocol parse_protocol(const std::string& name);
std::string protocol_name(Protocol p);

class ProtocolViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvaluationSpec {
  Protocol protocol = Protocol::ReadingAdaptation;
  std::string language;           // target language
  std::string held_out_reading;   // language adaptation only
  // Readings the model was adapted on; read from checkpoint metadata when
  // empty.
  std::vector<std::string> adapted_readings;
  std::string split = "test";     // reading adaptation only
  std::size_t beam = 4;
};

// Selects the utterances a protocol scores:
//   reading adaptation: the split of the adapted readings;
//   language adaptation: every utterance of the held-out reading.
// Throws ProtocolViolation when the held-out reading was adapted on.
std::vector<const synth::Utterance*> protocol_utterances(const synth::Corpus& corpus,
                                                         const EvaluationSpec& spec);

struct Evaluation {
  Metrics metrics;
  std::vector<UtteranceResult> utterances;
};

Evaluation evaluate(const Checkpoint& ckpt, const synth::Corpus& corpus, EvaluationSpec spec);

// Decodes and scores a set of utterances; no protocol checks.
Evaluation evaluate_utterances(const ParamSet& params, const model::ModelConfig& config,
                               const std::vector<std::string>& graphemes,
                               const std::vector<const synth::Utterance*>& utterances,
                               std::size_t beam);

struct DeltaReport {
  std::map<std::string, double> relative_delta;  // percent, per language
  std::vector<std::string> excluded;             // languages with WER_a = 0
  double mean = 0.0;
};

// Per-language 100·(b − a)/a and the unweighted mean.
DeltaReport relative_delta_report(const std::map<std::string, double>& a,
                                  const std::map<std::string, double>& b);

// Tab-separated table: one row per language, one column per condition, and
// an average relative delta row for every condition after the first.
std::string render_report(const std::vector<std::string>& conditions,
                          const std::map<std::string, std::map<std::string, double>>& results);

struct ProbeResult {
  double accuracy = 0.0;  // dev-split fraction in [0,1]
  std::size_t train_examples = 0;
  std::size_t dev_examples = 0;
  std::size_t classes = 0;
};

// Softmax regression on the raw features: `steps` full-batch gradient
// steps at learning rate `lr`, weights initialised from `seed`.
ProbeResult train_probe(const Tensor& train_x, const std::vector<std::size_t>& train_y,
                        const Tensor& dev_x, const std::vector<std::size_t>& dev_y,
                        std::size_t classes, std::uint64_t seed, std::size_t steps = 200,
                        double lr = 0.1);

// Utterance means of the classifier layer for the given utterances (N×H).
Tensor utterance_means(const ParamSet& params, const model::ModelConfig& config,
                       const std::vector<const synth::Utterance*>& utterances);

// Probes the frozen encoder for language identity: trains on the train split
// of `languages`, reports dev-split accuracy.
ProbeResult probe_language_accuracy(const ParamSet& params, const model::ModelConfig& config,
                                    const synth::Corpus& corpus,
                                    const std::vector<std::string>& languages, std::uint64_t seed);

struct EmbeddingRow {
  std::string language;
  std::size_t phoneme = 0;
  std::string utterance;
  std::vector<double> state;
};

// Encoder index of an occurrence spanning [start, end): floor(mid/factor).
std::size_t midpoint_index(std::size_t start, std::size_t end, std::size_t factor);

// Classifier-layer state at the mid-point of every matching phoneme
// occurrence. An empty filter keeps all phonemes. `notes` receives one line
// per requested phoneme a language lacks.
std::vector<EmbeddingRow> export_embeddings(const ParamSet& params, const model::ModelConfig& config,
                                            const synth::Corpus& corpus,
                                            const std::set<std::size_t>& phoneme_filter,
                                            const std::vector<std::string>& languages,
                                            const std::string& split = "",
                                            std::vector<std::string>* notes = nullptr);

std::string embeddings_csv(const std::vector<EmbeddingRow>& rows);

struct Projection {
  Tensor points;      // N×2
  Tensor components;  // 2×H, unit rows
  Tensor mean;        // 1×H
  double residual = 0.0;  // squared reconstruction error of the centred data
};

// Centred PCA onto the top two principal directions.
Projection pca_2d(const Tensor& x);

// Mean distance between occurrences of the same phoneme in different
// languages divided by the mean distance between different phonemes within
// a language. Lower means phoneme clusters are shared across languages.
double cluster_separation(const std::vector<EmbeddingRow>& rows);

}  // namespace polyglot::eval
