#pragma once

// Training objectives and loops.
//
// Pretraining performs two updates per batch: one on the interpolated
// recognition loss, then one on the language-adversarial loss whose gradient
// reaches the encoder through a gradient-reversal node scaled by λ(p).
// Adaptation drops both auxiliary objectives.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polyglot/checkpoint.hpp"
#include "polyglot/model.hpp"
#include "polyglot/optimizer.hpp"
#include "polyglot/synthdata.hpp"
#include "polyglot/vocab.hpp"

namespace polyglot::train {

// λ(p) = 2/(1 + exp(−10p)) − 1 for p in [0, 1].
double lambda_schedule(double p);

enum class Mode { Pretrain, Adapt };

struct LossBreakdown {
  double att_ce = 0.0;
  double grapheme_ctc = 0.0;
  double phoneme_ctc = 0.0;
  double adversarial_ce = 0.0;
  double lambda = 0.0;
  double p = 0.0;
};

// Pretrain: (att + ctc_g + ctc_p)/3. Adapt: (att + ctc_g)/2.
double interpolate_recognition_loss(const LossBreakdown& b, Mode mode);

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 4;
  std::uint64_t seed = 1;
  Mode mode = Mode::Pretrain;
  bool use_phoneme = true;
  bool use_adversarial = true;
  AdamConfig optimizer{.learning_rate = 5e-3};
  // Write a checkpoint every N epochs through TrainHooks::on_checkpoint;
  // 0 disables periodic checkpoints.
  std::size_t checkpoint_every = 0;

  // Adapt mode switches both auxiliary objectives off.
  TrainConfig normalized() const;
};

struct Example {
  std::string id;
  const Tensor* features = nullptr;
  ctc::LabelSequence graphemes;
  ctc::LabelSequence phonemes;
  std::size_t language = 0;  // classifier output index
};

// Utterances of `languages` in `split` (empty: every split), optionally
// restricted to `readings`. Language indices follow `languages`.
std::vector<Example> make_examples(const synth::Corpus& corpus, const Vocabulary& vocab,
                                   const std::vector<std::string>& languages,
                                   const std::string& split,
                                   const std::vector<std::string>& readings = {});

// Per-utterance losses summed over a batch are averaged. Utterances whose
// label cannot be emitted by a CTC head contribute nothing to that term.
struct BatchLoss {
  ad::Var recognition;
  LossBreakdown breakdown;
  std::size_t infeasible = 0;
};

BatchLoss recognition_loss(ad::Graph& g, const ParamSet& params, const model::ModelConfig& config,
                           std::span<const Example> batch, Mode mode, bool use_phoneme);

// Mean cross-entropy of the language classifier on utterance means, passed
// through a gradient-reversal node when `lambda` is set.
ad::Var adversarial_loss(ad::Graph& g, const ParamSet& params, const model::ModelConfig& config,
                         std::span<const Example> batch, std::optional<double> lambda);

// Step 1 of a pretraining update: one optimizer step on the interpolated
// recognition loss.
LossBreakdown recognition_step(ParamSet& params, const model::ModelConfig& config,
                               std::span<const Example> batch, bool use_phoneme, Adam& opt);

// Step 2: fresh forward pass, classifier cross-entropy on reversed utterance
// means; only encoder and classifier tensors are updated. Returns the loss.
double adversarial_step(ParamSet& params, const model::ModelConfig& config,
                        std::span<const Example> batch, double lambda, Adam& opt);

// One pretraining update at progress p. Step 1 updates every tensor the
// recognition loss reaches; step 2 runs a fresh forward pass and updates
// only encoder and classifier tensors.
LossBreakdown pretrain_step(ParamSet& params, const model::ModelConfig& config,
                            std::span<const Example> batch, double p, const TrainConfig& tc,
                            Adam& opt);

// One adaptation update; phoneme head and classifier are never touched.
LossBreakdown adapt_step(ParamSet& params, const model::ModelConfig& config,
                         std::span<const Example> batch, Adam& opt);

// Length-bucketed batches for one epoch. Examples are shuffled, grouped into
// pools of 8 batches, sorted by length within a pool, cut into batches, and
// the batch order is shuffled.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& examples,
                                                   std::size_t batch_size, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double p = 0.0;
  double lambda = 0.0;
  LossBreakdown train;
  double dev_att = 0.0;
  double dev_ctc_g = 0.0;
  double dev_cer = 0.0;
  std::size_t skipped = 0;  // utterances with an infeasible CTC term
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::string csv() const;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(std::size_t epoch, const ParamSet&)> on_checkpoint;
};

struct TrainResult {
  ParamSet params;  // best-dev parameters
  TrainingLog log;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
};

// Shared loop for both modes. Dev selection uses greedy-decoded CER with the
// dev recognition loss as tie-breaker.
TrainResult fit(const model::ModelConfig& config, ParamSet init, const std::vector<Example>& train,
                const std::vector<Example>& dev, const Vocabulary& vocab, const TrainConfig& tc,
                const TrainHooks& hooks = {});

// Dev losses and greedy CER for a parameter set.
struct DevScore {
  double att = 0.0;
  double ctc_g = 0.0;
  double cer = 0.0;
};
DevScore score_dev(const ParamSet& params, const model::ModelConfig& config,
                   const std::vector<Example>& dev, const Vocabulary& vocab);

struct PretrainResult {
  Checkpoint checkpoint;
  TrainingLog log;
};

// Trains a seed model on the train split of `languages` (all their readings)
// and selects on their dev split. The grapheme vocabulary is the corpus-wide
// union.
PretrainResult pretrain(const synth::Corpus& corpus, const std::vector<std::string>& languages,
                        const model::ModelConfig& config, const TrainConfig& tc,
                        const TrainHooks& hooks = {});

// Builds the model config for a corpus and a pretraining language count.
model::ModelConfig desk_config(const synth::Corpus& corpus, std::size_t languages);

struct AdaptRequest {
  std::string language;
  // Readings to adapt on; empty means all readings of the language.
  std::vector<std::string> readings;
  // Cap on training utterances (taken in manifest order); 0 keeps all.
  std::size_t max_train_utterances = 0;
};

// Untrained model for the corpus vocabulary, the starting point of a
// monolingual baseline.
Checkpoint initial_checkpoint(const synth::Corpus& corpus, const model::ModelConfig& config,
                              std::uint64_t seed);

// Continues training from `seed` on the target language in adapt mode.
PretrainResult adapt(const Checkpoint& seed, const synth::Corpus& corpus, const AdaptRequest& req,
                     const TrainConfig& tc, const TrainHooks& hooks = {});

}  // namespace polyglot::train
