#pragma once

// Hybrid CTC/attention recogniser used for both multilingual pretraining and
// target-language adaptation.
//
//   features ─ frame stacking ─ BiGRU layer 0 ─ ... ─ BiGRU layer N-1 ─┬─ attention decoder
//                                         │                          └─ grapheme CTC
//                               (phoneme layer) ─┬─ phoneme CTC
//                                                └─ time mean ─ language classifier
//
// The phoneme head and the classifier read the same encoder layer, by default
// the penultimate one.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "polyglot/autodiff.hpp"
#include "polyglot/ctc.hpp"
#include "polyglot/optimizer.hpp"
#include "polyglot/tensor.hpp"

namespace polyglot::model {

// Reserved grapheme ids. Real graphemes start at kFirstGrapheme.
inline constexpr std::size_t kUnk = 0;
inline constexpr std::size_t kSos = 1;
inline constexpr std::size_t kEos = 2;
inline constexpr std::size_t kFirstGrapheme = 3;

struct ModelConfig {
  std::size_t feature_dim = 8;
  std::size_t encoder_layers = 2;
  std::size_t hidden_size = 32;
  std::size_t subsample_factor = 4;
  std::size_t decoder_embed_size = 16;
  std::size_t attention_dim = 32;
  std::size_t attention_conv_width = 3;
  std::size_t attention_conv_channels = 4;
  // Attention output classes, reserved ids included. The grapheme CTC head
  // has one more output: the blank.
  std::size_t grapheme_vocab_size = 4;
  // Phoneme classes; the phoneme CTC head appends a blank.
  std::size_t phoneme_vocab_size = 1;
  std::size_t num_pretrain_languages = 1;
  // Encoder layer read by the phoneme head and the language classifier.
  std::size_t phoneme_layer = 0;

  // Small preset used for experiments.
  static ModelConfig desk(std::size_t feature_dim, std::size_t grapheme_vocab,
                          std::size_t phoneme_vocab, std::size_t languages);
  // Full-size values (4 layers, 768 units, width-10 attention filters).
  static ModelConfig full_scale(std::size_t feature_dim, std::size_t grapheme_vocab,
                                 std::size_t phoneme_vocab, std::size_t languages);

  void validate() const;
  std::size_t encoder_length(std::size_t frames) const {
    return (frames + subsample_factor - 1) / subsample_factor;
  }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Parameter groups by name prefix.
bool is_encoder_param(const std::string& name);
bool is_decoder_param(const std::string& name);  // decoder and attention
bool is_grapheme_ctc_param(const std::string& name);
bool is_phoneme_ctc_param(const std::string& name);
bool is_classifier_param(const std::string& name);

// Every parameter shape implied by a config, in name order.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& config);
ParamSet init_params(const ModelConfig& config, std::uint64_t seed);
// Rejects a parameter set that is missing a tensor or has a wrong shape,
// naming the offending tensor.
void check_params(const ModelConfig& config, const ParamSet& params);

// Concatenates each run of `factor` frames, zero-padding the tail:
// T×F -> ceil(T/factor)×(F·factor).
Tensor stack_frames(const Tensor& features, std::size_t factor);

struct EncoderStates {
  std::vector<ad::Var> layers;  // each T'×H
  std::size_t phoneme_layer = 0;

  const ad::Var& final_layer() const { return layers.back(); }
  const ad::Var& penultimate() const { return layers[layers.size() - 2]; }
  const ad::Var& phoneme_states() const { return layers[phoneme_layer]; }
  std::size_t length() const { return layers.front().value().rows(); }
};

EncoderStates encode(ad::Graph& g, const ParamSet& params, const ModelConfig& config,
                     const Tensor& features);

// Final encoder states plus their attention keys (states·V), computed once per
// utterance.
struct AttentionMemory {
  ad::Var states;
  ad::Var keys;
};

AttentionMemory attention_memory(ad::Graph& g, const ParamSet& params, const EncoderStates& enc);

struct AttentionResult {
  ad::Var context;    // 1×H
  ad::Var alignment;  // 1×T'
};

// Location-aware content attention:
//   score_t = vᵀ tanh(W s + V h_t + U f_t + b),  f = conv(prev_alignment).
AttentionResult attend(ad::Graph& g, const ParamSet& params, ad::Var decoder_state,
                       const AttentionMemory& memory, ad::Var prev_alignment);

struct DecoderState {
  ad::Var hidden;     // 1×H
  ad::Var context;    // 1×H
  ad::Var alignment;  // 1×T'
};

DecoderState initial_decoder_state(ad::Graph& g, const ModelConfig& config,
                                   const AttentionMemory& memory);

struct DecoderStep {
  DecoderState state;
  ad::Var log_probs;  // 1×G
};

DecoderStep decoder_step(ad::Graph& g, const ParamSet& params, const AttentionMemory& memory,
                         const DecoderState& state, std::size_t prev_token);

// Teacher-forced cross-entropy averaged over the target symbols plus eos.
ad::Var decoder_nll(ad::Graph& g, const ParamSet& params, const ModelConfig& config,
                    const EncoderStates& enc, const ctc::LabelSequence& target);

// -log p(label | states) under a linear CTC head. nullopt when the label is
// too long for the encoder length.
std::optional<ad::Var> grapheme_ctc_loss(ad::Graph& g, const ParamSet& params,
                                         const EncoderStates& enc,
                                         const ctc::LabelSequence& target);
std::optional<ad::Var> phoneme_ctc_loss(ad::Graph& g, const ParamSet& params,
                                        const EncoderStates& enc,
                                        const ctc::LabelSequence& phonemes);

// Time mean of the classifier layer's states (1×H). With `reverse_lambda`
// set, a gradient-reversal node sits between the mean and the caller.
ad::Var utterance_mean(const EncoderStates& enc, std::optional<double> reverse_lambda = {});
// Affine map of the utterance mean to per-language logits (1×L).
ad::Var language_logits(ad::Graph& g, const ParamSet& params, const EncoderStates& enc,
                        std::optional<double> reverse_lambda = {});

// Grapheme CTC per-frame log-probabilities (T'×(G+1)); diagnostic use.
Tensor grapheme_ctc_log_probs(const ParamSet& params, const ModelConfig& config,
                              const Tensor& features);

struct Hypothesis {
  ctc::LabelSequence tokens;  // without sos/eos
  double log_prob = 0.0;      // total, eos included when reached
  double score = 0.0;         // log_prob / number of emitted symbols
  bool reached_eos = false;
};

// Length-normalised beam search over attention-decoder posteriors. The
// output is capped at 2·T' steps; a capped hypothesis has reached_eos=false.
Hypothesis beam_decode(const ParamSet& params, const ModelConfig& config, const Tensor& features,
                       std::size_t beam_size);

}  // namespace polyglot::model
