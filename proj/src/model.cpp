#include "polyglot/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <tuple>

namespace polyglot::model {

ModelConfig ModelConfig::desk(std::size_t feature_dim, std::size_t grapheme_vocab,
                              std::size_t phoneme_vocab, std::size_t languages) {
  ModelConfig c;
  c.feature_dim = feature_dim;
  c.encoder_layers = 2;
  c.hidden_size = 32;
  c.subsample_factor = 4;
  c.decoder_embed_size = 16;
  c.attention_dim = 32;
  c.attention_conv_width = 7;
  c.attention_conv_channels = 4;
  c.grapheme_vocab_size = grapheme_vocab;
  c.phoneme_vocab_size = phoneme_vocab;
  c.num_pretrain_languages = languages;
  c.phoneme_layer = c.encoder_layers - 2;
  return c;
}

ModelConfig ModelConfig::full_scale(std::size_t feature_dim, std::size_t grapheme_vocab,
                                     std::size_t phoneme_vocab, std::size_t languages) {
  ModelConfig c = desk(feature_dim, grapheme_vocab, phoneme_vocab, languages);
  c.encoder_layers = 4;
  c.hidden_size = 768;
  c.attention_dim = 768;
  c.attention_conv_width = 10;
  c.attention_conv_channels = 10;
  c.decoder_embed_size = 768;
  c.phoneme_layer = c.encoder_layers - 2;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw std::invalid_argument(std::string("model config: ") + what + " must be >= 1");
  };
  positive(feature_dim, "feature_dim");
  positive(hidden_size, "hidden_size");
  positive(subsample_factor, "subsample_factor");
  positive(decoder_embed_size, "decoder_embed_size");
  positive(attention_dim, "attention_dim");
  positive(attention_conv_width, "attention_conv_width");
  positive(attention_conv_channels, "attention_conv_channels");
  positive(phoneme_vocab_size, "phoneme_vocab_size");
  positive(num_pretrain_languages, "num_pretrain_languages");
  if (encoder_layers < 2) {
    throw std::invalid_argument("model config: encoder_layers must be >= 2");
  }
  if (grapheme_vocab_size <= kFirstGrapheme) {
    throw std::invalid_argument("model config: grapheme vocabulary has no real graphemes");
  }
  if (phoneme_layer + 1 >= encoder_layers) {
    throw std::invalid_argument("model config: phoneme_layer must be below the final layer");
  }
}

bool is_encoder_param(const std::string& n) { return n.rfind("enc.", 0) == 0; }
bool is_decoder_param(const std::string& n) {
  return n.rfind("dec.", 0) == 0 || n.rfind("att.", 0) == 0;
}
bool is_grapheme_ctc_param(const std::string& n) { return n.rfind("ctc_g.", 0) == 0; }
bool is_phoneme_ctc_param(const std::string& n) { return n.rfind("ctc_p.", 0) == 0; }
bool is_classifier_param(const std::string& n) { return n.rfind("adv.", 0) == 0; }

std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& c) {
  c.validate();
  const std::size_t H = c.hidden_size, A = c.attention_dim, E = c.decoder_embed_size;
  const std::size_t G = c.grapheme_vocab_size;
  std::vector<std::pair<std::string, Shape>> out;
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const std::size_t in = l == 0 ? c.feature_dim * c.subsample_factor : H;
    const std::string base = "enc." + std::to_string(l) + ".";
    for (const char* dir : {"fw", "bw"}) {
      out.push_back({base + dir + ".W", {in, 2 * H}});
      out.push_back({base + dir + ".U", {H, 2 * H}});
      out.push_back({base + dir + ".b", {1, 2 * H}});
    }
    out.push_back({base + "proj.W", {2 * H, H}});
    out.push_back({base + "proj.b", {1, H}});
  }
  out.push_back({"att.W", {H, A}});
  out.push_back({"att.V", {H, A}});
  out.push_back({"att.U", {c.attention_conv_channels, A}});
  out.push_back({"att.conv", {c.attention_conv_channels, c.attention_conv_width}});
  out.push_back({"att.b", {1, A}});
  out.push_back({"att.v", {A, 1}});
  out.push_back({"dec.embed", {G, E}});
  out.push_back({"dec.W", {E + H, 2 * H}});
  out.push_back({"dec.U", {H, 2 * H}});
  out.push_back({"dec.b", {1, 2 * H}});
  out.push_back({"dec.out.W", {2 * H, G}});
  out.push_back({"dec.out.b", {1, G}});
  out.push_back({"ctc_g.W", {H, G + 1}});
  out.push_back({"ctc_g.b", {1, G + 1}});
  out.push_back({"ctc_p.W", {H, c.phoneme_vocab_size + 1}});
  out.push_back({"ctc_p.b", {1, c.phoneme_vocab_size + 1}});
  out.push_back({"adv.W", {H, c.num_pretrain_languages}});
  out.push_back({"adv.b", {1, c.num_pretrain_languages}});
  std::sort(out.begin(), out.end());
  return out;
}

ParamSet init_params(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet params;
  for (const auto& [name, shape] : parameter_shapes(config)) {
    Tensor t(shape, 0.0);
    const bool is_bias = name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
    // The classifier starts at zero so its first posterior is uniform.
    if (!is_bias && !is_classifier_param(name)) {
      const double bound = name == "dec.embed" ? 0.5 : 1.0 / std::sqrt(static_cast<double>(shape[0]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t.data()) v = dist(rng);
    }
    params.emplace(name, std::move(t));
  }
  return params;
}

void check_params(const ModelConfig& config, const ParamSet& params) {
  for (const auto& [name, shape] : parameter_shapes(config)) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("missing parameter tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw ShapeError("parameter tensor '" + name + "' has shape " +
                       shape_string(it->second.shape()) + ", expected " + shape_string(shape));
    }
  }
}

Tensor stack_frames(const Tensor& features, std::size_t factor) {
  const std::size_t frames = features.rows(), dim = features.cols();
  if (frames == 0 || features.size() == 0) throw std::invalid_argument("encode: empty feature sequence");
  const std::size_t out_rows = (frames + factor - 1) / factor;
  Tensor out(Shape{out_rows, dim * factor}, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t d = 0; d < dim; ++d) out(t / factor, (t % factor) * dim + d) = features(t, d);
  return out;
}

namespace {

ad::Var param(ad::Graph& g, const ParamSet& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::invalid_argument("missing parameter tensor '" + name + "'");
  return g.parameter(name, it->second);
}

// Single-gate recurrent cell:
//   [z_pre, c_pre] = x_proj + h U;  z = σ(z_pre);  c = tanh(c_pre)
//   h' = h + z ⊙ (c − h)
ad::Var gated_step(ad::Var x_proj, ad::Var h, ad::Var U, std::size_t hidden) {
  auto a = ad::add(x_proj, ad::matmul(h, U));
  auto z = ad::sigmoid(ad::slice_cols(a, 0, hidden));
  auto c = ad::tanh(ad::slice_cols(a, hidden, 2 * hidden));
  return ad::add(h, ad::mul(z, ad::sub(c, h)));
}

ad::Var run_direction(ad::Graph& g, const ParamSet& params, const std::string& prefix,
                      ad::Var input, std::size_t hidden, bool reverse) {
  auto proj = ad::add(ad::matmul(input, param(g, params, prefix + ".W")),
                      param(g, params, prefix + ".b"));
  auto U = param(g, params, prefix + ".U");
  const std::size_t steps = input.value().rows();
  std::vector<ad::Var> outputs(steps);
  ad::Var h = g.constant(Tensor::zeros(1, hidden));
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    h = gated_step(ad::slice_row(proj, t), h, U, hidden);
    outputs[t] = h;
  }
  return ad::concat_rows(outputs);
}

std::optional<ad::Var> ctc_head_loss(ad::Graph& g, const ParamSet& params, const std::string& prefix,
                                     ad::Var states, const ctc::LabelSequence& label) {
  auto logits = ad::add(ad::matmul(states, param(g, params, prefix + ".W")),
                        param(g, params, prefix + ".b"));
  auto logp = ad::log_softmax_rows(logits);
  if (ctc::min_frames(label) > logp.value().rows()) return std::nullopt;
  auto r = ctc::log_likelihood(logp.value(), label, g.requires_grad());
  Tensor grad = g.requires_grad() ? std::move(r.grad) : Tensor(logp.value().shape(), 0.0);
  return ad::precomputed(logp, -r.log_likelihood, std::move(grad));
}

}  // namespace

EncoderStates encode(ad::Graph& g, const ParamSet& params, const ModelConfig& config,
                     const Tensor& features) {
  if (features.rows() == 0 || features.size() == 0) {
    throw std::invalid_argument("encode: feature sequence has no frames");
  }
  if (features.cols() != config.feature_dim) {
    throw ShapeError("encode: features have " + std::to_string(features.cols()) +
                     " dims, model expects " + std::to_string(config.feature_dim));
  }
  EncoderStates enc;
  enc.phoneme_layer = config.phoneme_layer;
  ad::Var x = g.constant(stack_frames(features, config.subsample_factor));
  const std::size_t H = config.hidden_size;
  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    const std::string base = "enc." + std::to_string(l) + ".";
    std::vector<ad::Var> both{run_direction(g, params, base + "fw", x, H, false),
                              run_direction(g, params, base + "bw", x, H, true)};
    auto joined = ad::concat_cols(both);
    x = ad::tanh(ad::add(ad::matmul(joined, param(g, params, base + "proj.W")),
                         param(g, params, base + "proj.b")));
    enc.layers.push_back(x);
  }
  return enc;
}

AttentionMemory attention_memory(ad::Graph& g, const ParamSet& params, const EncoderStates& enc) {
  return {enc.final_layer(), ad::matmul(enc.final_layer(), param(g, params, "att.V"))};
}

AttentionResult attend(ad::Graph& g, const ParamSet& params, ad::Var decoder_state,
                       const AttentionMemory& memory, ad::Var prev_alignment) {
  auto loc = ad::matmul(ad::conv1d(prev_alignment, param(g, params, "att.conv")),
                        param(g, params, "att.U"));                            // T'×A
  auto query = ad::add(ad::matmul(decoder_state, param(g, params, "att.W")),
                       param(g, params, "att.b"));                             // 1×A
  auto energy = ad::tanh(ad::add(ad::add(memory.keys, loc), query));          // T'×A
  auto scores = ad::transpose(ad::matmul(energy, param(g, params, "att.v")));  // 1×T'
  auto alignment = ad::softmax_rows(scores);
  double total = 0.0;
  for (double v : alignment.value().data()) total += v;
  if (std::abs(total - 1.0) > 1e-9) throw std::logic_error("attention weights do not sum to one");
  return {ad::matmul(alignment, memory.states), alignment};
}

DecoderState initial_decoder_state(ad::Graph& g, const ModelConfig& config,
                                   const AttentionMemory& memory) {
  const std::size_t steps = memory.states.value().rows();
  return {g.constant(Tensor::zeros(1, config.hidden_size)),
          g.constant(Tensor::zeros(1, config.hidden_size)),
          g.constant(Tensor(Shape{1, steps}, 1.0 / static_cast<double>(steps)))};
}

DecoderStep decoder_step(ad::Graph& g, const ParamSet& params, const AttentionMemory& memory,
                         const DecoderState& state, std::size_t prev_token) {
  const std::size_t H = state.hidden.value().cols();
  std::vector<ad::Var> inputs{ad::embedding(param(g, params, "dec.embed"), {prev_token}),
                              state.context};
  auto x_proj = ad::add(ad::matmul(ad::concat_cols(inputs), param(g, params, "dec.W")),
                        param(g, params, "dec.b"));
  auto hidden = gated_step(x_proj, state.hidden, param(g, params, "dec.U"), H);
  auto att = attend(g, params, hidden, memory, state.alignment);
  std::vector<ad::Var> out_in{hidden, att.context};
  auto logits = ad::add(ad::matmul(ad::concat_cols(out_in), param(g, params, "dec.out.W")),
                        param(g, params, "dec.out.b"));
  return {{hidden, att.context, att.alignment}, ad::log_softmax_rows(logits)};
}

ad::Var decoder_nll(ad::Graph& g, const ParamSet& params, const ModelConfig& config,
                    const EncoderStates& enc, const ctc::LabelSequence& target) {
  auto memory = attention_memory(g, params, enc);
  DecoderState state = initial_decoder_state(g, config, memory);
  std::vector<ad::Var> rows;
  std::vector<std::size_t> gold;
  std::size_t prev = kSos;
  for (std::size_t i = 0; i <= target.size(); ++i) {
    const std::size_t next = i < target.size() ? target[i] : kEos;
    if (next >= config.grapheme_vocab_size) {
      throw std::invalid_argument("decoder target id " + std::to_string(next) +
                                  " outside vocabulary");
    }
    auto step = decoder_step(g, params, memory, state, prev);
    rows.push_back(step.log_probs);
    gold.push_back(next);
    state = step.state;
    prev = next;
  }
  auto picked = ad::pick(ad::concat_rows(rows), std::move(gold));
  return ad::scale(ad::sum(picked), -1.0 / static_cast<double>(target.size() + 1));
}

std::optional<ad::Var> grapheme_ctc_loss(ad::Graph& g, const ParamSet& params,
                                         const EncoderStates& enc,
                                         const ctc::LabelSequence& target) {
  return ctc_head_loss(g, params, "ctc_g", enc.final_layer(), target);
}

std::optional<ad::Var> phoneme_ctc_loss(ad::Graph& g, const ParamSet& params,
                                        const EncoderStates& enc,
                                        const ctc::LabelSequence& phonemes) {
  return ctc_head_loss(g, params, "ctc_p", enc.phoneme_states(), phonemes);
}

ad::Var utterance_mean(const EncoderStates& enc, std::optional<double> reverse_lambda) {
  auto mean = ad::mean_rows(enc.phoneme_states());
  return reverse_lambda ? ad::grad_reverse(mean, *reverse_lambda) : mean;
}

ad::Var language_logits(ad::Graph& g, const ParamSet& params, const EncoderStates& enc,
                        std::optional<double> reverse_lambda) {
  if (enc.layers.size() < 2) throw std::invalid_argument("language_logits needs >= 2 encoder layers");
  return ad::add(ad::matmul(utterance_mean(enc, reverse_lambda), param(g, params, "adv.W")),
                 param(g, params, "adv.b"));
}

Tensor grapheme_ctc_log_probs(const ParamSet& params, const ModelConfig& config,
                              const Tensor& features) {
  ad::Graph g(false);
  auto enc = encode(g, params, config, features);
  auto logits = ad::add(ad::matmul(enc.final_layer(), param(g, params, "ctc_g.W")),
                        param(g, params, "ctc_g.b"));
  return ad::log_softmax_rows(logits).value();
}

namespace {

struct Beam {
  ctc::LabelSequence tokens;
  double log_prob = 0.0;
  DecoderState state;
};

double normalised(double log_prob, std::size_t emitted) {
  return log_prob / static_cast<double>(std::max<std::size_t>(emitted, 1));
}

Hypothesis search(const ParamSet& params, const ModelConfig& config, const Tensor& features,
                  std::size_t beam_size) {
  ad::Graph g(false);
  auto enc = encode(g, params, config, features);
  auto memory = attention_memory(g, params, enc);
  const std::size_t max_steps = 2 * enc.length();

  std::vector<Beam> active{{{}, 0.0, initial_decoder_state(g, config, memory)}};
  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; step < max_steps && !active.empty(); ++step) {
    struct Candidate {
      double log_prob;
      std::size_t beam;
      std::size_t token;
    };
    std::vector<Candidate> candidates;
    std::vector<DecoderState> next_states;
    for (std::size_t b = 0; b < active.size(); ++b) {
      const std::size_t prev = active[b].tokens.empty() ? kSos : active[b].tokens.back();
      auto out = decoder_step(g, params, memory, active[b].state, prev);
      next_states.push_back(out.state);
      const Tensor& lp = out.log_probs.value();
      for (std::size_t k = 0; k < lp.cols(); ++k) {
        if (k == kSos || k == kUnk) continue;
        candidates.push_back({active[b].log_prob + lp[k], b, k});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
      return std::tie(y.log_prob, x.beam, x.token) < std::tie(x.log_prob, y.beam, y.token);
    });
    std::vector<Beam> next;
    for (const auto& c : candidates) {
      if (next.size() >= beam_size) break;
      if (c.token == kEos) {
        Hypothesis h;
        h.tokens = active[c.beam].tokens;
        h.log_prob = c.log_prob;
        h.score = normalised(c.log_prob, h.tokens.size() + 1);
        h.reached_eos = true;
        finished.push_back(std::move(h));
        continue;
      }
      Beam nb{active[c.beam].tokens, c.log_prob, next_states[c.beam]};
      nb.tokens.push_back(c.token);
      next.push_back(std::move(nb));
    }
    active = std::move(next);
    if (finished.size() >= beam_size) break;
  }
  if (finished.empty()) {
    for (const auto& b : active) {
      Hypothesis h;
      h.tokens = b.tokens;
      h.log_prob = b.log_prob;
      h.score = normalised(b.log_prob, b.tokens.size());
      finished.push_back(std::move(h));
    }
  }
  return *std::max_element(finished.begin(), finished.end(),
                           [](const Hypothesis& a, const Hypothesis& b) { return a.score < b.score; });
}

}  // namespace

Hypothesis beam_decode(const ParamSet& params, const ModelConfig& config, const Tensor& features,
                       std::size_t beam_size) {
  if (beam_size == 0) throw std::invalid_argument("beam_decode: beam_size must be >= 1");
  Hypothesis best = search(params, config, features, beam_size);
  if (beam_size > 1) {
    // Pruning can drop the greedy path; keep it as a floor.
    Hypothesis greedy = search(params, config, features, 1);
    if (greedy.score > best.score) best = std::move(greedy);
  }
  return best;
}

}  // namespace polyglot::model
