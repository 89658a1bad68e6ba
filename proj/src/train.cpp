#include "polyglot/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "polyglot/eval.hpp"
#include "polyglot/io.hpp"

namespace polyglot::train {

double lambda_schedule(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("training progress p=" + std::to_string(p) + " outside [0,1]");
  }
  return 2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0;
}

double interpolate_recognition_loss(const LossBreakdown& b, Mode mode) {
  if (mode == Mode::Pretrain) return (b.att_ce + b.grapheme_ctc + b.phoneme_ctc) / 3.0;
  return (b.att_ce + b.grapheme_ctc) / 2.0;
}

TrainConfig TrainConfig::normalized() const {
  TrainConfig c = *this;
  if (c.mode == Mode::Adapt) {
    c.use_phoneme = false;
    c.use_adversarial = false;
  }
  if (c.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  return c;
}

std::vector<Example> make_examples(const synth::Corpus& corpus, const Vocabulary& vocab,
                                   const std::vector<std::string>& languages,
                                   const std::string& split,
                                   const std::vector<std::string>& readings) {
  std::map<std::string, std::size_t> index;
  for (const auto& l : languages) index.emplace(l, index.size());
  const std::set<std::string> keep(readings.begin(), readings.end());
  std::vector<Example> out;
  for (const auto& u : corpus.utterances) {
    auto it = index.find(u.language);
    if (it == index.end()) continue;
    if (!split.empty() && u.split != split) continue;
    if (!keep.empty() && !keep.count(u.reading)) continue;
    out.push_back({u.id, &u.features, vocab.encode(u.transcript), u.phonemes, it->second});
  }
  return out;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

ad::Var total(ad::Graph& g, const std::vector<ad::Var>& terms) {
  if (terms.empty()) return g.constant(Tensor::scalar(0.0));
  ad::Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
  return acc;
}

ad::GradientMap keep_only(ad::GradientMap grads, bool (*pred)(const std::string&),
                          bool (*pred2)(const std::string&)) {
  for (auto it = grads.begin(); it != grads.end();) {
    if (pred(it->first) || pred2(it->first)) {
      ++it;
    } else {
      it = grads.erase(it);
    }
  }
  return grads;
}

}  // namespace

BatchLoss recognition_loss(ad::Graph& g, const ParamSet& params, const model::ModelConfig& config,
                           std::span<const Example> batch, Mode mode, bool use_phoneme) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const bool phoneme = mode == Mode::Pretrain && use_phoneme;
  const double terms = phoneme ? 3.0 : 2.0;
  BatchLoss out;
  std::vector<ad::Var> losses;
  std::size_t n_g = 0, n_p = 0;
  for (const auto& ex : batch) {
    auto enc = model::encode(g, params, config, *ex.features);
    std::vector<ad::Var> parts{model::decoder_nll(g, params, config, enc, ex.graphemes)};
    out.breakdown.att_ce += parts.back().value().item();
    if (auto c = model::grapheme_ctc_loss(g, params, enc, ex.graphemes)) {
      parts.push_back(*c);
      out.breakdown.grapheme_ctc += c->value().item();
      ++n_g;
    } else {
      ++out.infeasible;
    }
    if (phoneme) {
      if (auto c = model::phoneme_ctc_loss(g, params, enc, ex.phonemes)) {
        parts.push_back(*c);
        out.breakdown.phoneme_ctc += c->value().item();
        ++n_p;
      } else {
        ++out.infeasible;
      }
    }
    losses.push_back(total(g, parts));
  }
  const double b = static_cast<double>(batch.size());
  out.recognition = ad::scale(total(g, losses), 1.0 / (terms * b));
  out.breakdown.att_ce /= b;
  if (n_g) out.breakdown.grapheme_ctc /= static_cast<double>(n_g);
  if (n_p) out.breakdown.phoneme_ctc /= static_cast<double>(n_p);
  return out;
}

ad::Var adversarial_loss(ad::Graph& g, const ParamSet& params, const model::ModelConfig& config,
                         std::span<const Example> batch, std::optional<double> lambda) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  std::vector<ad::Var> picks;
  for (const auto& ex : batch) {
    if (ex.language >= config.num_pretrain_languages) {
      throw std::invalid_argument("utterance " + ex.id + " has language index " +
                                  std::to_string(ex.language) + " outside the classifier");
    }
    auto enc = model::encode(g, params, config, *ex.features);
    auto logp = ad::log_softmax_rows(model::language_logits(g, params, enc, lambda));
    picks.push_back(ad::pick(logp, {ex.language}));
  }
  return ad::scale(ad::sum(total(g, picks)), -1.0 / static_cast<double>(batch.size()));
}

LossBreakdown recognition_step(ParamSet& params, const model::ModelConfig& config,
                               std::span<const Example> batch, bool use_phoneme, Adam& opt) {
  ad::Graph g;
  auto loss = recognition_loss(g, params, config, batch, Mode::Pretrain, use_phoneme);
  opt.step(params, g.backward(loss.recognition));
  return loss.breakdown;
}

double adversarial_step(ParamSet& params, const model::ModelConfig& config,
                        std::span<const Example> batch, double lambda, Adam& opt) {
  ad::Graph g;
  auto loss = adversarial_loss(g, params, config, batch, lambda);
  auto grads = keep_only(g.backward(loss), model::is_encoder_param, model::is_classifier_param);
  // Both steps share one Adam, so a zero reversed gradient (lambda 0) would
  // still move the encoder through its first moment. Drop it instead.
  for (auto it = grads.begin(); it != grads.end();) {
    const auto& d = it->second.data();
    if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
      it = grads.erase(it);
    } else {
      ++it;
    }
  }
  opt.step(params, std::move(grads));
  return loss.value().item();
}

LossBreakdown pretrain_step(ParamSet& params, const model::ModelConfig& config,
                            std::span<const Example> batch, double p, const TrainConfig& tc,
                            Adam& opt) {
  LossBreakdown b = recognition_step(params, config, batch, tc.use_phoneme, opt);
  b.p = p;
  b.lambda = lambda_schedule(p);
  if (tc.use_adversarial) {
    b.adversarial_ce = adversarial_step(params, config, batch, b.lambda, opt);
  }
  return b;
}

LossBreakdown adapt_step(ParamSet& params, const model::ModelConfig& config,
                         std::span<const Example> batch, Adam& opt) {
  ad::Graph g;
  auto loss = recognition_loss(g, params, config, batch, Mode::Adapt, false);
  auto grads = g.backward(loss.recognition);
  for (const auto& [name, grad] : grads) {
    if (model::is_phoneme_ctc_param(name) || model::is_classifier_param(name)) {
      throw std::logic_error("adaptation loss reached frozen tensor " + name);
    }
  }
  opt.step(params, std::move(grads));
  LossBreakdown b = loss.breakdown;
  return b;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& examples,
                                                   std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t pool = 8 * batch_size;
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += pool) {
    const std::size_t end = std::min(order.size(), begin + pool);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(begin),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return examples[a].features->rows() < examples[b].features->rows();
                     });
    for (std::size_t i = begin; i < end; i += batch_size) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(end, i + batch_size)));
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

std::string TrainingLog::csv() const {
  std::ostringstream out;
  out << std::setprecision(17)
      << "epoch,p,lambda,train_att,train_ctc_g,train_ctc_p,train_adv,dev_att,dev_ctc_g,dev_cer,"
         "skipped\n";
  for (const auto& e : epochs) {
    out << e.epoch << "," << e.p << "," << e.lambda << "," << e.train.att_ce << ","
        << e.train.grapheme_ctc << "," << e.train.phoneme_ctc << "," << e.train.adversarial_ce << ","
        << e.dev_att << "," << e.dev_ctc_g << "," << e.dev_cer << "," << e.skipped << "\n";
  }
  return out.str();
}

DevScore score_dev(const ParamSet& params, const model::ModelConfig& config,
                   const std::vector<Example>& dev, const Vocabulary& vocab) {
  DevScore s;
  if (dev.empty()) return s;
  eval::EditCounts chars;
  std::size_t n_g = 0;
  for (const auto& ex : dev) {
    ad::Graph g(false);
    auto enc = model::encode(g, params, config, *ex.features);
    s.att += model::decoder_nll(g, params, config, enc, ex.graphemes).value().item();
    if (auto c = model::grapheme_ctc_loss(g, params, enc, ex.graphemes)) {
      s.ctc_g += c->value().item();
      ++n_g;
    }
    const auto hyp = model::beam_decode(params, config, *ex.features, 1);
    chars += eval::edit_distance(eval::characters_of(vocab.decode(ex.graphemes)),
                                 eval::characters_of(vocab.decode(hyp.tokens)));
  }
  s.att /= static_cast<double>(dev.size());
  if (n_g) s.ctc_g /= static_cast<double>(n_g);
  s.cer = chars.rate();
  return s;
}

TrainResult fit(const model::ModelConfig& config, ParamSet init, const std::vector<Example>& train,
                const std::vector<Example>& dev, const Vocabulary& vocab, const TrainConfig& tc_in,
                const TrainHooks& hooks) {
  const TrainConfig tc = tc_in.normalized();
  model::check_params(config, init);
  TrainResult result;
  result.params = init;
  if (tc.epochs == 0) return result;
  if (train.empty()) throw std::invalid_argument("no training utterances");

  ParamSet params = std::move(init);
  Adam opt(tc.optimizer);
  const std::size_t per_epoch = (train.size() + tc.batch_size - 1) / tc.batch_size;
  const double total_updates = static_cast<double>(per_epoch * tc.epochs);
  std::size_t updates = 0;
  double best_cer = 0.0, best_loss = 0.0;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const auto batches = make_batches(train, tc.batch_size, mix(tc.seed, epoch));
    double weight = 0.0;
    for (const auto& idx : batches) {
      std::vector<Example> batch;
      batch.reserve(idx.size());
      for (std::size_t i : idx) batch.push_back(train[i]);
      const double p = static_cast<double>(updates) / total_updates;
      LossBreakdown b = tc.mode == Mode::Pretrain ? pretrain_step(params, config, batch, p, tc, opt)
                                                  : adapt_step(params, config, batch, opt);
      ++updates;
      const double w = static_cast<double>(batch.size());
      rec.train.att_ce += w * b.att_ce;
      rec.train.grapheme_ctc += w * b.grapheme_ctc;
      rec.train.phoneme_ctc += w * b.phoneme_ctc;
      rec.train.adversarial_ce += w * b.adversarial_ce;
      weight += w;
      for (const auto& ex : batch) {
        const std::size_t frames = config.encoder_length(ex.features->rows());
        if (ctc::min_frames(ex.graphemes) > frames ||
            (tc.use_phoneme && ctc::min_frames(ex.phonemes) > frames))
          ++rec.skipped;
      }
    }
    rec.train.att_ce /= weight;
    rec.train.grapheme_ctc /= weight;
    rec.train.phoneme_ctc /= weight;
    rec.train.adversarial_ce /= weight;
    rec.p = static_cast<double>(updates) / total_updates;
    rec.lambda = tc.use_adversarial ? lambda_schedule(std::min(rec.p, 1.0)) : 0.0;
    rec.train.p = rec.p;
    rec.train.lambda = rec.lambda;

    const DevScore d = score_dev(params, config, dev, vocab);
    rec.dev_att = d.att;
    rec.dev_ctc_g = d.ctc_g;
    rec.dev_cer = d.cer;
    const double dev_loss = (d.att + d.ctc_g) / 2.0;
    if (result.best_epoch == 0 || d.cer < best_cer || (d.cer == best_cer && dev_loss < best_loss)) {
      result.best_epoch = epoch;
      result.params = params;
      best_cer = d.cer;
      best_loss = dev_loss;
    }
    result.log.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.on_checkpoint && tc.checkpoint_every && epoch % tc.checkpoint_every == 0) {
      hooks.on_checkpoint(epoch, params);
    }
  }
  return result;
}

model::ModelConfig desk_config(const synth::Corpus& corpus, std::size_t languages) {
  return model::ModelConfig::desk(corpus.feature_dim,
                                  model::kFirstGrapheme + corpus.grapheme_inventory().size(),
                                  corpus.phones.size(), std::max<std::size_t>(languages, 1));
}

namespace {

std::string flag(bool v) { return v ? "1" : "0"; }

}  // namespace

PretrainResult pretrain(const synth::Corpus& corpus, const std::vector<std::string>& languages,
                        const model::ModelConfig& config, const TrainConfig& tc_in,
                        const TrainHooks& hooks) {
  if (languages.empty()) throw std::invalid_argument("pretrain: no languages");
  TrainConfig tc = tc_in;
  tc.mode = Mode::Pretrain;
  for (const auto& l : languages) corpus.language(l);
  if (config.num_pretrain_languages != languages.size()) {
    throw std::invalid_argument("model classifier has " + std::to_string(config.num_pretrain_languages) +
                                " outputs for " + std::to_string(languages.size()) + " languages");
  }
  const Vocabulary vocab(corpus.grapheme_inventory());
  const auto train = make_examples(corpus, vocab, languages, "train");
  const auto dev = make_examples(corpus, vocab, languages, "dev");
  if (train.empty()) throw std::invalid_argument("pretrain: corpus has no training utterances");
  auto fitted = fit(config, model::init_params(config, tc.seed), train, dev, vocab, tc, hooks);

  PretrainResult out;
  out.checkpoint.config = config;
  out.checkpoint.graphemes = vocab.tokens();
  out.checkpoint.languages = languages;
  out.checkpoint.params = std::move(fitted.params);
  auto& meta = out.checkpoint.metadata;
  meta["mode"] = "pretrain";
  meta["scenario"] = corpus.scenario;
  meta["corpus_seed"] = std::to_string(corpus.seed);
  meta["seed"] = std::to_string(tc.seed);
  meta["epochs"] = std::to_string(tc.epochs);
  meta["best_epoch"] = std::to_string(fitted.best_epoch);
  meta["use_phoneme"] = flag(tc.use_phoneme);
  meta["use_adversarial"] = flag(tc.use_adversarial);
  out.log = std::move(fitted.log);
  return out;
}

Checkpoint initial_checkpoint(const synth::Corpus& corpus, const model::ModelConfig& config,
                              std::uint64_t seed) {
  Checkpoint c;
  c.config = config;
  c.graphemes = Vocabulary(corpus.grapheme_inventory()).tokens();
  c.params = model::init_params(config, seed);
  c.metadata["mode"] = "init";
  c.metadata["seed"] = std::to_string(seed);
  return c;
}

PretrainResult adapt(const Checkpoint& seed, const synth::Corpus& corpus, const AdaptRequest& req,
                     const TrainConfig& tc_in, const TrainHooks& hooks) {
  TrainConfig tc = tc_in;
  tc.mode = Mode::Adapt;
  const Vocabulary vocab(corpus.grapheme_inventory());
  require_compatible(seed, seed.config, vocab.tokens());
  const auto& lang = corpus.language(req.language);
  if (std::find(seed.languages.begin(), seed.languages.end(), req.language) != seed.languages.end()) {
    throw std::invalid_argument("target language " + req.language + " was a pretraining language");
  }
  std::vector<std::string> readings = req.readings;
  if (readings.empty())
    for (const auto& r : lang.readings) readings.push_back(r.id);
  for (const auto& r : readings) {
    if (std::none_of(lang.readings.begin(), lang.readings.end(), [&](const auto& x) { return x.id == r; })) {
      throw std::invalid_argument("reading " + r + " does not belong to " + req.language);
    }
  }
  auto train = make_examples(corpus, vocab, {req.language}, "train", readings);
  if (req.max_train_utterances && train.size() > req.max_train_utterances) {
    train.resize(req.max_train_utterances);
  }
  const auto dev = make_examples(corpus, vocab, {req.language}, "dev", readings);
  auto fitted = fit(seed.config, seed.params, train, dev, vocab, tc, hooks);

  PretrainResult out;
  out.checkpoint = seed;
  out.checkpoint.params = std::move(fitted.params);
  auto& meta = out.checkpoint.metadata;
  meta["mode"] = "adapt";
  meta["target_language"] = req.language;
  meta["adapted_readings"] = io::join(readings, " ");
  meta["adapt_seed"] = std::to_string(tc.seed);
  meta["adapt_epochs"] = std::to_string(tc.epochs);
  meta["adapt_best_epoch"] = std::to_string(fitted.best_epoch);
  meta["adapt_train_utterances"] = std::to_string(train.size());
  out.log = std::move(fitted.log);
  return out;
}

}  // namespace polyglot::train
