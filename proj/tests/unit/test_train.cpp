#include <catch_amalgamated.hpp>

#include <cmath>

#include "polyglot/checkpoint.hpp"
#include "polyglot/eval.hpp"
#include "polyglot/train.hpp"

using namespace polyglot;
using namespace polyglot::train;
using Catch::Approx;

namespace {

synth::ScenarioConfig tiny_scenario(std::size_t languages = 2) {
  synth::ScenarioConfig s;
  s.name = "tiny";
  s.num_phonemes = 8;
  s.feature_dim = 4;
  s.min_duration = 4;
  s.max_duration = 6;
  s.max_phonemes = 5;
  s.utterances_per_reading = 10;
  synth::GroupSpec g;
  g.name = "T";
  g.size = languages;
  g.inventory_size = 5;
  g.readings = 1;
  s.groups = {g};
  return s;
}

model::ModelConfig tiny_model(const synth::Corpus& corpus, std::size_t languages) {
  auto c = desk_config(corpus, languages);
  c.hidden_size = 8;
  c.attention_dim = 8;
  c.decoder_embed_size = 4;
  return c;
}

struct Fixture {
  synth::Corpus corpus = synth::generate_corpus(tiny_scenario(), 5);
  Vocabulary vocab{corpus.grapheme_inventory()};
  std::vector<std::string> langs = corpus.language_ids();
  model::ModelConfig config = tiny_model(corpus, langs.size());
  std::vector<Example> train = make_examples(corpus, vocab, langs, "train");
  std::vector<Example> dev = make_examples(corpus, vocab, langs, "dev");
};

bool same_tensors(const ParamSet& a, const ParamSet& b, bool (*pick)(const std::string&)) {
  for (const auto& [name, t] : a)
    if (pick(name) && !(t == b.at(name))) return false;
  return true;
}

bool decoder_or_ctc(const std::string& n) {
  return model::is_decoder_param(n) || model::is_grapheme_ctc_param(n) || model::is_phoneme_ctc_param(n);
}

}  // namespace

TEST_CASE("lambda schedule", "[train]") {
  CHECK(lambda_schedule(0.0) == 0.0);
  CHECK(lambda_schedule(0.5) == Approx(0.9866143).margin(1e-7));
  CHECK(lambda_schedule(1.0) == Approx(0.9999092).margin(1e-7));
  double prev = -1;
  for (int i = 0; i <= 100; ++i) {
    const double l = lambda_schedule(i / 100.0);
    CHECK(l > prev);
    CHECK(l < 1.0);
    prev = l;
  }
  CHECK_THROWS(lambda_schedule(-0.01));
  CHECK_THROWS(lambda_schedule(1.01));
}

TEST_CASE("loss interpolation", "[train]") {
  LossBreakdown b;
  b.att_ce = 0.9;
  b.grapheme_ctc = 0.6;
  b.phoneme_ctc = 0.3;
  CHECK(interpolate_recognition_loss(b, Mode::Pretrain) == Approx(0.6));
  CHECK(interpolate_recognition_loss(b, Mode::Adapt) == Approx(0.75));
  CHECK(interpolate_recognition_loss(LossBreakdown{}, Mode::Pretrain) == 0.0);

  TrainConfig tc;
  tc.mode = Mode::Adapt;
  auto n = tc.normalized();
  CHECK_FALSE(n.use_phoneme);
  CHECK_FALSE(n.use_adversarial);
}

TEST_CASE("examples and batches", "[train]") {
  Fixture f;
  CHECK(f.train.size() == 2 * 8);
  CHECK(f.dev.size() == 2);
  for (const auto& e : f.train) {
    CHECK(e.language < 2);
    CHECK_FALSE(e.graphemes.empty());
  }
  auto batches = make_batches(f.train, 3, 1);
  std::vector<std::size_t> seen;
  for (const auto& b : batches) {
    CHECK(b.size() <= 3);
    seen.insert(seen.end(), b.begin(), b.end());
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == i);
  CHECK(make_batches(f.train, 3, 1) == batches);
  CHECK(make_batches(f.train, 3, 2) != batches);
}

TEST_CASE("two-phase update isolation", "[train]") {
  Fixture f;
  auto params = model::init_params(f.config, 3);
  // Nonzero classifier so the reversed gradient reaches the encoder.
  for (auto& [name, t] : params)
    if (model::is_classifier_param(name))
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.1 * std::sin(static_cast<double>(i) + 1);
  std::span<const Example> batch(f.train.data(), 4);
  TrainConfig tc;

  SECTION("step 2 never touches decoder or CTC heads") {
    Adam adv(tc.optimizer);
    const auto before = params;
    adversarial_step(params, f.config, batch, 0.7, adv);
    CHECK(same_tensors(before, params, decoder_or_ctc));
    CHECK_FALSE(same_tensors(before, params, model::is_encoder_param));
    CHECK_FALSE(same_tensors(before, params, model::is_classifier_param));
  }
  SECTION("lambda 0 leaves the encoder bitwise unchanged") {
    Adam adv(tc.optimizer);
    const auto before = params;
    adversarial_step(params, f.config, batch, 0.0, adv);
    CHECK(same_tensors(before, params, model::is_encoder_param));
    CHECK_FALSE(same_tensors(before, params, model::is_classifier_param));
  }
  SECTION("step 1 never touches the classifier") {
    Adam rec(tc.optimizer);
    const auto before = params;
    recognition_step(params, f.config, batch, true, rec);
    CHECK(same_tensors(before, params, model::is_classifier_param));
    CHECK_FALSE(same_tensors(before, params, model::is_decoder_param));
  }
  SECTION("single-language batch starts at log L with a zero classifier") {
    auto zero = model::init_params(f.config, 3);
    std::vector<Example> one;
    for (const auto& e : f.train)
      if (e.language == 0) one.push_back(e);
    ad::Graph g;
    auto loss = adversarial_loss(g, zero, f.config, one, 0.5);
    CHECK(loss.value().item() == Approx(std::log(2.0)).margin(1e-12));
  }
}

TEST_CASE("adaptation gradients skip frozen heads", "[train]") {
  Fixture f;
  auto params = model::init_params(f.config, 3);
  for (std::size_t start = 0; start + 4 <= f.train.size(); start += 4) {
    ad::Graph g;
    auto loss = recognition_loss(g, params, f.config, std::span<const Example>(f.train.data() + start, 4),
                                 Mode::Adapt, false);
    auto grads = g.backward(loss.recognition);
    for (const auto& [name, grad] : grads) {
      if (model::is_phoneme_ctc_param(name) || model::is_classifier_param(name)) {
        for (double x : grad.data()) CHECK(x == 0.0);
      }
    }
  }
  Adam opt(AdamConfig{});
  const auto before = params;
  adapt_step(params, f.config, std::span<const Example>(f.train.data(), 4), opt);
  CHECK(same_tensors(before, params, model::is_phoneme_ctc_param));
  CHECK(same_tensors(before, params, model::is_classifier_param));
}

TEST_CASE("fit", "[train]") {
  Fixture f;
  auto init = model::init_params(f.config, 3);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.optimizer.learning_rate = 1e-2;

  SECTION("zero epochs returns the initial parameters") {
    tc.epochs = 0;
    auto r = fit(f.config, init, f.train, f.dev, f.vocab, tc);
    CHECK(r.params == init);
    CHECK(r.best_epoch == 0);
    CHECK(r.log.epochs.empty());
  }
  SECTION("two epochs twice give identical logs and parameters") {
    tc.epochs = 2;
    auto a = fit(f.config, init, f.train, f.dev, f.vocab, tc);
    auto b = fit(f.config, init, f.train, f.dev, f.vocab, tc);
    CHECK(a.log.csv() == b.log.csv());
    CHECK(a.params == b.params);
    REQUIRE(a.log.epochs.size() == 2);
    CHECK(a.log.epochs[1].p == Approx(1.0));
    CHECK(a.log.epochs[1].lambda == Approx(lambda_schedule(1.0)));
    CHECK(a.log.csv().rfind("epoch,p,lambda,", 0) == 0);
  }
  SECTION("training loss decreases on a toy language") {
    tc.epochs = 6;
    auto r = fit(f.config, init, f.train, f.dev, f.vocab, tc);
    const auto& first = r.log.epochs.front().train;
    const auto& last = r.log.epochs.back().train;
    CHECK(interpolate_recognition_loss(last, Mode::Pretrain) <
          interpolate_recognition_loss(first, Mode::Pretrain));
  }
}

TEST_CASE("pretrain and adapt", "[train]") {
  auto corpus = synth::generate_corpus(tiny_scenario(3), 5);
  const std::vector<std::string> seed_langs{"T1", "T2"};
  auto config = tiny_model(corpus, seed_langs.size());
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  auto seed = pretrain(corpus, seed_langs, config, tc);
  CHECK(seed.checkpoint.languages == seed_langs);
  CHECK(seed.checkpoint.metadata.at("mode") == "pretrain");
  CHECK(seed.log.epochs.size() == 1);

  AdaptRequest req;
  req.language = "T3";
  SECTION("zero epochs equals zero-shot evaluation") {
    TrainConfig none = tc;
    none.epochs = 0;
    auto adapted = adapt(seed.checkpoint, corpus, req, none);
    CHECK(adapted.checkpoint.params == seed.checkpoint.params);
    eval::EvaluationSpec spec;
    spec.language = "T3";
    spec.beam = 2;
    auto a = eval::evaluate(adapted.checkpoint, corpus, spec);
    spec.adapted_readings = {"T3-r1"};
    auto z = eval::evaluate(seed.checkpoint, corpus, spec);
    CHECK(a.metrics.characters == z.metrics.characters);
  }
  SECTION("phoneme head and classifier stay bitwise identical") {
    auto adapted = adapt(seed.checkpoint, corpus, req, tc);
    CHECK(adapted.checkpoint.metadata.at("mode") == "adapt");
    CHECK(same_tensors(seed.checkpoint.params, adapted.checkpoint.params, model::is_phoneme_ctc_param));
    CHECK(same_tensors(seed.checkpoint.params, adapted.checkpoint.params, model::is_classifier_param));
  }
  SECTION("adapting to a pretraining language is rejected") {
    req.language = "T1";
    CHECK_THROWS(adapt(seed.checkpoint, corpus, req, tc));
  }
  SECTION("empty language list is rejected") {
    CHECK_THROWS(pretrain(corpus, {}, config, tc));
  }
}

TEST_CASE("checkpoint round trip", "[checkpoint]") {
  auto corpus = synth::generate_corpus(tiny_scenario(), 5);
  auto config = tiny_model(corpus, 2);
  auto ckpt = initial_checkpoint(corpus, config, 4);
  ckpt.languages = {"T1", "T2"};
  ckpt.metadata["note"] = "x=y";
  const auto bytes = serialize_checkpoint(ckpt);
  CHECK(bytes.rfind("PASR1\n", 0) == 0);
  auto back = parse_checkpoint(bytes);
  CHECK(back.config == ckpt.config);
  CHECK(back.graphemes == ckpt.graphemes);
  CHECK(back.languages == ckpt.languages);
  CHECK(back.metadata == ckpt.metadata);
  CHECK(back.params == ckpt.params);
  CHECK(serialize_checkpoint(back) == bytes);

  CHECK_THROWS(parse_checkpoint("PASR2\n"));
  CHECK_THROWS(parse_checkpoint(bytes.substr(0, bytes.size() - 3)));

  auto other = config;
  other.hidden_size = 6;
  try {
    require_compatible(ckpt, other, ckpt.graphemes);
    FAIL("expected a shape mismatch");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("tensor '") != std::string::npos);
  }
  auto fewer = ckpt.graphemes;
  fewer.pop_back();
  CHECK_THROWS(require_compatible(ckpt, config, fewer));
}
