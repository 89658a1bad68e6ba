#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "polyglot/autodiff.hpp"
#include "polyglot/ctc.hpp"

using namespace polyglot;
using Catch::Approx;

namespace {

Tensor uniform_rows(std::size_t frames, std::size_t symbols) {
  return Tensor(Shape{frames, symbols}, -std::log(static_cast<double>(symbols)));
}

Tensor random_log_probs(std::size_t frames, std::size_t symbols, std::mt19937_64& rng) {
  Tensor logits = testing::random_tensor({frames, symbols}, rng, 1.5);
  ad::Graph g(false);
  return ad::log_softmax_rows(g.constant(logits)).value();
}

ctc::LabelSequence random_label(std::size_t max_len, std::size_t vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> sym(0, vocab - 1);
  ctc::LabelSequence out(len(rng));
  for (auto& s : out) s = sym(rng);
  return out;
}

}  // namespace

TEST_CASE("ctc worked examples", "[ctc]") {
  SECTION("single frame, single path") {
    // Rows uniform over {a, b, blank}: one path emits "a".
    CHECK(ctc::log_likelihood(uniform_rows(1, 3), {0}).log_likelihood ==
          Approx(std::log(1.0 / 3.0)).margin(1e-12));
    // Over {a, blank} only the probability is 1/2.
    CHECK(ctc::log_likelihood(uniform_rows(1, 2), {0}).log_likelihood ==
          Approx(std::log(0.5)).margin(1e-12));
  }
  SECTION("two frames, label a: paths (-,a), (a,-), (a,a)") {
    const double ll = ctc::log_likelihood(uniform_rows(2, 3), {0}).log_likelihood;
    CHECK(ll == Approx(std::log(3.0 / 9.0)).margin(1e-12));
    CHECK(std::abs(ll - ctc::brute_force(uniform_rows(2, 3), {0})) <= 1e-9);
  }
  SECTION("repeat needs a separating blank") {
    CHECK(ctc::min_frames({0, 0}) == 3);
    auto r = ctc::log_likelihood(uniform_rows(2, 3), {0, 0}, true);
    CHECK_FALSE(r.feasible());
    CHECK(r.log_likelihood == -std::numeric_limits<double>::infinity());
    CHECK(r.grad.size() == 0);
  }
  SECTION("empty label is the all-blank path") {
    Tensor lp = random_log_probs(1, 4, *std::make_unique<std::mt19937_64>(3));
    CHECK(ctc::log_likelihood(lp, {}).log_likelihood == Approx(lp(0, 3)).margin(1e-15));
    CHECK(ctc::brute_force(lp, {}) == Approx(lp(0, 3)).margin(1e-15));
  }
  SECTION("single feasible path") {
    std::mt19937_64 rng(11);
    Tensor lp = random_log_probs(3, 3, rng);
    const double path = lp(0, 0) + lp(1, 2) + lp(2, 0);
    CHECK(ctc::log_likelihood(lp, {0, 0}).log_likelihood == Approx(path).margin(1e-12));
    CHECK(ctc::brute_force(lp, {0, 0}) == Approx(path).margin(1e-12));
  }
  SECTION("blank ids in labels are rejected") {
    CHECK_THROWS(ctc::log_likelihood(uniform_rows(3, 3), {2}));
  }
}

TEST_CASE("brute force guard", "[ctc]") {
  CHECK_THROWS(ctc::brute_force(uniform_rows(15, 4), {0}));
}

TEST_CASE("forward recursion equals enumeration", "[ctc][property]") {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<std::size_t> vocab_dist(1, 3), frame_dist(1, 6);
  int finite_cases = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t vocab = vocab_dist(rng), frames = frame_dist(rng);
    Tensor lp = random_log_probs(frames, vocab + 1, rng);
    auto label = random_label(3, vocab, rng);
    const auto fast = ctc::log_likelihood(lp, label);
    const double slow = ctc::brute_force(lp, label);
    if (!fast.feasible()) {
      CHECK(slow == -std::numeric_limits<double>::infinity());
      continue;
    }
    ++finite_cases;
    CHECK(std::abs(fast.log_likelihood - slow) <= 1e-9);
    CHECK(fast.log_likelihood <= 0.0);
  }
  CHECK(finite_cases >= 200);
}

TEST_CASE("appending a uniform frame keeps the likelihood bounded below", "[ctc][property]") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t symbols = 4, frames = 5;
    Tensor lp = random_log_probs(frames, symbols, rng);
    auto label = random_label(3, symbols - 1, rng);
    auto base = ctc::log_likelihood(lp, label);
    if (!base.feasible()) continue;
    std::vector<double> data(lp.data().begin(), lp.data().end());
    for (std::size_t k = 0; k < symbols; ++k) data.push_back(-std::log(4.0));
    Tensor longer(Shape{frames + 1, symbols}, std::move(data));
    CHECK(ctc::log_likelihood(longer, label).log_likelihood >=
          base.log_likelihood - std::log(4.0) - 1e-12);
  }
}

TEST_CASE("ctc gradient through log-softmax matches finite differences", "[ctc][property]") {
  std::mt19937_64 rng(4321);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t frames = 3 + static_cast<std::size_t>(trial % 5), symbols = 4;
    ParamSet p{{"logits", testing::random_tensor({frames, symbols}, rng, 1.0)}};
    auto label = random_label(2, symbols - 1, rng);
    if (ctc::min_frames(label) > frames) continue;
    auto build = [&](ad::Graph& g, const ParamSet& ps) {
      auto logp = ad::log_softmax_rows(g.parameter("logits", ps.at("logits")));
      auto r = ctc::log_likelihood(logp.value(), label, g.requires_grad());
      return ad::precomputed(logp, -r.log_likelihood,
                             g.requires_grad() ? r.grad : Tensor(logp.value().shape(), 0.0));
    };
    for (const auto& c : testing::check_gradients(build, p, 100, 1)) {
      INFO(c.name << "[" << c.index << "] " << c.analytic << " vs " << c.numeric);
      CHECK(c.ok);
    }
  }
}

TEST_CASE("greedy decoding collapses repeats and drops blanks", "[ctc]") {
  auto path_matrix = [](const std::vector<std::size_t>& path, std::size_t symbols) {
    Tensor t(Shape{path.size(), symbols}, std::log(0.1));
    for (std::size_t i = 0; i < path.size(); ++i) t(i, path[i]) = std::log(0.7);
    return t;
  };
  const std::size_t blank = 2;  // {a=0, b=1, blank=2}
  CHECK(ctc::greedy_decode(path_matrix({blank, 0, 0, blank, 1}, 3)) == ctc::LabelSequence{0, 1});
  CHECK(ctc::greedy_decode(path_matrix({0, 0, blank, 0}, 3)) == ctc::LabelSequence{0, 0});
  CHECK(ctc::greedy_decode(path_matrix({blank, blank}, 3)).empty());
}
