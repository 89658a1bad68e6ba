#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "polyglot/optimizer.hpp"

using namespace polyglot;
using Catch::Approx;

TEST_CASE("adam leaves parameters alone under zero gradient", "[optimizer]") {
  ParamSet params{{"w", Tensor::row({0.25, -1.5, 3.0})}};
  const ParamSet before = params;
  Adam adam({.learning_rate = 0.1});
  adam.step(params, {{"w", Tensor::row({0.0, 0.0, 0.0})}});
  CHECK(params == before);
  CHECK(adam.steps("w") == 1);
}

TEST_CASE("adam first step moves by the learning rate", "[optimizer]") {
  // m = 0.1, v = 0.001; bias correction gives m̂ = 1, v̂ = 1, so the step is
  // lr * 1 / (1 + 1e-8).
  ParamSet params{{"w", Tensor::scalar(2.0)}};
  Adam adam({.learning_rate = 0.1});
  adam.step(params, {{"w", Tensor::scalar(1.0)}});
  CHECK(params.at("w").item() == Approx(2.0 - 0.1 / (1.0 + 1e-8)).margin(1e-15));
  CHECK(params.at("w").item() == Approx(1.9).margin(1e-8));
}

TEST_CASE("global norm clipping", "[optimizer]") {
  ad::GradientMap grads{{"a", Tensor::row({30.0, 0.0})}, {"b", Tensor::row({40.0})}};
  CHECK(global_norm(grads) == 50.0);
  const double before = clip_global_norm(grads, 5.0);
  CHECK(before == 50.0);
  CHECK(grads.at("a")[0] == Approx(3.0).margin(1e-12));
  CHECK(grads.at("b")[0] == Approx(4.0).margin(1e-12));

  ad::GradientMap small{{"a", Tensor::row({0.3, 0.4})}};
  clip_global_norm(small, 5.0);
  CHECK(small.at("a") == Tensor::row({0.3, 0.4}));
}

TEST_CASE("non-finite gradient names the parameter and changes nothing", "[optimizer]") {
  ParamSet params{{"enc.w", Tensor::row({1.0})}, {"dec.w", Tensor::row({1.0})}};
  const ParamSet before = params;
  Adam adam;
  ad::GradientMap grads{{"enc.w", Tensor::row({0.5})},
                        {"dec.w", Tensor::row({std::numeric_limits<double>::quiet_NaN()})}};
  try {
    adam.step(params, grads);
    FAIL("expected NonFiniteGradient");
  } catch (const NonFiniteGradient& err) {
    CHECK(err.parameter() == "dec.w");
  }
  CHECK(params == before);
}

TEST_CASE("parameters without gradients are untouched", "[optimizer]") {
  ParamSet params{{"a", Tensor::row({1.0})}, {"b", Tensor::row({1.0})}};
  Adam adam;
  adam.step(params, {{"a", Tensor::row({1.0})}});
  CHECK(params.at("b")[0] == 1.0);
  CHECK(adam.steps("b") == 0);
}
