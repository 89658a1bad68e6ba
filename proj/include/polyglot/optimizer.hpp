#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "polyglot/autodiff.hpp"
#include "polyglot/tensor.hpp"

namespace polyglot {

// Named trainable tensors. std::map keeps a stable, sorted iteration order,
// which the checkpoint writer and the optimizer both rely on.
using ParamSet = std::map<std::string, Tensor>;

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& parameter)
      : std::runtime_error("non-finite gradient for parameter '" + parameter + "'"),
        parameter_(parameter) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
};

// Global L2 norm over every gradient tensor.
double global_norm(const ad::GradientMap& grads);

// Rescales all gradients so their global norm is at most `max_norm`.
// Returns the pre-clipping norm.
double clip_global_norm(ad::GradientMap& grads, double max_norm);

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }

  // Clips `grads` to the configured global norm, then applies one Adam
  // update to each parameter that has a gradient. Parameters missing from
  // `grads` are left untouched and their moment estimates do not advance.
  // Throws NonFiniteGradient before modifying anything if a gradient holds a
  // NaN or infinity.
  void step(ParamSet& params, ad::GradientMap grads);

  std::int64_t steps(const std::string& name) const;

 private:
  struct Moments {
    Tensor m;
    Tensor v;
    std::int64_t t = 0;
  };
  AdamConfig config_;
  std::map<std::string, Moments> state_;
};

}  // namespace polyglot
