#include "polyglot/optimizer.hpp"

#include <cmath>

namespace polyglot {

double global_norm(const ad::GradientMap& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

double clip_global_norm(ad::GradientMap& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& v : g.data()) v *= factor;
  }
  return norm;
}

void Adam::step(ParamSet& params, ad::GradientMap grads) {
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) throw NonFiniteGradient(name);
    auto it = params.find(name);
    if (it == params.end()) {
      throw std::invalid_argument("gradient for unknown parameter '" + name + "'");
    }
    if (it->second.size() != g.size()) {
      throw ShapeError("gradient for '" + name + "' has shape " + shape_string(g.shape()) +
                       ", parameter has " + shape_string(it->second.shape()));
    }
  }
  clip_global_norm(grads, config_.clip_norm);

  const double b1 = config_.beta1, b2 = config_.beta2;
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    Moments& st = state_[name];
    if (st.m.size() == 0) {
      st.m = Tensor(p.shape(), 0.0);
      st.v = Tensor(p.shape(), 0.0);
    }
    st.t += 1;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    for (std::size_t k = 0; k < p.size(); ++k) {
      st.m[k] = b1 * st.m[k] + (1.0 - b1) * g[k];
      st.v[k] = b2 * st.v[k] + (1.0 - b2) * g[k] * g[k];
      const double mhat = st.m[k] / c1;
      const double vhat = st.v[k] / c2;
      p[k] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

std::int64_t Adam::steps(const std::string& name) const {
  auto it = state_.find(name);
  return it == state_.end() ? 0 : it->second.t;
}

}  // namespace polyglot
