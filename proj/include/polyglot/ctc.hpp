#pragma once

// Connectionist temporal classification over a T×(V+1) matrix of per-frame
// log-probabilities. The blank symbol is always the last column (index V).

#include <cstddef>
#include <limits>
#include <vector>

#include "polyglot/tensor.hpp"

namespace polyglot::ctc {

using LabelSequence = std::vector<std::size_t>;

// Stand-in for log(0) inside the recursions; never -inf in arithmetic.
inline constexpr double kLogZero = -1e30;

double log_add(double a, double b);

// Minimum number of frames that can emit `label`: one per symbol plus a
// separating blank between each pair of equal neighbours.
std::size_t min_frames(const LabelSequence& label);

struct Result {
  // Log of the total probability of all alignments; -infinity when the
  // label cannot be emitted in T frames.
  double log_likelihood = 0.0;
  // d(-log_likelihood)/d(log_probs), same shape as the input. Empty when
  // infeasible or when not requested.
  Tensor grad;
  bool feasible() const { return log_likelihood > -std::numeric_limits<double>::infinity(); }
};

// Forward (and optionally backward) recursion in log space.
Result log_likelihood(const Tensor& log_probs, const LabelSequence& label,
                      bool with_grad = false);

// Exhaustive sum over all (V+1)^T frame paths. Test oracle only; rejects
// problems with more than 10^7 paths.
double brute_force(const Tensor& log_probs, const LabelSequence& label);

// Frame-wise argmax, collapse repeats, drop blanks.
LabelSequence greedy_decode(const Tensor& log_probs);

// Collapse a frame path into its label sequence.
LabelSequence collapse(const std::vector<std::size_t>& path, std::size_t blank);

}  // namespace polyglot::ctc
