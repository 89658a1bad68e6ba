#include "polyglot/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace polyglot::ctc {

double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b <= kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

std::size_t min_frames(const LabelSequence& label) {
  std::size_t n = label.size();
  for (std::size_t i = 1; i < label.size(); ++i)
    if (label[i] == label[i - 1]) ++n;
  return n;
}

namespace {

void check_labels(const Tensor& log_probs, const LabelSequence& label) {
  const std::size_t blank = log_probs.cols() - 1;
  for (std::size_t id : label) {
    if (id >= blank) {
      throw std::invalid_argument("ctc: label id " + std::to_string(id) +
                                  " is blank or outside vocabulary of " +
                                  std::to_string(blank));
    }
  }
}

}  // namespace

Result log_likelihood(const Tensor& log_probs, const LabelSequence& label, bool with_grad) {
  if (log_probs.cols() < 1 || log_probs.size() == 0) {
    throw ShapeError("ctc: empty log-probability matrix");
  }
  check_labels(log_probs, label);
  const std::size_t frames = log_probs.rows();
  const std::size_t blank = log_probs.cols() - 1;
  Result result;
  if (frames < min_frames(label)) {
    result.log_likelihood = -std::numeric_limits<double>::infinity();
    return result;
  }

  // Blank-augmented label: blank, l1, blank, l2, ..., lU, blank.
  const std::size_t states = 2 * label.size() + 1;
  std::vector<std::size_t> ext(states, blank);
  for (std::size_t u = 0; u < label.size(); ++u) ext[2 * u + 1] = label[u];
  auto can_skip = [&](std::size_t s) {
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };

  std::vector<double> alpha(frames * states, kLogZero);
  alpha[0] = log_probs(0, blank);
  if (states > 1) alpha[1] = log_probs(0, ext[1]);
  for (std::size_t t = 1; t < frames; ++t) {
    const double* prev = &alpha[(t - 1) * states];
    double* cur = &alpha[t * states];
    for (std::size_t s = 0; s < states; ++s) {
      double acc = prev[s];
      if (s >= 1) acc = log_add(acc, prev[s - 1]);
      if (can_skip(s)) acc = log_add(acc, prev[s - 2]);
      cur[s] = acc <= kLogZero ? kLogZero : acc + log_probs(t, ext[s]);
    }
  }
  const double* last = &alpha[(frames - 1) * states];
  double total = last[states - 1];
  if (states > 1) total = log_add(total, last[states - 2]);
  result.log_likelihood = total;
  if (!with_grad) return result;

  // beta[t][s]: log-probability of emitting the remaining suffix from state s
  // at frame t, including frame t's emission.
  std::vector<double> beta(frames * states, kLogZero);
  double* bl = &beta[(frames - 1) * states];
  bl[states - 1] = log_probs(frames - 1, ext[states - 1]);
  if (states > 1) bl[states - 2] = log_probs(frames - 1, ext[states - 2]);
  for (std::size_t t = frames - 1; t-- > 0;) {
    const double* next = &beta[(t + 1) * states];
    double* cur = &beta[t * states];
    for (std::size_t s = 0; s < states; ++s) {
      double acc = next[s];
      if (s + 1 < states) acc = log_add(acc, next[s + 1]);
      if (s + 2 < states && can_skip(s + 2)) acc = log_add(acc, next[s + 2]);
      cur[s] = acc <= kLogZero ? kLogZero : acc + log_probs(t, ext[s]);
    }
  }

  result.grad = Tensor(Shape{frames, log_probs.cols()}, 0.0);
  std::vector<double> occupancy(log_probs.cols());
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kLogZero);
    for (std::size_t s = 0; s < states; ++s) {
      const double a = alpha[t * states + s];
      const double b = beta[t * states + s];
      if (a <= kLogZero || b <= kLogZero) continue;
      occupancy[ext[s]] = log_add(occupancy[ext[s]], a + b - log_probs(t, ext[s]));
    }
    for (std::size_t k = 0; k < occupancy.size(); ++k) {
      if (occupancy[k] > kLogZero) result.grad(t, k) = -std::exp(occupancy[k] - total);
    }
  }
  return result;
}

double brute_force(const Tensor& log_probs, const LabelSequence& label) {
  check_labels(log_probs, label);
  const std::size_t frames = log_probs.rows();
  const std::size_t symbols = log_probs.cols();
  const std::size_t blank = symbols - 1;
  double paths = 1.0;
  for (std::size_t t = 0; t < frames; ++t) paths *= static_cast<double>(symbols);
  if (paths > 1e7) {
    throw std::invalid_argument("ctc brute force: " + std::to_string(paths) +
                                " paths exceeds the 1e7 guard");
  }
  std::vector<std::size_t> path(frames, 0);
  double total = kLogZero;
  bool any = false;
  while (true) {
    if (collapse(path, blank) == label) {
      double lp = 0.0;
      for (std::size_t t = 0; t < frames; ++t) lp += log_probs(t, path[t]);
      total = any ? log_add(total, lp) : lp;
      any = true;
    }
    std::size_t pos = 0;
    while (pos < frames && ++path[pos] == symbols) path[pos++] = 0;
    if (pos == frames) break;
  }
  return any ? total : -std::numeric_limits<double>::infinity();
}

LabelSequence collapse(const std::vector<std::size_t>& path, std::size_t blank) {
  LabelSequence out;
  std::size_t prev = blank;
  for (std::size_t s : path) {
    if (s != blank && s != prev) out.push_back(s);
    prev = s;
  }
  return out;
}

LabelSequence greedy_decode(const Tensor& log_probs) {
  std::vector<std::size_t> path(log_probs.rows());
  for (std::size_t t = 0; t < log_probs.rows(); ++t) {
    auto row = log_probs.row_span(t);
    path[t] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return collapse(path, log_probs.cols() - 1);
}

}  // namespace polyglot::ctc
