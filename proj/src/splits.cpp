#include "polyglot/splits.hpp"

#include <algorithm>
#include <random>

namespace polyglot::train {

Splits make_splits(const std::vector<std::string>& utterance_ids, std::uint64_t seed) {
  std::vector<std::string> ids = utterance_ids;
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::size_t held = ids.size() / 10;
  Splits s;
  s.dev.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(held));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(held),
                ids.begin() + static_cast<std::ptrdiff_t>(2 * held));
  s.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(2 * held), ids.end());
  return s;
}

}  // namespace polyglot::train
