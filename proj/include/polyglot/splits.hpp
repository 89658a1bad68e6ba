#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace polyglot::train {

struct Splits {
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
};

// Seeded shuffle, then dev and test each take floor(n/10) utterances and
// train keeps the remainder. The three lists are disjoint and exhaustive.
Splits make_splits(const std::vector<std::string>& utterance_ids, std::uint64_t seed);

}  // namespace polyglot::train
