#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "polyglot/ctc.hpp"

namespace polyglot {

// Grapheme tokens mapped to ids starting at model::kFirstGrapheme. Unknown
// tokens map to model::kUnk.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  const std::vector<std::string>& tokens() const { return tokens_; }
  // Output classes including the reserved ids.
  std::size_t size() const;
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const;

  ctc::LabelSequence encode(const std::vector<std::string>& transcript) const;
  std::vector<std::string> decode(const ctc::LabelSequence& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace polyglot
