#include "polyglot/vocab.hpp"

#include <stdexcept>

#include "polyglot/model.hpp"

namespace polyglot {

namespace {
const std::vector<std::string> kReserved{"<unk>", "<sos>", "<eos>"};
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i].find_first_of(" \t\n") != std::string::npos) {
      throw std::invalid_argument("grapheme token '" + tokens_[i] + "' is empty or contains whitespace");
    }
    if (!index_.emplace(tokens_[i], model::kFirstGrapheme + i).second) {
      throw std::invalid_argument("duplicate grapheme token '" + tokens_[i] + "'");
    }
  }
}

std::size_t Vocabulary::size() const { return model::kFirstGrapheme + tokens_.size(); }

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? model::kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id < model::kFirstGrapheme) return kReserved.at(id);
  return tokens_.at(id - model::kFirstGrapheme);
}

ctc::LabelSequence Vocabulary::encode(const std::vector<std::string>& transcript) const {
  ctc::LabelSequence out;
  out.reserve(transcript.size());
  for (const auto& t : transcript) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const ctc::LabelSequence& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (std::size_t i : ids) out.push_back(token(i));
  return out;
}

}  // namespace polyglot
