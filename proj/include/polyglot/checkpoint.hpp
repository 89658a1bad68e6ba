#pragma once

// Checkpoint file layout:
//
//   PASR1\n
//   key=value lines (config, vocabulary, languages, metadata)
//   tensor=<name> <dim> <dim>...   one line per tensor, in storage order
//   end_header\n
//   raw little-endian float64 data for each tensor, concatenated in the
//   order of the tensor lines
//
// Tensors are stored in ParamSet (name) order.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "polyglot/model.hpp"
#include "polyglot/optimizer.hpp"

namespace polyglot {

struct Checkpoint {
  model::ModelConfig config;
  // Grapheme tokens for ids kFirstGrapheme..; reserved ids are implicit.
  std::vector<std::string> graphemes;
  // Pretraining languages in classifier-output order.
  std::vector<std::string> languages;
  std::map<std::string, std::string> metadata;
  ParamSet params;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws naming the first tensor whose shape differs between `source` and a
// model built from `target_config`, or when the vocabularies differ.
void require_compatible(const Checkpoint& source, const model::ModelConfig& target_config,
                        const std::vector<std::string>& target_graphemes);

}  // namespace polyglot
