#include "polyglot/checkpoint.hpp"

#include <sstream>
#include <stdexcept>

#include "polyglot/io.hpp"

namespace polyglot {

namespace {

constexpr std::string_view kMagic = "PASR1\n";
constexpr std::string_view kEndHeader = "end_header\n";

void put(std::string& out, const std::string& key, const std::string& value) {
  if (value.find('\n') != std::string::npos) {
    throw std::invalid_argument("checkpoint value for '" + key + "' contains a newline");
  }
  out += key + "=" + value + "\n";
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw std::runtime_error("checkpoint: bad integer for '" + key + "': " + v);
  }
}

std::vector<std::string> words(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream ss(v);
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& c = ckpt.config;
  std::string out(kMagic);
  put(out, "config.feature_dim", std::to_string(c.feature_dim));
  put(out, "config.encoder_layers", std::to_string(c.encoder_layers));
  put(out, "config.hidden_size", std::to_string(c.hidden_size));
  put(out, "config.subsample_factor", std::to_string(c.subsample_factor));
  put(out, "config.decoder_embed_size", std::to_string(c.decoder_embed_size));
  put(out, "config.attention_dim", std::to_string(c.attention_dim));
  put(out, "config.attention_conv_width", std::to_string(c.attention_conv_width));
  put(out, "config.attention_conv_channels", std::to_string(c.attention_conv_channels));
  put(out, "config.grapheme_vocab_size", std::to_string(c.grapheme_vocab_size));
  put(out, "config.phoneme_vocab_size", std::to_string(c.phoneme_vocab_size));
  put(out, "config.num_pretrain_languages", std::to_string(c.num_pretrain_languages));
  put(out, "config.phoneme_layer", std::to_string(c.phoneme_layer));
  put(out, "graphemes", io::join(ckpt.graphemes, " "));
  put(out, "languages", io::join(ckpt.languages, " "));
  for (const auto& [k, v] : ckpt.metadata) put(out, "meta." + k, v);
  for (const auto& [name, t] : ckpt.params) {
    std::string dims;
    for (std::size_t d : t.shape()) dims += " " + std::to_string(d);
    put(out, "tensor", name + dims);
  }
  out += kEndHeader;
  for (const auto& [name, t] : ckpt.params) io::append_f64_le(out, t.data());
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  if (bytes.compare(0, kMagic.size(), kMagic) != 0) {
    throw std::runtime_error("not a checkpoint: missing PASR1 magic");
  }
  const std::size_t end = bytes.find(kEndHeader, kMagic.size());
  if (end == std::string::npos) throw std::runtime_error("checkpoint header not terminated");
  Checkpoint ckpt;
  std::vector<std::pair<std::string, Shape>> tensors;
  std::map<std::string, std::string> config;
  std::istringstream header(bytes.substr(kMagic.size(), end - kMagic.size()));
  for (std::string line; std::getline(header, line);) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad checkpoint header line: " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "tensor") {
      auto parts = words(value);
      if (parts.empty()) throw std::runtime_error("checkpoint tensor line without a name");
      Shape shape;
      for (std::size_t i = 1; i < parts.size(); ++i) shape.push_back(to_size(parts[0], parts[i]));
      tensors.emplace_back(parts[0], shape);
    } else if (key == "graphemes") {
      ckpt.graphemes = words(value);
    } else if (key == "languages") {
      ckpt.languages = words(value);
    } else if (key.rfind("meta.", 0) == 0) {
      ckpt.metadata[key.substr(5)] = value;
    } else if (key.rfind("config.", 0) == 0) {
      config[key.substr(7)] = value;
    } else {
      throw std::runtime_error("unknown checkpoint header key: " + key);
    }
  }
  auto field = [&](const char* name) {
    auto it = config.find(name);
    if (it == config.end()) throw std::runtime_error(std::string("checkpoint missing config.") + name);
    return to_size(name, it->second);
  };
  auto& c = ckpt.config;
  c.feature_dim = field("feature_dim");
  c.encoder_layers = field("encoder_layers");
  c.hidden_size = field("hidden_size");
  c.subsample_factor = field("subsample_factor");
  c.decoder_embed_size = field("decoder_embed_size");
  c.attention_dim = field("attention_dim");
  c.attention_conv_width = field("attention_conv_width");
  c.attention_conv_channels = field("attention_conv_channels");
  c.grapheme_vocab_size = field("grapheme_vocab_size");
  c.phoneme_vocab_size = field("phoneme_vocab_size");
  c.num_pretrain_languages = field("num_pretrain_languages");
  c.phoneme_layer = field("phoneme_layer");
  c.validate();

  std::size_t offset = end + kEndHeader.size();
  for (const auto& [name, shape] : tensors) {
    Tensor probe(shape, 0.0);
    auto data = io::read_f64_le(bytes, offset, probe.size());
    offset += data.size() * 8;
    ckpt.params.emplace(name, Tensor(shape, std::move(data)));
  }
  if (offset != bytes.size()) throw std::runtime_error("checkpoint has trailing bytes");
  model::check_params(c, ckpt.params);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path));
}

void require_compatible(const Checkpoint& source, const model::ModelConfig& target_config,
                        const std::vector<std::string>& target_graphemes) {
  if (source.graphemes != target_graphemes) {
    throw std::invalid_argument("checkpoint grapheme vocabulary differs from the corpus vocabulary");
  }
  for (const auto& [name, shape] : model::parameter_shapes(target_config)) {
    auto it = source.params.find(name);
    if (it == source.params.end()) {
      throw std::invalid_argument("checkpoint lacks tensor '" + name + "'");
    }
    if (it->second.shape() != shape) {
      throw ShapeError("checkpoint tensor '" + name + "' has shape " +
                       shape_string(it->second.shape()) + ", expected " + shape_string(shape));
    }
  }
}

}  // namespace polyglot
