#include "polyglot/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "polyglot/io.hpp"
#include "polyglot/vocab.hpp"

namespace polyglot::eval {

double EditCounts::rate() const {
  if (reference_length == 0) return errors() == 0 ? 0.0 : 100.0 * static_cast<double>(errors());
  return 100.0 * static_cast<double>(errors()) / static_cast<double>(reference_length);
}

EditCounts& EditCounts::operator+=(const EditCounts& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  reference_length += o.reference_length;
  return *this;
}

EditCounts edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1), d[i - 1][j] + 1,
                          d[i][j - 1] + 1});

  EditCounts c;
  c.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

std::vector<std::string> words_of(const std::vector<std::string>& tokens) {
  std::vector<std::string> words;
  std::string current;
  for (const auto& t : tokens) {
    if (t == synth::kWordSeparator) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current += current.empty() ? t : "+" + t;
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::vector<std::string> characters_of(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens)
    if (t != synth::kWordSeparator) out.push_back(t);
  return out;
}

UtteranceResult score_utterance(std::string id, std::vector<std::string> reference,
                                std::vector<std::string> hypothesis) {
  UtteranceResult r;
  r.utterance_id = std::move(id);
  r.words = edit_distance(words_of(reference), words_of(hypothesis));
  r.characters = edit_distance(characters_of(reference), characters_of(hypothesis));
  r.reference = std::move(reference);
  r.hypothesis = std::move(hypothesis);
  return r;
}

Metrics aggregate(const std::vector<UtteranceResult>& results) {
  Metrics m;
  for (const auto& r : results) {
    m.words += r.words;
    m.characters += r.characters;
    ++m.utterances;
  }
  return m;
}

std::string results_csv(const std::vector<UtteranceResult>& results) {
  std::string out = "utterance_id,reference,hypothesis,S,I,D,N,char_S,char_I,char_D,char_N\n";
  for (const auto& r : results) {
    for (const auto* seq : {&r.reference, &r.hypothesis}) {
      for (const auto& t : *seq) {
        if (t.find(',') != std::string::npos) {
          throw std::invalid_argument("grapheme token '" + t + "' contains a comma");
        }
      }
    }
    out += r.utterance_id + "," + io::join(r.reference, " ") + "," + io::join(r.hypothesis, " ");
    for (const EditCounts* c : {&r.words, &r.characters}) {
      out += "," + std::to_string(c->substitutions) + "," + std::to_string(c->insertions) + "," +
             std::to_string(c->deletions) + "," + std::to_string(c->reference_length);
    }
    out += "\n";
  }
  return out;
}

std::vector<UtteranceResult> parse_results_csv(const std::string& text) {
  std::vector<UtteranceResult> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = io::split(line, ',');
    if (f.size() != 11) throw std::runtime_error("results row has " + std::to_string(f.size()) + " fields");
    UtteranceResult r;
    r.utterance_id = f[0];
    if (!f[1].empty()) r.reference = io::split(f[1], ' ');
    if (!f[2].empty()) r.hypothesis = io::split(f[2], ' ');
    r.words = {std::stoul(f[3]), std::stoul(f[4]), std::stoul(f[5]), std::stoul(f[6])};
    r.characters = {std::stoul(f[7]), std::stoul(f[8]), std::stoul(f[9]), std::stoul(f[10])};
    out.push_back(std::move(r));
  }
  return out;
}

Protocol parse_protocol(const std::string& name) {
  if (name == "reading_adaptation") return Protocol::ReadingAdaptation;
  if (name == "language_adaptation") return Protocol::LanguageAdaptation;
  throw std::invalid_argument("unknown protocol '" + name +
                              "' (expected reading_adaptation or language_adaptation)");
}

std::string protocol_name(Protocol p) {
  return p == Protocol::ReadingAdaptation ? "reading_adaptation" : "language_adaptation";
}

std::vector<const synth::Utterance*> protocol_utterances(const synth::Corpus& corpus,
                                                         const EvaluationSpec& spec) {
  const auto& lang = corpus.language(spec.language);
  std::set<std::string> adapted(spec.adapted_readings.begin(), spec.adapted_readings.end());
  std::vector<const synth::Utterance*> out;
  if (spec.protocol == Protocol::LanguageAdaptation) {
    if (spec.held_out_reading.empty()) {
      throw ProtocolViolation("language_adaptation needs a held-out reading");
    }
    const bool known = std::any_of(lang.readings.begin(), lang.readings.end(),
                                   [&](const auto& r) { return r.id == spec.held_out_reading; });
    if (!known) {
      throw std::invalid_argument("reading '" + spec.held_out_reading + "' does not belong to " +
                                  spec.language);
    }
    if (adapted.count(spec.held_out_reading)) {
      throw ProtocolViolation("held-out reading '" + spec.held_out_reading +
                              "' was used for adaptation");
    }
    for (const auto& u : corpus.utterances)
      if (u.reading == spec.held_out_reading) out.push_back(&u);
  } else {
    if (adapted.empty()) {
      for (const auto& r : lang.readings) adapted.insert(r.id);
    }
    for (const auto& u : corpus.utterances)
      if (u.language == spec.language && adapted.count(u.reading) && u.split == spec.split)
        out.push_back(&u);
  }
  if (out.empty()) throw std::invalid_argument("no utterances to evaluate for " + spec.language);
  return out;
}

Evaluation evaluate_utterances(const ParamSet& params, const model::ModelConfig& config,
                               const std::vector<std::string>& graphemes,
                               const std::vector<const synth::Utterance*>& utterances,
                               std::size_t beam) {
  const Vocabulary vocab(graphemes);
  Evaluation ev;
  for (const auto* u : utterances) {
    const auto hyp = model::beam_decode(params, config, u->features, beam);
    ev.utterances.push_back(score_utterance(u->id, u->transcript, vocab.decode(hyp.tokens)));
  }
  ev.metrics = aggregate(ev.utterances);
  return ev;
}

Evaluation evaluate(const Checkpoint& ckpt, const synth::Corpus& corpus, EvaluationSpec spec) {
  if (spec.adapted_readings.empty()) {
    auto it = ckpt.metadata.find("adapted_readings");
    if (it != ckpt.metadata.end() && !it->second.empty()) spec.adapted_readings = io::split(it->second, ' ');
  }
  if (spec.language.empty()) {
    auto it = ckpt.metadata.find("target_language");
    if (it == ckpt.metadata.end()) throw std::invalid_argument("evaluate: no target language given");
    spec.language = it->second;
  }
  if (spec.protocol == Protocol::LanguageAdaptation && spec.adapted_readings.empty()) {
    throw ProtocolViolation("language_adaptation needs the list of adapted readings");
  }
  return evaluate_utterances(ckpt.params, ckpt.config, ckpt.graphemes,
                             protocol_utterances(corpus, spec), spec.beam);
}

DeltaReport relative_delta_report(const std::map<std::string, double>& a,
                                  const std::map<std::string, double>& b) {
  DeltaReport r;
  for (const auto& [lang, wa] : a) {
    auto it = b.find(lang);
    if (it == b.end()) throw std::invalid_argument("condition b lacks language " + lang);
    if (wa == 0.0) {
      r.excluded.push_back(lang);
      continue;
    }
    r.relative_delta[lang] = 100.0 * (it->second - wa) / wa;
  }
  if (b.size() != a.size()) throw std::invalid_argument("conditions cover different languages");
  double total = 0.0;
  for (const auto& [lang, d] : r.relative_delta) total += d;
  r.mean = r.relative_delta.empty() ? 0.0 : total / static_cast<double>(r.relative_delta.size());
  return r;
}

std::string render_report(const std::vector<std::string>& conditions,
                          const std::map<std::string, std::map<std::string, double>>& results) {
  if (conditions.empty()) throw std::invalid_argument("report needs at least one condition");
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << "language";
  for (const auto& c : conditions) out << "\t" << c;
  out << "\n";
  const auto& first = results.at(conditions.front());
  for (const auto& [lang, v] : first) {
    out << lang;
    for (const auto& c : conditions) out << "\t" << results.at(c).at(lang);
    out << "\n";
  }
  out << "avg_rel_delta\t-";
  for (std::size_t i = 1; i < conditions.size(); ++i) {
    out << "\t" << std::showpos << relative_delta_report(first, results.at(conditions[i])).mean
        << "%" << std::noshowpos;
  }
  out << "\n";
  return out.str();
}

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t(r, c);
  return m;
}

Tensor to_tensor(const Matrix& m) {
  Tensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t(r, c) = m(r, c);
  return t;
}

}  // namespace

ProbeResult train_probe(const Tensor& train_x, const std::vector<std::size_t>& train_y,
                        const Tensor& dev_x, const std::vector<std::size_t>& dev_y,
                        std::size_t classes, std::uint64_t seed, std::size_t steps, double lr) {
  if (classes < 2) throw std::invalid_argument("probe needs at least two classes");
  if (train_x.rows() != train_y.size() || dev_x.rows() != dev_y.size() || train_y.empty() ||
      dev_y.empty() || train_x.cols() != dev_x.cols()) {
    throw std::invalid_argument("probe: inconsistent or empty data");
  }
  // Raw features, like the adversarial classifier sees them.
  const Matrix x = to_matrix(train_x), xd = to_matrix(dev_x);

  const auto n = static_cast<Eigen::Index>(train_y.size());
  const auto k = static_cast<Eigen::Index>(classes);
  Matrix y = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) y(i, static_cast<Eigen::Index>(train_y[i])) = 1.0;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> init(-0.01, 0.01);
  Matrix w(x.cols(), k);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = init(rng);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(k);

  for (std::size_t s = 0; s < steps; ++s) {
    Matrix logits = (x * w).rowwise() + b;
    logits = logits.colwise() - logits.rowwise().maxCoeff();
    Matrix p = logits.array().exp();
    p = p.array().colwise() / p.rowwise().sum().array();
    const Matrix diff = (p - y) / static_cast<double>(n);
    w -= lr * (x.transpose() * diff);
    b -= lr * diff.colwise().sum();
  }

  const Matrix scores = (xd * w).rowwise() + b;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    if (static_cast<std::size_t>(best) == dev_y[static_cast<std::size_t>(i)]) ++correct;
  }
  return {static_cast<double>(correct) / static_cast<double>(dev_y.size()), train_y.size(),
          dev_y.size(), classes};
}

Tensor utterance_means(const ParamSet& params, const model::ModelConfig& config,
                       const std::vector<const synth::Utterance*>& utterances) {
  Tensor out(Shape{utterances.size(), config.hidden_size});
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    ad::Graph g(false);
    auto enc = model::encode(g, params, config, utterances[i]->features);
    const Tensor& m = model::utterance_mean(enc).value();
    std::copy(m.data().begin(), m.data().end(), out.row_span(i).begin());
  }
  return out;
}

ProbeResult probe_language_accuracy(const ParamSet& params, const model::ModelConfig& config,
                                    const synth::Corpus& corpus,
                                    const std::vector<std::string>& languages, std::uint64_t seed) {
  if (languages.size() < 2) throw std::invalid_argument("language probe needs at least two languages");
  std::map<std::string, std::size_t> label;
  for (const auto& l : languages) label.emplace(l, label.size());
  std::vector<const synth::Utterance*> train, dev;
  std::vector<std::size_t> train_y, dev_y;
  for (const auto& u : corpus.utterances) {
    auto it = label.find(u.language);
    if (it == label.end()) continue;
    if (u.split == "train") {
      train.push_back(&u);
      train_y.push_back(it->second);
    } else if (u.split == "dev") {
      dev.push_back(&u);
      dev_y.push_back(it->second);
    }
  }
  return train_probe(utterance_means(params, config, train), train_y,
                     utterance_means(params, config, dev), dev_y, languages.size(), seed);
}

std::size_t midpoint_index(std::size_t start, std::size_t end, std::size_t factor) {
  if (end <= start || factor == 0) throw std::invalid_argument("midpoint_index: empty segment");
  return ((start + end) / 2) / factor;
}

std::vector<EmbeddingRow> export_embeddings(const ParamSet& params, const model::ModelConfig& config,
                                            const synth::Corpus& corpus,
                                            const std::set<std::size_t>& phoneme_filter,
                                            const std::vector<std::string>& languages,
                                            const std::string& split,
                                            std::vector<std::string>* notes) {
  const std::set<std::string> wanted(languages.begin(), languages.end());
  if (notes) {
    for (const auto& l : languages) {
      const auto& inv = corpus.language(l).inventory;
      for (std::size_t p : phoneme_filter)
        if (std::find(inv.begin(), inv.end(), p) == inv.end())
          notes->push_back("phoneme " + std::to_string(p) + " absent from " + l + ", skipped");
    }
  }
  std::vector<EmbeddingRow> rows;
  for (const auto& u : corpus.utterances) {
    if (!wanted.count(u.language) || (!split.empty() && u.split != split)) continue;
    bool any = false;
    for (const auto& s : u.alignment) any = any || phoneme_filter.empty() || phoneme_filter.count(s.phoneme);
    if (!any) continue;
    ad::Graph g(false);
    auto enc = model::encode(g, params, config, u.features);
    const Tensor& states = enc.phoneme_states().value();
    for (const auto& s : u.alignment) {
      if (!phoneme_filter.empty() && !phoneme_filter.count(s.phoneme)) continue;
      const std::size_t t = midpoint_index(s.start, s.end, config.subsample_factor);
      auto row = states.row_span(t);
      rows.push_back({u.language, s.phoneme, u.id, {row.begin(), row.end()}});
    }
  }
  return rows;
}

std::string embeddings_csv(const std::vector<EmbeddingRow>& rows) {
  std::ostringstream out;
  out << std::setprecision(17) << "language,phoneme";
  const std::size_t h = rows.empty() ? 0 : rows.front().state.size();
  for (std::size_t k = 0; k < h; ++k) out << ",h" << k;
  out << "\n";
  for (const auto& r : rows) {
    out << r.language << "," << r.phoneme;
    for (double v : r.state) out << "," << v;
    out << "\n";
  }
  return out.str();
}

Projection pca_2d(const Tensor& x) {
  if (x.rows() < 2 || x.cols() < 2) throw std::invalid_argument("pca_2d needs at least 2 rows and 2 columns");
  const Matrix m = to_matrix(x);
  const Eigen::RowVectorXd mean = m.colwise().mean();
  const Matrix centred = m.rowwise() - mean;
  const Matrix cov = centred.transpose() * centred / static_cast<double>(m.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  const auto h = cov.rows();
  Matrix components(2, h);
  // Eigenvalues come in ascending order.
  for (int k = 0; k < 2; ++k) {
    Eigen::RowVectorXd v = solver.eigenvectors().col(h - 1 - k).transpose();
    // Fix the sign so the largest-magnitude entry is positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    components.row(k) = v;
  }
  const Matrix points = centred * components.transpose();
  const Matrix reconstructed = points * components;
  Projection p;
  p.points = to_tensor(points);
  p.components = to_tensor(components);
  p.mean = to_tensor(mean);
  p.residual = (centred - reconstructed).squaredNorm();
  return p;
}

double cluster_separation(const std::vector<EmbeddingRow>& rows) {
  double inter = 0.0, intra = 0.0;
  std::size_t n_inter = 0, n_intra = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      const bool same_lang = rows[i].language == rows[j].language;
      const bool same_phone = rows[i].phoneme == rows[j].phoneme;
      if (same_lang == same_phone) continue;
      double d = 0.0;
      for (std::size_t k = 0; k < rows[i].state.size(); ++k) {
        const double e = rows[i].state[k] - rows[j].state[k];
        d += e * e;
      }
      d = std::sqrt(d);
      if (same_phone) {
        inter += d;
        ++n_inter;
      } else {
        intra += d;
        ++n_intra;
      }
    }
  }
  if (n_inter == 0 || n_intra == 0 || intra == 0.0) {
    throw std::invalid_argument("cluster_separation needs shared phonemes across languages and "
                                "distinct phonemes within a language");
  }
  return (inter / static_cast<double>(n_inter)) / (intra / static_cast<double>(n_intra));
}

}  // namespace polyglot::eval
