#include "polyglot/langselect.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "polyglot/io.hpp"

namespace polyglot::select {

Quality parse_quality(const std::string& s) {
  if (s == "very_good") return Quality::VeryGood;
  if (s == "good") return Quality::Good;
  if (s == "okay") return Quality::Okay;
  if (s == "not_okay") return Quality::NotOkay;
  throw std::invalid_argument("unknown alignment quality '" + s + "'");
}

std::string quality_name(Quality q) {
  switch (q) {
    case Quality::VeryGood: return "very_good";
    case Quality::Good: return "good";
    case Quality::Okay: return "okay";
    case Quality::NotOkay: return "not_okay";
  }
  return "not_okay";
}

Mode parse_mode(const std::string& s) {
  if (s == "phon_inv") return Mode::PhonInv;
  if (s == "geo") return Mode::Geo;
  throw std::invalid_argument("unknown similarity mode '" + s + "' (expected phon_inv or geo)");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: dimensions " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()) + " differ");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<double> geo_vector(double latitude, double longitude) {
  const double lat = latitude * std::numbers::pi / 180.0, lon = longitude * std::numbers::pi / 180.0;
  return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

std::vector<double> mode_vector(const LanguageProfile& p, Mode mode) {
  if (mode == Mode::Geo) return p.geo;
  std::vector<double> v = p.phonology;
  v.insert(v.end(), p.inventory.begin(), p.inventory.end());
  return v;
}

namespace {

bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace

std::vector<RankedLanguage> rank_candidates(const LanguageProfile& target,
                                            const std::vector<LanguageProfile>& candidates,
                                            Mode mode, std::vector<std::string>* warnings) {
  const auto t = mode_vector(target, mode);
  if (all_zero(t)) throw std::invalid_argument("target " + target.id + " is unattested for this mode");
  std::vector<RankedLanguage> out;
  for (const auto& c : candidates) {
    if (c.id == target.id) continue;
    if (c.quality != Quality::VeryGood && c.quality != Quality::Good) continue;
    const auto v = mode_vector(c, mode);
    if (all_zero(v)) {
      if (warnings) warnings->push_back(c.id + " is unattested, excluded");
      continue;
    }
    out.push_back({c.id, cosine_similarity(t, v), c.duration_hours});
  }
  std::sort(out.begin(), out.end(), [](const RankedLanguage& a, const RankedLanguage& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (out.empty() && warnings) warnings->push_back("no eligible candidates for " + target.id);
  return out;
}

Selection select_pretraining_set(const std::vector<RankedLanguage>& ranked, double budget_hours,
                                 std::size_t min_count, std::size_t max_count, double tolerance) {
  if (ranked.empty()) throw std::invalid_argument("select_pretraining_set: no ranked candidates");
  if (min_count == 0 || min_count > max_count) {
    throw std::invalid_argument("select_pretraining_set: need 1 <= min_count <= max_count");
  }
  Selection s;
  if (ranked.size() < min_count) {
    for (const auto& r : ranked) {
      s.languages.push_back(r.id);
      s.total_hours += r.duration_hours;
    }
    s.underfull = true;
    return s;
  }
  const double lo = (1.0 - tolerance) * budget_hours, hi = (1.0 + tolerance) * budget_hours;
  std::vector<double> prefix(ranked.size() + 1, 0.0);
  for (std::size_t i = 0; i < ranked.size(); ++i) prefix[i + 1] = prefix[i] + ranked[i].duration_hours;

  const std::size_t last = std::min(max_count, ranked.size());
  std::size_t chosen = 0;
  for (std::size_t n = min_count; n <= last; ++n) {
    if (prefix[n] >= lo && prefix[n] <= hi) {
      chosen = n;
      break;
    }
  }
  if (chosen == 0) {
    s.approximate = true;
    chosen = min_count;
    for (std::size_t n = min_count; n <= last; ++n) {
      if (std::abs(prefix[n] - budget_hours) < std::abs(prefix[chosen] - budget_hours)) chosen = n;
    }
  }
  for (std::size_t i = 0; i < chosen; ++i) s.languages.push_back(ranked[i].id);
  s.total_hours = prefix[chosen];
  return s;
}

std::vector<LanguageProfile> build_profiles_from_corpus(const synth::Corpus& corpus) {
  const std::size_t P = corpus.phones.size();
  std::map<std::string, double> frames;
  for (const auto& u : corpus.utterances) frames[u.language] += static_cast<double>(u.frames());
  std::vector<LanguageProfile> out;
  for (const auto& lang : corpus.languages) {
    LanguageProfile p;
    p.id = lang.id;
    p.quality = parse_quality(lang.quality);
    p.duration_hours = frames[lang.id] / corpus.frame_rate / 3600.0;
    p.inventory.assign(P, 0.0);
    p.phonology.assign(P, 0.0);
    p.geo = geo_vector(lang.latitude, lang.longitude);
    const std::size_t n = lang.inventory.size();
    if (n == 0 || lang.transitions.size() != n) {
      p.geo.assign(3, 0.0);
      out.push_back(std::move(p));
      continue;
    }
    for (std::size_t ph : lang.inventory) p.inventory.at(ph) = 1.0;
    // Stationary distribution by power iteration from uniform.
    std::vector<double> pi(n, 1.0 / static_cast<double>(n));
    for (int it = 0; it < 500; ++it) {
      std::vector<double> next(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * lang.transitions[i][j];
      pi = std::move(next);
    }
    for (std::size_t i = 0; i < n; ++i) p.phonology[lang.inventory[i]] = pi[i];
    out.push_back(std::move(p));
  }
  return out;
}

std::string write_profile_table(const std::vector<LanguageProfile>& profiles) {
  if (profiles.empty()) throw std::invalid_argument("no profiles to write");
  const auto& f = profiles.front();
  std::ostringstream out;
  out.precision(17);
  out << "profiles\tphonology=" << f.phonology.size() << "\tinventory=" << f.inventory.size()
      << "\tgeo=" << f.geo.size() << "\n";
  for (const auto& p : profiles) {
    if (p.phonology.size() != f.phonology.size() || p.inventory.size() != f.inventory.size() ||
        p.geo.size() != f.geo.size()) {
      throw std::invalid_argument("profile " + p.id + " has inconsistent vector dimensions");
    }
    out << p.id << "\t" << quality_name(p.quality) << "\t" << p.duration_hours;
    for (const auto* v : {&p.phonology, &p.inventory, &p.geo})
      for (double x : *v) out << "\t" << x;
    out << "\n";
  }
  return out.str();
}

std::vector<LanguageProfile> read_profile_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("profile table is empty");
  const auto head = io::split(line, '\t');
  if (head.size() != 4 || head[0] != "profiles") throw std::runtime_error("bad profile table header");
  std::size_t dims[3];
  const char* keys[3] = {"phonology=", "inventory=", "geo="};
  for (int k = 0; k < 3; ++k) {
    if (head[k + 1].rfind(keys[k], 0) != 0) throw std::runtime_error("bad profile table header field " + head[k + 1]);
    dims[k] = std::stoul(head[k + 1].substr(std::string(keys[k]).size()));
  }
  std::vector<LanguageProfile> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = io::split(line, '\t');
    if (f.size() != 3 + dims[0] + dims[1] + dims[2]) {
      throw std::runtime_error("profile table row " + std::to_string(row) + " has " +
                               std::to_string(f.size()) + " fields");
    }
    LanguageProfile p;
    p.id = f[0];
    p.quality = parse_quality(f[1]);
    p.duration_hours = std::stod(f[2]);
    if (p.duration_hours < 0.0) throw std::runtime_error("negative duration for " + p.id);
    std::size_t k = 3;
    for (auto [vec, n] : {std::pair{&p.phonology, dims[0]}, std::pair{&p.inventory, dims[1]},
                          std::pair{&p.geo, dims[2]}}) {
      for (std::size_t i = 0; i < n; ++i) vec->push_back(std::stod(f[k++]));
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace polyglot::select
