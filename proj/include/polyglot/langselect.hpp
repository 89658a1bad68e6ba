#pragma once

// Choosing pretraining languages by similarity to a target: rank candidates
// by cosine similarity of typological or geographic vectors, drop poorly
// aligned corpora, then take a top prefix whose total duration roughly
// matches a budget.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "polyglot/synthdata.hpp"

namespace polyglot::select {

enum class Quality { VeryGood, Good, Okay, NotOkay };
Quality parse_quality(const std::string& s);
std::string quality_name(Quality q);

struct LanguageProfile {
  std::string id;
  std::vector<double> phonology;
  std::vector<double> inventory;
  std::vector<double> geo;  // point on the unit sphere
  Quality quality = Quality::Good;
  double duration_hours = 0.0;
};

// a·b / (|a||b|). Throws on a dimension mismatch or an all-zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

enum class Mode { PhonInv, Geo };
Mode parse_mode(const std::string& s);

// Unit-sphere embedding of (latitude, longitude) in degrees.
std::vector<double> geo_vector(double latitude, double longitude);

// The vector a mode compares: phonology ++ inventory, or geo.
std::vector<double> mode_vector(const LanguageProfile& p, Mode mode);

struct RankedLanguage {
  std::string id;
  double score = 0.0;
  double duration_hours = 0.0;
};

// Candidates with good or very good quality, excluding the target itself and
// any profile whose vector is all zero, sorted by descending similarity with
// ties broken by id. Throws if the target's own vector is all zero.
std::vector<RankedLanguage> rank_candidates(const LanguageProfile& target,
                                            const std::vector<LanguageProfile>& candidates,
                                            Mode mode, std::vector<std::string>* warnings = nullptr);

struct Selection {
  std::vector<std::string> languages;
  double total_hours = 0.0;
  // No prefix met both the count and the duration window; the closest
  // duration within the count bounds was taken.
  bool approximate = false;
  // Fewer candidates than min_count; all were taken.
  bool underfull = false;
};

// Returns the shortest prefix of `ranked` with min_count..max_count entries
// and total duration within budget·(1 ± tolerance).
Selection select_pretraining_set(const std::vector<RankedLanguage>& ranked, double budget_hours,
                                 std::size_t min_count = 7, std::size_t max_count = 14,
                                 double tolerance = 0.2);

// One profile per corpus language:
//   inventory: indicator over the universal phone set;
//   phonology: stationary phoneme frequencies of the language's phonotactic
//              chain, indexed by universal phoneme;
//   geo:       unit-sphere embedding of the language's coordinates;
//   duration:  summed utterance frames / frame rate, in hours.
// A language without an inventory gets all-zero vectors (unattested).
std::vector<LanguageProfile> build_profiles_from_corpus(const synth::Corpus& corpus);

// Profile table: header "profiles\tphonology=<n>\tinventory=<n>\tgeo=<n>",
// then one tab-separated row per language: id, quality, duration_hours and
// the three vectors' components in order.
std::string write_profile_table(const std::vector<LanguageProfile>& profiles);
std::vector<LanguageProfile> read_profile_table(const std::string& text);

}  // namespace polyglot::select
