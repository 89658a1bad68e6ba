#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "polyglot/langselect.hpp"

using namespace polyglot;
using namespace polyglot::select;
using Catch::Approx;

namespace {

LanguageProfile profile(std::string id, std::vector<double> phon, std::vector<double> inv,
                        Quality q = Quality::Good, double hours = 1.0) {
  LanguageProfile p;
  p.id = std::move(id);
  p.phonology = std::move(phon);
  p.inventory = std::move(inv);
  p.geo = {1.0, 0.0, 0.0};
  p.quality = q;
  p.duration_hours = hours;
  return p;
}

std::vector<RankedLanguage> with_durations(std::vector<double> hours) {
  std::vector<RankedLanguage> r;
  for (std::size_t i = 0; i < hours.size(); ++i)
    r.push_back({"l" + std::to_string(i), 1.0 - 0.1 * static_cast<double>(i), hours[i]});
  return r;
}

// Independent cosine for the oracle sort.
double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / std::sqrt(na * nb));
}

}  // namespace

TEST_CASE("cosine similarity examples", "[langselect]") {
  std::vector<double> v{0.3, -1.2, 2.0};
  CHECK(cosine_similarity(v, v) == Approx(1.0).margin(1e-15));
  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(cosine_similarity(std::vector<double>{1, 1, 0}, std::vector<double>{1, 0, 0}) ==
        Approx(1.0 / std::sqrt(2.0)).margin(1e-12));
  CHECK(cosine_similarity(std::vector<double>{1, 1, 0}, std::vector<double>{1, 0, 0}) ==
        Approx(0.70711).margin(5e-6));
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{1}, std::vector<double>{1, 0}),
                  std::invalid_argument);
}

TEST_CASE("geo vectors lie on the unit sphere", "[langselect]") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
  for (int i = 0; i < 100; ++i) {
    auto g = geo_vector(lat(rng), lon(rng));
    CHECK(g[0] * g[0] + g[1] * g[1] + g[2] * g[2] == Approx(1.0).margin(1e-12));
  }
  auto north = geo_vector(90, 0);
  CHECK(north[2] == Approx(1.0));
  // Nearby points are more similar than distant ones.
  CHECK(cosine_similarity(geo_vector(10, 10), geo_vector(11, 10)) >
        cosine_similarity(geo_vector(10, 10), geo_vector(40, 10)));
}

TEST_CASE("ranking examples", "[langselect]") {
  auto target = profile("t", {1, 0}, {0, 0});
  SECTION("identical candidate first with score 1") {
    std::vector<LanguageProfile> c{profile("a", {1, 1}, {0, 0}), profile("b", {2, 0}, {0, 0})};
    auto r = rank_candidates(target, c, Mode::PhonInv);
    REQUIRE(r.size() == 2);
    CHECK(r[0].id == "b");
    CHECK(r[0].score == Approx(1.0));
  }
  SECTION("hand-built similarities 0.9, 0.5, 0.1") {
    // (cos θ, sin θ) has cosine cos θ against (1, 0).
    auto at = [](double c) { return std::vector<double>{c, std::sqrt(1 - c * c)}; };
    std::vector<LanguageProfile> c{profile("x", at(0.1), {0, 0}), profile("y", at(0.9), {0, 0}),
                                   profile("z", at(0.5), {0, 0})};
    auto r = rank_candidates(target, c, Mode::PhonInv);
    REQUIRE(r.size() == 3);
    CHECK(r[0].id == "y");
    CHECK(r[1].id == "z");
    CHECK(r[2].id == "x");
    CHECK(r[0].score == Approx(0.9));
    CHECK(r[1].score == Approx(0.5));
    CHECK(r[2].score == Approx(0.1));
  }
  SECTION("quality filter, target exclusion and unattested profiles") {
    std::vector<LanguageProfile> c{profile("ok", {1, 0}, {0, 0}, Quality::Okay),
                                   profile("bad", {1, 0}, {0, 0}, Quality::NotOkay),
                                   profile("t", {1, 0}, {0, 0}),
                                   profile("empty", {0, 0}, {0, 0}),
                                   profile("vg", {1, 0}, {1, 0}, Quality::VeryGood)};
    std::vector<std::string> warnings;
    auto r = rank_candidates(target, c, Mode::PhonInv, &warnings);
    REQUIRE(r.size() == 1);
    CHECK(r[0].id == "vg");
    CHECK(warnings.size() == 1);
  }
  SECTION("no eligible candidates warns") {
    std::vector<LanguageProfile> c{profile("ok", {1, 0}, {0, 0}, Quality::Okay)};
    std::vector<std::string> warnings;
    CHECK(rank_candidates(target, c, Mode::PhonInv, &warnings).empty());
    CHECK(warnings.size() == 1);
  }
  SECTION("ties break by id") {
    std::vector<LanguageProfile> c{profile("c", {1, 1}, {0, 0}), profile("a", {2, 2}, {0, 0}),
                                   profile("b", {4, 4}, {0, 0})};
    auto r = rank_candidates(target, c, Mode::PhonInv);
    CHECK(r[0].id == "a");
    CHECK(r[1].id == "b");
    CHECK(r[2].id == "c");
  }
  SECTION("unattested target is rejected") {
    CHECK_THROWS(rank_candidates(profile("t", {0, 0}, {0, 0}), {}, Mode::PhonInv));
  }
}

TEST_CASE("ranking equals an oracle full sort", "[langselect][property]") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    auto draw = [&](std::size_t d) {
      std::vector<double> v(d);
      for (auto& x : v) x = n(rng);
      return v;
    };
    auto target = profile("target", draw(6), draw(5));
    std::vector<LanguageProfile> c;
    for (int i = 0; i < 50; ++i) {
      auto q = static_cast<Quality>(rng() % 4);
      c.push_back(profile("c" + std::to_string(i), draw(6), draw(5), q));
    }
    auto ranked = rank_candidates(target, c, Mode::PhonInv);

    std::vector<std::pair<double, std::string>> oracle;
    const auto tv = mode_vector(target, Mode::PhonInv);
    for (const auto& p : c) {
      if (p.quality == Quality::Okay || p.quality == Quality::NotOkay) continue;
      oracle.emplace_back(oracle_cosine(tv, mode_vector(p, Mode::PhonInv)), p.id);
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    REQUIRE(ranked.size() == oracle.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      CHECK(ranked[i].id == oracle[i].second);
      CHECK(ranked[i].score == Approx(oracle[i].first).margin(1e-12));
    }

    // Common positive scaling leaves the order unchanged.
    auto scaled_target = target;
    auto scaled = c;
    for (auto* p : {&scaled_target}) {
      for (auto& x : p->phonology) x *= 3.5;
      for (auto& x : p->inventory) x *= 3.5;
    }
    for (auto& p : scaled) {
      for (auto& x : p.phonology) x *= 3.5;
      for (auto& x : p.inventory) x *= 3.5;
    }
    auto again = rank_candidates(scaled_target, scaled, Mode::PhonInv);
    REQUIRE(again.size() == ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) CHECK(again[i].id == ranked[i].id);
  }
}

TEST_CASE("selection examples", "[langselect]") {
  SECTION("worked example") {
    auto s = select_pretraining_set(with_durations({4, 3, 2, 2, 1}), 10, 2, 4, 0.2);
    CHECK(s.languages == std::vector<std::string>{"l0", "l1", "l2"});
    CHECK(s.total_hours == 9.0);
    CHECK_FALSE(s.approximate);
    CHECK_FALSE(s.underfull);
  }
  SECTION("budget matched by the first min_count languages") {
    auto s = select_pretraining_set(with_durations({5, 5, 5, 5}), 10, 2, 4, 0.0);
    CHECK(s.languages.size() == 2);
  }
  SECTION("single candidate with min 2") {
    auto s = select_pretraining_set(with_durations({3}), 10, 2, 4);
    CHECK(s.languages == std::vector<std::string>{"l0"});
    CHECK(s.underfull);
  }
  SECTION("no qualifying prefix is approximate and respects the count bounds") {
    auto s = select_pretraining_set(with_durations({1, 1, 1, 1, 1, 1}), 100, 2, 4);
    CHECK(s.approximate);
    CHECK(s.languages.size() == 4);
    auto t = select_pretraining_set(with_durations({50, 50, 50, 50}), 10, 2, 4);
    CHECK(t.approximate);
    CHECK(t.languages.size() == 2);
  }
  SECTION("errors") {
    CHECK_THROWS(select_pretraining_set({}, 10));
    CHECK_THROWS(select_pretraining_set(with_durations({1, 2}), 10, 3, 2));
  }
}

TEST_CASE("selection respects count bounds", "[langselect][property]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> h(0.1, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> hours(5 + rng() % 15);
    for (auto& x : hours) x = h(rng);
    const double budget = h(rng) * 6;
    auto s = select_pretraining_set(with_durations(hours), budget);
    CHECK(s.underfull == (hours.size() < 7));
    if (s.underfull) continue;
    CHECK(s.languages.size() >= 7);
    CHECK(s.languages.size() <= 14);
    if (!s.approximate && !s.underfull) {
      CHECK(s.total_hours >= 0.8 * budget - 1e-12);
      CHECK(s.total_hours <= 1.2 * budget + 1e-12);
    }
  }
}

TEST_CASE("profiles from a corpus", "[langselect]") {
  synth::Corpus corpus;
  corpus.frame_rate = 100.0;
  corpus.phones.durations = {5, 5, 5, 5};
  synth::SyntheticLanguage a;
  a.id = "a";
  a.inventory = {0, 2};
  a.transitions = {{0.5, 0.5}, {0.5, 0.5}};
  a.latitude = 10;
  a.longitude = 20;
  auto b = a;
  b.id = "b";
  synth::SyntheticLanguage missing;
  missing.id = "m";
  corpus.languages = {a, b, missing};
  synth::Utterance u;
  u.language = "a";
  u.features = Tensor::zeros(360, 4);
  corpus.utterances = {u, u};

  auto p = build_profiles_from_corpus(corpus);
  REQUIRE(p.size() == 3);
  CHECK(p[0].inventory == std::vector<double>{1, 0, 1, 0});
  CHECK(p[0].phonology[0] == Approx(0.5));
  CHECK(p[0].phonology[2] == Approx(0.5));
  CHECK(p[0].duration_hours == Approx(720.0 / 100.0 / 3600.0));
  CHECK(p[1].phonology == p[0].phonology);
  CHECK(p[1].inventory == p[0].inventory);
  CHECK(p[1].geo == p[0].geo);
  CHECK(p[1].duration_hours == 0.0);
  CHECK(std::all_of(p[2].inventory.begin(), p[2].inventory.end(), [](double x) { return x == 0; }));
  CHECK_THROWS(rank_candidates(p[2], p, Mode::PhonInv));
}

TEST_CASE("profile table round trip", "[langselect]") {
  std::vector<LanguageProfile> ps{profile("a", {0.1, 1.0 / 3.0}, {1, 0, 1}, Quality::VeryGood, 1.25),
                                  profile("b", {0, 0}, {0, 0, 0}, Quality::NotOkay, 0)};
  auto text = write_profile_table(ps);
  CHECK(text.rfind("profiles\tphonology=2\tinventory=3\tgeo=3\n", 0) == 0);
  auto back = read_profile_table(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a");
  CHECK(back[0].phonology == ps[0].phonology);
  CHECK(back[0].inventory == ps[0].inventory);
  CHECK(back[0].geo == ps[0].geo);
  CHECK(back[0].quality == Quality::VeryGood);
  CHECK(back[0].duration_hours == 1.25);
  CHECK(back[1].quality == Quality::NotOkay);

  CHECK_THROWS(read_profile_table(""));
  CHECK_THROWS(read_profile_table("profiles\tphonology=1\tinventory=1\tgeo=1\na\tgood\t1\t0\n"));
  CHECK_THROWS(read_profile_table("profiles\tphonology=1\tinventory=1\tgeo=1\na\tgreat\t1\t0\t0\t0\n"));
  CHECK_THROWS(parse_mode("family"));
}
