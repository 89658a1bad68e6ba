#include <stdexcept>

#include "polyglot/experiment.hpp"

namespace polyglot::experiment {

namespace {

synth::GroupSpec group(std::string name, std::size_t size, std::size_t script,
                       std::array<double, 2> geo) {
  synth::GroupSpec g;
  g.name = std::move(name);
  g.size = size;
  g.script = script;
  g.geo_center = geo;
  return g;
}

synth::GroupSpec target(std::string inventory_from, std::size_t script, std::array<double, 2> geo,
                        std::size_t readings, std::size_t utterances) {
  auto g = group("X", 1, script, geo);
  g.role = "target";
  g.inventory_from = std::move(inventory_from);
  g.readings = readings;
  g.utterances_per_reading = utterances;
  return g;
}

Condition pretrained(std::string name, bool phn, bool adv) {
  Condition c;
  c.name = std::move(name);
  c.use_phoneme = phn;
  c.use_adversarial = adv;
  return c;
}

PretrainingSetSpec ranked_set(std::string kind, std::size_t count) {
  PretrainingSetSpec s;
  s.kind = std::move(kind);
  s.count = count;
  return s;
}

ExperimentConfig diverse_groups() {
  auto c = default_config();
  c.scenario_name = c.scenario.name = "diverse-groups";
  c.scenario.utterances_per_reading = 60;
  // The target speaks like group B but writes with group A's script.
  c.scenario.groups = {group("A", 4, 0, {0, 0}), group("B", 4, 1, {40, 60}),
                       target("B", 0, {20, 30}, 2, 200)};
  c.conditions = {pretrained("baseline", false, false), pretrained("phn", true, false),
                  pretrained("adv", false, true), pretrained("phn+adv", true, true)};
  // Large test split, small adaptation set.
  for (auto& cond : c.conditions) cond.max_adapt_utterances = 60;
  return c;
}

ExperimentConfig homogeneous_group() {
  auto c = default_config();
  c.scenario_name = c.scenario.name = "homogeneous-group";
  c.scenario.utterances_per_reading = 60;
  auto h = group("H", 8, 0, {0, 0});
  h.inventory_overlap = 0.95;
  h.language_shift_scale = 0.1;
  c.scenario.groups = {h, target("H", 0, {1, 1}, 2, 200)};
  c.conditions = {pretrained("baseline", false, false), pretrained("phn+adv", true, true)};
  for (auto& cond : c.conditions) cond.max_adapt_utterances = 60;
  return c;
}

ExperimentConfig geo_vs_phon() {
  auto c = default_config();
  c.scenario_name = c.scenario.name = "geo-vs-phon";
  c.scenario.utterances_per_reading = 60;
  // G sits next to the target but sounds different; P is far away but shares
  // the target's inventory.
  c.scenario.groups = {group("G", 4, 0, {2, 2}), group("P", 4, 0, {50, 100}),
                       target("P", 0, {0, 0}, 2, 40)};
  auto geo = pretrained("geo", true, true);
  geo.pretraining_set = ranked_set("geo", 4);
  auto phon = pretrained("phon_inv", true, true);
  phon.pretraining_set = ranked_set("phon_inv", 4);
  c.conditions = {geo, phon};
  return c;
}

ExperimentConfig many_languages() {
  auto c = default_config();
  c.scenario_name = c.scenario.name = "many-languages";
  c.scenario.utterances_per_reading = 60;
  // Four target readings: adaptation sees three speakers, the fourth is held out.
  c.scenario.groups = {group("A", 4, 0, {0, 0}), group("B", 4, 1, {40, 60}), group("C", 4, 2, {-30, 120}),
                       target("A", 0, {5, 5}, 4, 40)};
  c.protocol = eval::Protocol::LanguageAdaptation;
  auto few = pretrained("4-lang", false, false);
  few.pretraining_set = ranked_set("phon_inv", 4);
  auto many = pretrained("12-lang", false, false);
  c.conditions = {few, many};
  return c;
}

ExperimentConfig data_scaling() {
  auto c = default_config();
  c.scenario_name = c.scenario.name = "data-scaling";
  c.scenario.utterances_per_reading = 60;
  c.scenario.groups = {group("A", 4, 0, {0, 0}), group("B", 4, 1, {40, 60}),
                       target("B", 0, {20, 30}, 1, 200)};
  c.conditions.clear();
  for (std::size_t n : {10, 20, 40, 160}) {
    auto aux = pretrained("aux-n" + std::to_string(n), true, true);
    aux.max_adapt_utterances = n;
    Condition mono;
    mono.name = "mono-n" + std::to_string(n);
    mono.pretrain = false;
    mono.max_adapt_utterances = n;
    c.conditions.push_back(aux);
    c.conditions.push_back(mono);
  }
  return c;
}

}  // namespace

std::vector<std::string> bundled_scenario_names() {
  return {"diverse-groups", "homogeneous-group", "geo-vs-phon", "many-languages", "data-scaling"};
}

ExperimentConfig bundled_experiment(const std::string& name) {
  ExperimentConfig c;
  if (name == "diverse-groups") {
    c = diverse_groups();
  } else if (name == "homogeneous-group") {
    c = homogeneous_group();
  } else if (name == "geo-vs-phon") {
    c = geo_vs_phon();
  } else if (name == "many-languages") {
    c = many_languages();
  } else if (name == "data-scaling") {
    c = data_scaling();
  } else {
    throw std::invalid_argument("unknown scenario '" + name + "'");
  }
  c.validate();
  return c;
}

}  // namespace polyglot::experiment
