#include "advner/config.hpp"

#include <fstream>
#include <sstream>

#include "advner/config_json.hpp"
#include "advner/errors.hpp"
#include "json.hpp"

namespace advner::synth {

void to_json(nlohmann::json& j, const DomainSpec& s) {
  j = nlohmann::json{{"seed", s.seed},
                     {"n_sentences", s.n_sentences},
                     {"min_len", s.min_len},
                     {"max_len", s.max_len},
                     {"entity_types", s.entity_types},
                     {"entity_density", s.entity_density},
                     {"shared_pool_size", s.shared_pool_size},
                     {"private_pool_size", s.private_pool_size},
                     {"shared_pool_seed", s.shared_pool_seed},
                     {"gazetteer_seed", s.gazetteer_seed},
                     {"private_pool_seed", s.private_pool_seed},
                     {"domain_gap", s.domain_gap},
                     {"noise_rate", s.noise_rate},
                     {"gazetteer_size", s.gazetteer_size},
                     {"ambiguous_fraction", s.ambiguous_fraction},
                     {"triggers_per_type", s.triggers_per_type},
                     {"trigger_rate", s.trigger_rate}};
}

void from_json(const nlohmann::json& j, DomainSpec& s) {
  reject_unknown_keys(
      j,
      {"seed", "n_sentences", "min_len", "max_len", "entity_types", "entity_density",
       "shared_pool_size", "private_pool_size", "shared_pool_seed", "gazetteer_seed",
       "private_pool_seed", "domain_gap", "noise_rate", "gazetteer_size",
       "ambiguous_fraction", "triggers_per_type", "trigger_rate"},
      "synth domain spec");
  s = DomainSpec{};
  if (j.contains("seed")) j.at("seed").get_to(s.seed);
  if (j.contains("n_sentences")) j.at("n_sentences").get_to(s.n_sentences);
  if (j.contains("min_len")) j.at("min_len").get_to(s.min_len);
  if (j.contains("max_len")) j.at("max_len").get_to(s.max_len);
  if (j.contains("entity_types")) j.at("entity_types").get_to(s.entity_types);
  if (j.contains("entity_density")) j.at("entity_density").get_to(s.entity_density);
  if (j.contains("shared_pool_size")) j.at("shared_pool_size").get_to(s.shared_pool_size);
  if (j.contains("private_pool_size"))
    j.at("private_pool_size").get_to(s.private_pool_size);
  if (j.contains("shared_pool_seed")) j.at("shared_pool_seed").get_to(s.shared_pool_seed);
  if (j.contains("gazetteer_seed")) j.at("gazetteer_seed").get_to(s.gazetteer_seed);
  if (j.contains("private_pool_seed"))
    j.at("private_pool_seed").get_to(s.private_pool_seed);
  if (j.contains("domain_gap")) j.at("domain_gap").get_to(s.domain_gap);
  if (j.contains("noise_rate")) j.at("noise_rate").get_to(s.noise_rate);
  if (j.contains("gazetteer_size")) j.at("gazetteer_size").get_to(s.gazetteer_size);
  if (j.contains("ambiguous_fraction"))
    j.at("ambiguous_fraction").get_to(s.ambiguous_fraction);
  if (j.contains("triggers_per_type"))
    j.at("triggers_per_type").get_to(s.triggers_per_type);
  if (j.contains("trigger_rate")) j.at("trigger_rate").get_to(s.trigger_rate);
}

}  // namespace advner::synth

namespace advner::config {

namespace {

using nlohmann::json;

void to_json_impl(json& j, const ExperimentConfig& c) {
  j["model"] = c.model;
  j["train"] = c.train;
  j["data"] = {{"source_train", c.data.source_train},
               {"source_dev", c.data.source_dev},
               {"source_test", c.data.source_test},
               {"target", c.data.target},
               {"target_format", c.data.target_format},
               {"long_sentences", c.data.long_sentences}};
  if (c.synth.present) {
    j["synth"] = {{"source", c.synth.source},
                  {"target", c.synth.target},
                  {"mode", c.synth.mode},
                  {"n_dev", c.synth.n_dev},
                  {"n_test", c.synth.n_test},
                  {"n_target", c.synth.n_target},
                  {"eval_condition", c.synth.eval_condition}};
  }
  j["experiment"] = {{"seeds", c.experiment.seeds},
                     {"modes", c.experiment.modes},
                     {"with_baseline", c.experiment.with_baseline}};
  j["output_dir"] = c.output_dir;
}

ExperimentConfig from_json_impl(const json& j) {
  reject_unknown_keys(j, {"model", "train", "data", "synth", "experiment", "output_dir"},
                      "config");
  ExperimentConfig c;
  if (j.contains("model")) c.model = j.at("model").get<model::ModelConfig>();
  if (j.contains("train")) c.train = j.at("train").get<trainer::TrainConfig>();
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown_keys(d,
                        {"source_train", "source_dev", "source_test", "target",
                         "target_format", "long_sentences"},
                        "data config");
    if (d.contains("source_train")) d.at("source_train").get_to(c.data.source_train);
    if (d.contains("source_dev")) d.at("source_dev").get_to(c.data.source_dev);
    if (d.contains("source_test")) d.at("source_test").get_to(c.data.source_test);
    if (d.contains("target")) d.at("target").get_to(c.data.target);
    if (d.contains("target_format")) d.at("target_format").get_to(c.data.target_format);
    if (c.data.target_format != "text" && c.data.target_format != "conll")
      throw ConfigError("data config: target_format must be 'text' or 'conll'");
    if (d.contains("long_sentences")) d.at("long_sentences").get_to(c.data.long_sentences);
    if (c.data.long_sentences != "truncate" && c.data.long_sentences != "split" &&
        c.data.long_sentences != "reject")
      throw ConfigError(
          "data config: long_sentences must be 'truncate', 'split' or 'reject'");
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown_keys(
        s, {"source", "target", "mode", "n_dev", "n_test", "n_target", "eval_condition"},
        "synth config");
    c.synth.present = true;
    if (s.contains("source")) c.synth.source = s.at("source").get<synth::DomainSpec>();
    if (s.contains("target")) c.synth.target = s.at("target").get<synth::DomainSpec>();
    if (s.contains("mode")) s.at("mode").get_to(c.synth.mode);
    synth::pair_mode_from_string(c.synth.mode);  // validate
    if (s.contains("n_dev")) s.at("n_dev").get_to(c.synth.n_dev);
    if (s.contains("n_test")) s.at("n_test").get_to(c.synth.n_test);
    if (s.contains("n_target")) s.at("n_target").get_to(c.synth.n_target);
    if (s.contains("eval_condition")) s.at("eval_condition").get_to(c.synth.eval_condition);
    if (c.synth.eval_condition != "target" && c.synth.eval_condition != "source")
      throw ConfigError("synth config: eval_condition must be 'target' or 'source'");
  }
  if (j.contains("experiment")) {
    const auto& e = j.at("experiment");
    reject_unknown_keys(e, {"seeds", "modes", "with_baseline"}, "experiment config");
    if (e.contains("seeds")) e.at("seeds").get_to(c.experiment.seeds);
    if (e.contains("modes")) e.at("modes").get_to(c.experiment.modes);
    if (e.contains("with_baseline")) e.at("with_baseline").get_to(c.experiment.with_baseline);
    if (c.experiment.seeds.empty())
      throw ConfigError("experiment config: seeds must be nonempty");
    for (const auto& m : c.experiment.modes) synth::pair_mode_from_string(m);
  }
  if (j.contains("output_dir")) j.at("output_dir").get_to(c.output_dir);
  return c;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    return from_json_impl(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config_text(os.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects dotted.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json root;
  to_json_impl(root, cfg);
  // walk the dotted path
  json* node = &root;
  size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    const auto dot = path.find('.', start);
    parts.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]))
      throw ConfigError("--set: unknown config path '" + path + "'");
    node = &(*node)[parts[i]];
  }
  if (!node->is_object() || !node->contains(parts.back()))
    throw ConfigError("--set: unknown config path '" + path + "'");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain string
  }
  (*node)[parts.back()] = parsed;
  cfg = from_json_impl(root);
}

std::string to_json_string(const ExperimentConfig& cfg) {
  json j;
  to_json_impl(j, cfg);
  return j.dump(2);
}

}  // namespace advner::config
