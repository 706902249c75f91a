#pragma once

// JSON (de)serialization for config structs, shared by checkpoints, the CLI
// config file, and reports. Unknown keys are rejected so typos in config
// files fail loudly instead of silently using defaults.

#include <string>
#include <vector>

#include "advner/errors.hpp"
#include "advner/model.hpp"
#include "advner/trainer.hpp"
#include "json.hpp"

namespace advner {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::vector<std::string>& known,
                                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const auto& k : known) {
      if (k == key) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace advner

namespace advner::model {

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},
                     {"n_heads", c.n_heads},       {"n_layers", c.n_layers},
                     {"d_ff", c.d_ff},             {"max_len", c.max_len},
                     {"n_tags", c.n_tags},         {"dropout", c.dropout},
                     {"grl_lambda", c.grl_lambda}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  reject_unknown_keys(j,
                      {"vocab_size", "d_model", "n_heads", "n_layers", "d_ff",
                       "max_len", "n_tags", "dropout", "grl_lambda"},
                      "model config");
  c = ModelConfig{};
  if (j.contains("vocab_size")) j.at("vocab_size").get_to(c.vocab_size);
  if (j.contains("d_model")) j.at("d_model").get_to(c.d_model);
  if (j.contains("n_heads")) j.at("n_heads").get_to(c.n_heads);
  if (j.contains("n_layers")) j.at("n_layers").get_to(c.n_layers);
  if (j.contains("d_ff")) j.at("d_ff").get_to(c.d_ff);
  if (j.contains("max_len")) j.at("max_len").get_to(c.max_len);
  if (j.contains("n_tags")) j.at("n_tags").get_to(c.n_tags);
  if (j.contains("dropout")) j.at("dropout").get_to(c.dropout);
  if (j.contains("grl_lambda")) j.at("grl_lambda").get_to(c.grl_lambda);
}

}  // namespace advner::model

namespace advner::trainer {

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"alpha", c.alpha},
                     {"grl_lambda", c.grl_lambda},
                     {"grl_warmup_epochs", c.grl_warmup_epochs},
                     {"lr", c.lr},
                     {"optimizer", c.optimizer == Optimizer::adam ? "adam" : "sgd"},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"adaptation", c.adaptation},
                     {"early_stop_patience", c.early_stop_patience},
                     {"grad_clip", c.grad_clip},
                     {"min_freq", c.min_freq},
                     {"union_vocab", c.union_vocab}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  reject_unknown_keys(j,
                      {"alpha", "grl_lambda", "grl_warmup_epochs", "lr", "optimizer",
                       "epochs", "batch_size", "seed", "adaptation",
                       "early_stop_patience", "grad_clip", "min_freq", "union_vocab"},
                      "train config");
  c = TrainConfig{};
  if (j.contains("alpha")) j.at("alpha").get_to(c.alpha);
  if (j.contains("grl_lambda")) j.at("grl_lambda").get_to(c.grl_lambda);
  if (j.contains("grl_warmup_epochs"))
    j.at("grl_warmup_epochs").get_to(c.grl_warmup_epochs);
  if (j.contains("lr")) j.at("lr").get_to(c.lr);
  if (j.contains("optimizer")) {
    const std::string o = j.at("optimizer").get<std::string>();
    if (o == "adam")
      c.optimizer = Optimizer::adam;
    else if (o == "sgd")
      c.optimizer = Optimizer::sgd;
    else
      throw ConfigError("train config: unknown optimizer '" + o + "'");
  }
  if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("adaptation")) j.at("adaptation").get_to(c.adaptation);
  if (j.contains("early_stop_patience"))
    j.at("early_stop_patience").get_to(c.early_stop_patience);
  if (j.contains("grad_clip")) j.at("grad_clip").get_to(c.grad_clip);
  if (j.contains("min_freq")) j.at("min_freq").get_to(c.min_freq);
  if (j.contains("union_vocab")) j.at("union_vocab").get_to(c.union_vocab);
}

}  // namespace advner::trainer
