#include "advner/config.hpp"
#include "advner/errors.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace advner;

TEST_SUITE("config") {

TEST_CASE("defaults survive an empty config") {
  auto cfg = config::parse_config_text("{}");
  CHECK(cfg.train.alpha == 2.0);
  CHECK(cfg.train.grl_lambda == 1.0);
  CHECK(cfg.train.lr == 1e-3);
  CHECK(cfg.train.optimizer == trainer::Optimizer::adam);
  CHECK(cfg.train.epochs == 20);
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.train.adaptation == true);
  CHECK(cfg.train.early_stop_patience == 5);
  CHECK(cfg.train.grad_clip == 1.0);
  CHECK(cfg.model.d_model == 64);
  CHECK(cfg.model.n_heads == 4);
  CHECK(cfg.model.n_layers == 2);
  CHECK(cfg.model.d_ff == 128);
  CHECK(cfg.model.max_len == 128);
  CHECK(cfg.model.dropout == 0.1f);
  CHECK(cfg.model.grl_lambda == 1.0);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(config::parse_config_text(R"({"trian": {}})"), ConfigError);
  CHECK_THROWS_AS(config::parse_config_text(R"({"train": {"alhpa": 1}})"), ConfigError);
  CHECK_THROWS_AS(config::parse_config_text(R"({"model": {"dmodel": 8}})"), ConfigError);
  CHECK_THROWS_AS(config::parse_config_text(R"({"synth": {"sourc": {}}})"), ConfigError);
  CHECK_THROWS_AS(
      config::parse_config_text(R"({"synth": {"source": {"sed": 1}}})"), ConfigError);
}

TEST_CASE("invalid values are config errors") {
  CHECK_THROWS_AS(config::parse_config_text(R"({"train": {"optimizer": "adamw"}})"),
                  ConfigError);
  CHECK_THROWS_AS(config::parse_config_text(R"({"synth": {"mode": "opposite"}})"),
                  ConfigError);
  CHECK_THROWS_AS(
      config::parse_config_text(R"({"synth": {"eval_condition": "dev"}})"), ConfigError);
  CHECK_THROWS_AS(config::parse_config_text(R"({"experiment": {"seeds": []}})"),
                  ConfigError);
  CHECK_THROWS_AS(config::parse_config_text(R"(not json)"), ConfigError);
}

TEST_CASE("dotted --set overrides reach nested fields") {
  auto cfg = config::parse_config_text("{}");
  config::apply_override(cfg, "train.alpha=0");
  CHECK(cfg.train.alpha == 0.0);
  config::apply_override(cfg, "model.d_model=32");
  CHECK(cfg.model.d_model == 32);
  config::apply_override(cfg, "train.optimizer=sgd");
  CHECK(cfg.train.optimizer == trainer::Optimizer::sgd);
  config::apply_override(cfg, "output_dir=/tmp/x");
  CHECK(cfg.output_dir == "/tmp/x");
  CHECK_THROWS_AS(config::apply_override(cfg, "train.no_such=1"), ConfigError);
  CHECK_THROWS_AS(config::apply_override(cfg, "nonsense"), ConfigError);
}

TEST_CASE("config echo round-trips") {
  auto cfg = config::parse_config_text(
      R"({"train": {"alpha": 0.5, "seed": 9}, "synth": {"mode": "mixed"}})");
  auto echo = config::to_json_string(cfg);
  auto cfg2 = config::parse_config_text(echo);
  CHECK(cfg2.train.alpha == 0.5);
  CHECK(cfg2.train.seed == 9);
  CHECK(cfg2.synth.mode == "mixed");
  CHECK(config::to_json_string(cfg2) == echo);
}

TEST_CASE("synth section defaults echo into the manifest view") {
  auto cfg = config::parse_config_text(R"({"synth": {}})");
  auto j = nlohmann::json::parse(config::to_json_string(cfg));
  CHECK(j["synth"]["source"]["entity_density"] == 0.25);
  CHECK(j["synth"]["n_target"] == 2000);
  CHECK(j["train"]["alpha"] == 2.0);
}

}  // TEST_SUITE
