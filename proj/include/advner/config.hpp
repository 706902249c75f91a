#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advner/model.hpp"
#include "advner/synth.hpp"
#include "advner/trainer.hpp"

namespace advner::config {

// Paths to on-disk corpora (CoNLL source files, text or CoNLL target).
struct DataPaths {
  std::string source_train;
  std::string source_dev;
  std::string source_test;
  std::string target;
  std::string target_format = "text";  // "text" | "conll"
  std::string long_sentences = "truncate";  // "truncate" | "split" | "reject"
  bool empty() const { return source_train.empty(); }
};

// Synthetic data section: a source/target domain pair plus split sizes.
// eval_condition picks the context distribution of the held-out test set:
// "target" evaluates under the shifted condition, "source" in-domain.
struct SynthSection {
  bool present = false;
  synth::DomainSpec source;
  synth::DomainSpec target;
  std::string mode = "different";
  int64_t n_dev = 300;
  int64_t n_test = 600;
  int64_t n_target = 2000;
  std::string eval_condition = "target";
};

struct ExperimentSection {
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<std::string> modes = {"different"};
  bool with_baseline = true;  // also train the matched non-adaptive arm
};

// Top-level config file: model + train sections, and either data paths or a
// synth section. Unknown keys anywhere are rejected.
struct ExperimentConfig {
  model::ModelConfig model;
  trainer::TrainConfig train;
  DataPaths data;
  SynthSection synth;
  ExperimentSection experiment;
  std::string output_dir = "runs/out";
};

ExperimentConfig load_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// Apply one "dotted.path=value" override (CLI --set). Values parse as JSON
// scalars, falling back to strings. Unknown paths are config errors.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Fully-resolved config echo (all defaults filled in), for manifests/reports.
std::string to_json_string(const ExperimentConfig& cfg);

}  // namespace advner::config
