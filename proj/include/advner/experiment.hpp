#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "advner/config.hpp"
#include "advner/data.hpp"
#include "advner/synth.hpp"
#include "advner/trainer.hpp"

namespace advner::experiment {

// All corpora for one run, generated or loaded.
struct Corpora {
  std::vector<data::TokenSequence> source_train;
  std::vector<data::TokenSequence> source_dev;
  std::vector<data::TokenSequence> source_test;
  std::vector<data::TokenSequence> target;  // unlabeled
  synth::DomainSpec resolved_source;        // synthetic runs only
  synth::DomainSpec resolved_target;
};

// Deterministic synthetic corpora for (config, mode, seed): the split seeds
// derive from the experiment seed. The test split draws its context from the
// target pools when eval_condition is "target", from the source pools when
// "source"; gold labels are kept either way.
Corpora make_synthetic_corpora(const config::SynthSection& synth_cfg,
                               synth::PairMode mode, uint64_t seed);

Corpora load_corpora(const config::DataPaths& paths, const data::ParseOptions& opts);

struct ArmResult {
  double test_f1 = 0.0;
  double test_precision = 0.0;
  double test_recall = 0.0;
  double best_dev_f1 = 0.0;
  double domain_acc_first = 0.0;
  double domain_acc_last = 0.0;
  std::vector<double> domain_acc_trajectory;  // one probe per epoch
  int64_t epochs = 0;
};

struct SeedOutcome {
  uint64_t seed = 0;
  ArmResult adapted;
  ArmResult baseline;
};

struct ModeSummary {
  std::string mode;
  std::vector<SeedOutcome> per_seed;
  double adapted_mean_f1 = 0.0, adapted_sd_f1 = 0.0;
  double baseline_mean_f1 = 0.0, baseline_sd_f1 = 0.0;
  double mean_delta = 0.0;  // adapted - baseline
  int64_t domain_acc_drops = 0;  // seeds with final < first epoch accuracy
};

struct ExperimentReport {
  std::vector<ModeSummary> modes;
};

// Matched adapted / non-adaptive training pairs per (mode, seed). Writes
// experiment_report.json plus a text table under output_dir and streams
// progress to log.
ExperimentReport run_experiment(const config::ExperimentConfig& cfg, std::ostream& log);

// One training run (the cmd_train path): fits, writes checkpoint/,
// history.jsonl and report.json under output_dir.
struct TrainRunResult {
  trainer::FitResult fit;
  metrics::Metrics test;  // empty unless a test set was available
  bool has_test = false;
};

TrainRunResult run_training(const config::ExperimentConfig& cfg, std::ostream& log);

std::string report_to_json(const ExperimentReport& report);
void write_report_files(const ExperimentReport& report, const std::string& dir);

}  // namespace advner::experiment
