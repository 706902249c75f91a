#include "advner/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <ostream>
#include <sstream>

#include "advner/config_json.hpp"
#include "advner/errors.hpp"
#include "advner/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace advner::experiment {

namespace {

std::vector<data::TokenSequence> parse_text(const std::string& conll) {
  std::istringstream in(conll);
  return data::parse_conll(in);
}

std::vector<data::TokenSequence> strip_labels(std::vector<data::TokenSequence> seqs) {
  for (auto& s : seqs) {
    s.tags.clear();
    s.tag_ids.clear();
    s.domain = data::Domain::target;
  }
  return seqs;
}

double mean_of(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  return xs.empty() ? 0.0 : m / static_cast<double>(xs.size());
}

double sd_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

data::Vocab build_run_vocab(const std::vector<data::TokenSequence>& train,
                            const std::vector<data::TokenSequence>& target,
                            const trainer::TrainConfig& cfg) {
  if (cfg.union_vocab && !target.empty()) {
    return data::build_vocab_union({&train, &target}, cfg.min_freq);
  }
  return data::build_vocab(train, cfg.min_freq);
}

model::ModelConfig sized_model(model::ModelConfig mc, const data::Vocab& vocab) {
  mc.vocab_size = vocab.size();
  mc.n_tags = vocab.n_tags();
  return mc;
}

ArmResult run_arm(const Corpora& corpora, const data::Vocab& vocab,
                  const model::ModelConfig& mc, const trainer::TrainConfig& tc,
                  std::ostream& log, trainer::FitResult* fit_out) {
  auto fit = trainer::fit(corpora.source_train, corpora.source_dev, corpora.target,
                          mc, tc, vocab);
  ArmResult arm;
  arm.best_dev_f1 = fit.state.best_dev_f1;
  arm.epochs = static_cast<int64_t>(fit.history.size());
  if (!fit.history.empty()) {
    arm.domain_acc_first = fit.history.front().domain_accuracy;
    arm.domain_acc_last = fit.history.back().domain_accuracy;
    for (const auto& rec : fit.history)
      arm.domain_acc_trajectory.push_back(rec.domain_accuracy);
  }
  const auto test = trainer::evaluate(fit.state, corpora.source_test);
  arm.test_f1 = test.f1;
  arm.test_precision = test.precision;
  arm.test_recall = test.recall;
  log << "    " << (tc.adaptation ? "adapted " : "baseline") << " seed " << tc.seed
      << ": test F1 " << std::fixed << std::setprecision(4) << test.f1 << " (dev "
      << arm.best_dev_f1 << ", dom-acc " << arm.domain_acc_first << " -> "
      << arm.domain_acc_last << ", " << arm.epochs << " epochs)\n";
  if (fit_out) *fit_out = std::move(fit);
  return arm;
}

}  // namespace

Corpora make_synthetic_corpora(const config::SynthSection& synth_cfg,
                               synth::PairMode mode, uint64_t seed) {
  auto [src, tgt] = synth::resolve_pair_specs(synth_cfg.source, synth_cfg.target, mode);
  // per-experiment-seed derivation keeps seeds distinct across splits
  src.seed = mix64(synth_cfg.source.seed, mix64(seed, 1));
  tgt.seed = mix64(synth_cfg.target.seed, mix64(seed, 2));

  Corpora out;
  out.resolved_source = src;
  out.resolved_target = tgt;

  synth::DomainSpec dev = src;
  dev.seed = mix64(src.seed, 3);
  dev.n_sentences = synth_cfg.n_dev;

  synth::DomainSpec test = synth_cfg.eval_condition == "target" ? tgt : src;
  test.seed = mix64(src.seed, 4);
  test.n_sentences = synth_cfg.n_test;

  synth::DomainSpec target_corpus = tgt;
  target_corpus.n_sentences = synth_cfg.n_target;

  out.source_train = parse_text(synth::generate(src));
  out.source_dev = parse_text(synth::generate(dev));
  out.source_test = parse_text(synth::generate(test));
  out.target = strip_labels(parse_text(synth::generate(target_corpus)));
  return out;
}

Corpora load_corpora(const config::DataPaths& paths, const data::ParseOptions& opts) {
  Corpora out;
  out.source_train = data::parse_conll_file(paths.source_train, opts);
  if (!paths.source_dev.empty())
    out.source_dev = data::parse_conll_file(paths.source_dev, opts);
  if (!paths.source_test.empty())
    out.source_test = data::parse_conll_file(paths.source_test, opts);
  if (!paths.target.empty()) {
    out.target = data::load_unlabeled_file(paths.target,
                                           paths.target_format == "conll", opts);
  }
  return out;
}

ExperimentReport run_experiment(const config::ExperimentConfig& cfg, std::ostream& log) {
  if (!cfg.synth.present)
    throw ConfigError("experiment: a synth section is required (paired generation)");
  ExperimentReport report;
  for (const auto& mode_name : cfg.experiment.modes) {
    const synth::PairMode mode = synth::pair_mode_from_string(mode_name);
    ModeSummary summary;
    summary.mode = mode_name;
    log << "mode " << mode_name << ":\n";
    std::vector<double> adapted_f1s, baseline_f1s;
    for (uint64_t seed : cfg.experiment.seeds) {
      log << "  seed " << seed << "\n";
      Corpora corpora = make_synthetic_corpora(cfg.synth, mode, seed);
      trainer::TrainConfig tc = cfg.train;
      tc.seed = mix64(cfg.train.seed, seed);
      const data::Vocab vocab = build_run_vocab(corpora.source_train, corpora.target, tc);
      const model::ModelConfig mc = sized_model(cfg.model, vocab);

      SeedOutcome outcome;
      outcome.seed = seed;
      trainer::TrainConfig adapted_cfg = tc;
      adapted_cfg.adaptation = true;
      outcome.adapted = run_arm(corpora, vocab, mc, adapted_cfg, log, nullptr);
      adapted_f1s.push_back(outcome.adapted.test_f1);

      if (cfg.experiment.with_baseline) {
        trainer::TrainConfig baseline_cfg = tc;
        baseline_cfg.adaptation = false;
        outcome.baseline = run_arm(corpora, vocab, mc, baseline_cfg, log, nullptr);
        baseline_f1s.push_back(outcome.baseline.test_f1);
      }
      if (outcome.adapted.domain_acc_last < outcome.adapted.domain_acc_first)
        ++summary.domain_acc_drops;
      summary.per_seed.push_back(outcome);
    }
    summary.adapted_mean_f1 = mean_of(adapted_f1s);
    summary.adapted_sd_f1 = sd_of(adapted_f1s);
    summary.baseline_mean_f1 = mean_of(baseline_f1s);
    summary.baseline_sd_f1 = sd_of(baseline_f1s);
    summary.mean_delta = summary.adapted_mean_f1 - summary.baseline_mean_f1;
    log << "  mean F1: adapted " << std::fixed << std::setprecision(4)
        << summary.adapted_mean_f1 << " +- " << summary.adapted_sd_f1 << ", baseline "
        << summary.baseline_mean_f1 << " +- " << summary.baseline_sd_f1 << ", delta "
        << std::showpos << summary.mean_delta << std::noshowpos << ", domain-acc drops "
        << summary.domain_acc_drops << "/" << summary.per_seed.size() << "\n";
    report.modes.push_back(std::move(summary));
  }
  return report;
}

TrainRunResult run_training(const config::ExperimentConfig& cfg, std::ostream& log) {
  Corpora corpora;
  if (!cfg.data.empty()) {
    if (cfg.train.adaptation && cfg.data.target.empty()) {
      throw ConfigError("train: adaptation=true but data.target is not set");
    }
    if (cfg.data.source_dev.empty()) {
      throw ConfigError("train: data.source_dev is required for early stopping");
    }
    data::ParseOptions opts;
    opts.max_len = static_cast<int>(cfg.model.max_len);
    opts.warn = &std::cerr;
    if (cfg.data.long_sentences == "split")
      opts.long_policy = data::LongSentencePolicy::split;
    else if (cfg.data.long_sentences == "reject")
      opts.long_policy = data::LongSentencePolicy::reject;
    corpora = load_corpora(cfg.data, opts);
  } else if (cfg.synth.present) {
    corpora = make_synthetic_corpora(
        cfg.synth, synth::pair_mode_from_string(cfg.synth.mode), cfg.train.seed);
  } else {
    throw ConfigError("train: config needs either a data section or a synth section");
  }
  if (corpora.source_train.empty()) throw DataError("train: empty source training set");
  if (corpora.source_dev.empty())
    throw ConfigError("train: a labelled dev set is required (data.source_dev)");
  if (cfg.train.adaptation && corpora.target.empty()) {
    throw ConfigError(
        "train: adaptation=true requires a target corpus (data.target or synth)");
  }

  const data::Vocab vocab = build_run_vocab(corpora.source_train, corpora.target,
                                            cfg.train);
  const model::ModelConfig mc = sized_model(cfg.model, vocab);

  TrainRunResult result;
  ArmResult arm;
  if (!corpora.source_test.empty()) {
    arm = run_arm(corpora, vocab, mc, cfg.train, log, &result.fit);
    result.test = trainer::evaluate(result.fit.state, corpora.source_test);
    result.has_test = true;
  } else {
    result.fit = trainer::fit(corpora.source_train, corpora.source_dev, corpora.target,
                              mc, cfg.train, vocab);
    log << "    best dev F1 " << std::fixed << std::setprecision(4)
        << result.fit.state.best_dev_f1 << " over "
        << result.fit.history.size() << " epochs\n";
  }

  // artifacts: checkpoint/, history.jsonl, report.json, config echo
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  trainer::save_checkpoint(result.fit.state, (out / "checkpoint").string());
  {
    std::ofstream hist(out / "history.jsonl", std::ios::binary);
    for (const auto& rec : result.fit.history) {
      nlohmann::json j{{"epoch", rec.epoch},
                       {"l_ner", rec.mean_losses.l_ner},
                       {"l_adv", rec.mean_losses.l_adv},
                       {"l_total", rec.mean_losses.l_total},
                       {"alpha", rec.mean_losses.alpha},
                       {"dev_precision", rec.dev.precision},
                       {"dev_recall", rec.dev.recall},
                       {"dev_f1", rec.dev.f1},
                       {"domain_accuracy", rec.domain_accuracy},
                       {"steps", rec.steps},
                       {"n_source_seqs", rec.mean_losses.n_source_seqs},
                       {"n_target_seqs", rec.mean_losses.n_target_seqs}};
      hist << j.dump() << "\n";
    }
  }
  {
    nlohmann::json rep;
    rep["baseline"] = !cfg.train.adaptation || cfg.train.alpha == 0.0;
    rep["adaptation"] = cfg.train.adaptation;
    rep["alpha"] = cfg.train.alpha;
    rep["best_dev_f1"] = result.fit.state.best_dev_f1;
    rep["epochs"] = result.fit.history.size();
    if (result.has_test) {
      for (const auto& [k, value] : metrics::flatten(result.test)) rep["test." + k] = value;
    }
    std::ofstream repf(out / "report.json", std::ios::binary);
    repf << rep.dump(2) << "\n";
  }
  {
    std::ofstream cfgf(out / "config.json", std::ios::binary);
    cfgf << config::to_json_string(cfg) << "\n";
  }
  return result;
}

std::string report_to_json(const ExperimentReport& report) {
  nlohmann::json j;
  j["modes"] = nlohmann::json::array();
  for (const auto& m : report.modes) {
    nlohmann::json mj;
    mj["mode"] = m.mode;
    mj["adapted_mean_f1"] = m.adapted_mean_f1;
    mj["adapted_sd_f1"] = m.adapted_sd_f1;
    mj["baseline_mean_f1"] = m.baseline_mean_f1;
    mj["baseline_sd_f1"] = m.baseline_sd_f1;
    mj["mean_f1_delta"] = m.mean_delta;
    mj["domain_acc_drops"] = m.domain_acc_drops;
    mj["seeds"] = nlohmann::json::array();
    for (const auto& s : m.per_seed) {
      mj["seeds"].push_back(
          {{"seed", s.seed},
           {"adapted",
            {{"test_f1", s.adapted.test_f1},
             {"test_precision", s.adapted.test_precision},
             {"test_recall", s.adapted.test_recall},
             {"best_dev_f1", s.adapted.best_dev_f1},
             {"domain_acc_first", s.adapted.domain_acc_first},
             {"domain_acc_last", s.adapted.domain_acc_last},
             {"domain_acc_trajectory", s.adapted.domain_acc_trajectory},
             {"epochs", s.adapted.epochs}}},
           {"baseline",
            {{"test_f1", s.baseline.test_f1},
             {"test_precision", s.baseline.test_precision},
             {"test_recall", s.baseline.test_recall},
             {"best_dev_f1", s.baseline.best_dev_f1},
             {"domain_acc_first", s.baseline.domain_acc_first},
             {"domain_acc_last", s.baseline.domain_acc_last},
             {"domain_acc_trajectory", s.baseline.domain_acc_trajectory},
             {"epochs", s.baseline.epochs}}}});
    }
    j["modes"].push_back(std::move(mj));
  }
  return j.dump(2);
}

void write_report_files(const ExperimentReport& report, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream f(fs::path(dir) / "experiment_report.json", std::ios::binary);
    f << report_to_json(report) << "\n";
  }
  std::ofstream t(fs::path(dir) / "experiment_report.txt", std::ios::binary);
  for (const auto& m : report.modes) {
    t << "== mode: " << m.mode << " ==\n";
    t << std::left << std::setw(8) << "seed" << std::setw(14) << "adapted_f1"
      << std::setw(14) << "baseline_f1" << std::setw(10) << "delta" << std::setw(24)
      << "domain_acc(first->last)" << "\n";
    for (const auto& s : m.per_seed) {
      std::ostringstream acc;
      acc << std::fixed << std::setprecision(3) << s.adapted.domain_acc_first << " -> "
          << s.adapted.domain_acc_last;
      t << std::left << std::setw(8) << s.seed << std::setw(14) << std::fixed
        << std::setprecision(4) << s.adapted.test_f1 << std::setw(14)
        << s.baseline.test_f1 << std::setw(10)
        << (s.adapted.test_f1 - s.baseline.test_f1) << std::setw(24) << acc.str()
        << "\n";
    }
    t << "mean    " << std::fixed << std::setprecision(4) << std::left << std::setw(6)
      << m.adapted_mean_f1 << "+-" << std::setw(6) << m.adapted_sd_f1 << std::setw(6)
      << m.baseline_mean_f1 << "+-" << std::setw(6) << m.baseline_sd_f1
      << "  delta " << std::showpos << m.mean_delta << std::noshowpos
      << "  domain-acc drops " << m.domain_acc_drops << "/" << m.per_seed.size()
      << "\n\n";
  }
}

}  // namespace advner::experiment
