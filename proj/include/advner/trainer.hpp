#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "advner/data.hpp"
#include "advner/losses.hpp"
#include "advner/metrics.hpp"
#include "advner/model.hpp"

namespace advner::trainer {

enum class Optimizer { sgd, adam };

struct TrainConfig {
  double alpha = 2.0;        // weight on the adversarial term
  double grl_lambda = 1.0;   // reversal strength
  // 0 = constant lambda; otherwise the reversal ramps in linearly by epoch,
  // starting from exactly zero during the first epoch
  int64_t grl_warmup_epochs = 0;
  double lr = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t epochs = 20;
  int64_t batch_size = 32;
  uint64_t seed = 1;
  bool adaptation = true;
  int64_t early_stop_patience = 5;  // on dev F1
  double grad_clip = 1.0;           // global-norm clip; <= 0 disables
  int min_freq = 1;                 // vocab construction
  bool union_vocab = true;          // build vocab over source + target
  void validate() const;            // throws ConfigError
};

struct OptimizerState {
  std::vector<std::vector<float>> m;  // first moments, one per parameter tensor
  std::vector<std::vector<float>> v;  // second moments
  int64_t step = 0;                   // adam bias-correction counter
};

struct TrainState {
  model::ModelParams params;
  data::Vocab vocab;
  TrainConfig config;
  OptimizerState opt;
  int64_t epoch = 0;
  int64_t step = 0;
  double best_dev_f1 = 0.0;
};

TrainState make_state(const model::ModelConfig& model_config, const TrainConfig& config,
                      data::Vocab vocab, uint64_t init_seed);

// One joint update: NER loss on the source batch, domain loss on source +
// target through the gradient-reversal layer, one backward, one optimizer
// step over theta_f, theta_n, theta_d together.
//
// alpha enters as the multiplier on the reversed gradient into theta_f
// (together with grl_lambda), while theta_d always receives the unscaled
// domain gradient: alpha = 0 stops the feature extractor from being pushed
// around but still trains the discriminator. The returned breakdown reports
// l_total = l_ner + alpha * l_adv. With adaptation disabled the domain head
// is not even run: l_adv = 0 and theta_d stays untouched.
losses::LossBreakdown train_step(TrainState& state, const data::Batch& source,
                                 const std::optional<data::Batch>& target);

// One optimizer update in place (grads aligned with params.tensors). SGD is
// exactly w -= lr * g; adam uses bias-corrected moments.
void optimizer_step(TrainState& state, const std::vector<std::vector<float>>& grads);

// Pair source batches with (cycled) target batches; every source batch
// appears exactly once. Throws ConfigError when source is empty, or when
// target is empty but required.
std::vector<std::pair<data::Batch, std::optional<data::Batch>>> interleave(
    const std::vector<data::Batch>& source, const std::vector<data::Batch>& target,
    bool require_target);

struct EpochRecord {
  int64_t epoch = 0;
  losses::LossBreakdown mean_losses;
  metrics::Metrics dev;
  double domain_accuracy = 0.0;  // eval-mode probe on fixed slices
  int64_t steps = 0;
};

struct FitResult {
  TrainState state;  // best-dev snapshot
  std::vector<EpochRecord> history;
};

// Full training loop with early stopping on dev F1. Epochs are defined over
// the source set; the target stream cycles.
FitResult fit(const std::vector<data::TokenSequence>& source_train,
              const std::vector<data::TokenSequence>& source_dev,
              const std::vector<data::TokenSequence>& target,
              const model::ModelConfig& model_config, const TrainConfig& config,
              const data::Vocab& vocab);

// Greedy per-token argmax decoding, dropout disabled.
std::vector<std::vector<std::string>> predict_tags(
    const model::ModelParams& params, const data::Vocab& vocab,
    const std::vector<data::TokenSequence>& dataset, int64_t batch_size);

// predict -> extract entities -> entity-level P/R/F1 against the gold tags.
metrics::Metrics evaluate(const TrainState& state,
                          const std::vector<data::TokenSequence>& dataset);

// Eval-mode discriminator accuracy over fixed slices of both corpora.
double domain_probe(const TrainState& state,
                    const std::vector<data::TokenSequence>& source,
                    const std::vector<data::TokenSequence>& target, int64_t max_rows);

// Checkpoint directory layout: manifest.json (config echo, parameter
// names/shapes/order, content hashes, format version), vocab.json, params.bin
// and moments.bin (row-major little-endian float32 in manifest order; all
// first moments, then all second moments). Round-trips are byte-identical.
void save_checkpoint(const TrainState& state, const std::string& dir);
TrainState load_checkpoint(const std::string& dir);  // throws IntegrityError

}  // namespace advner::trainer
