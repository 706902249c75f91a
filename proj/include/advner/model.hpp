#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advner/data.hpp"
#include "advner/tape.hpp"
#include "advner/tensor.hpp"

namespace advner::model {

struct ModelConfig {
  int64_t vocab_size = 0;  // set from data
  int64_t d_model = 64;
  int64_t n_heads = 4;
  int64_t n_layers = 2;
  int64_t d_ff = 128;
  int64_t max_len = 128;
  int64_t n_tags = 0;  // set from data
  float dropout = 0.1f;
  double grl_lambda = 1.0;

  void validate() const;  // throws ConfigError
};

enum class ParamGroup { feature, ner_head, domain_head };

struct NamedTensor {
  std::string name;
  ParamGroup group;
  Tensor tensor;
};

// All trainable tensors, partitioned into theta_f (feature extractor),
// theta_n (NER head) and theta_d (domain classifier head). The positional
// table is sinusoidal and not trainable, so it lives outside the partition.
struct ModelParams {
  ModelConfig config;
  std::vector<NamedTensor> tensors;  // fixed order; checkpoint layout follows it
  Tensor positional;                 // [max_len, d_model]

  int64_t index_of(const std::string& name) const;  // throws ContractError
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  int64_t total_parameters() const;
};

// Deterministic init: linear weights uniform in +-1/sqrt(fan_in), biases zero,
// embeddings normal(0, 0.02), layer norm gains one. Same (config, seed) gives
// bit-identical parameters.
ModelParams init_params(const ModelConfig& config, uint64_t seed);

// Per-forward dropout configuration. Masks depend only on (seed, stream,
// site index), so the source pass draws identical masks whether or not a
// target pass shares the tape.
struct DropoutPlan {
  bool enabled = false;
  uint64_t seed = 0;
  uint64_t stream = 0;
};

// Registers every parameter as a tape leaf once; source and target forwards
// on the same tape then share parameter nodes, so their gradients accumulate.
class ModelOnTape {
 public:
  ModelOnTape(ad::Tape& tape, const ModelParams& params);

  // [rows, len, d_model]; pad keys are masked out of attention.
  ad::NodeId encode(const data::Batch& batch, const DropoutPlan& drop) const;

  // [rows, len, n_tags]; logits, no softmax.
  ad::NodeId ner_logits(ad::NodeId features) const;

  // [rows, 2]; mask-aware mean pool -> gradient reversal -> 2-layer MLP.
  // Class 0 = source, class 1 = target.
  ad::NodeId domain_logits(ad::NodeId features, const data::Batch& batch,
                           double grl_lambda) const;

  const std::vector<ad::NodeId>& param_nodes() const { return param_nodes_; }

 private:
  ad::NodeId param(const std::string& name) const;

  ad::Tape& tape_;
  const ModelParams& params_;
  std::vector<ad::NodeId> param_nodes_;
};

// Convenience container for evaluation forwards.
struct EvalOutputs {
  Tensor ner_logits;     // [rows, len, n_tags]
  Tensor domain_logits;  // [rows, 2]
};

// Dropout-free forward returning plain tensors (no gradients kept).
EvalOutputs eval_forward(const ModelParams& params, const data::Batch& batch);

}  // namespace advner::model
