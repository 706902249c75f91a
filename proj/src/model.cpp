#include "advner/model.hpp"

#include <cmath>

#include "advner/errors.hpp"
#include "advner/rng.hpp"

namespace advner::model {

namespace {

Tensor sinusoidal_positional(int64_t max_len, int64_t d_model) {
  Tensor pe = Tensor::zeros(Shape{max_len, d_model});
  for (int64_t pos = 0; pos < max_len; ++pos) {
    for (int64_t i = 0; i < d_model; i += 2) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      pe.data[static_cast<size_t>(pos * d_model + i)] =
          static_cast<float>(std::sin(angle));
      if (i + 1 < d_model)
        pe.data[static_cast<size_t>(pos * d_model + i + 1)] =
            static_cast<float>(std::cos(angle));
    }
  }
  return pe;
}

Tensor uniform_init(Shape shape, int64_t fan_in, uint64_t seed) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  SplitMix64 rng(seed);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform_float(-bound, bound);
  return t;
}

Tensor normal_init(Shape shape, float stddev, uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.normal_float(0.0f, stddev);
  return t;
}

uint64_t tensor_seed(uint64_t seed, const std::string& name) {
  return mix64(seed, fnv1a(name));
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("model: vocab_size must be >= 2 (pad + unk)");
  if (d_model < 1) throw ConfigError("model: d_model must be positive");
  if (n_heads < 1 || d_model % n_heads != 0) {
    throw ConfigError("model: n_heads must be positive and divide d_model (" +
                      std::to_string(n_heads) + " vs " + std::to_string(d_model) + ")");
  }
  if (n_layers < 1) throw ConfigError("model: n_layers must be positive");
  if (d_ff < 1) throw ConfigError("model: d_ff must be positive");
  if (max_len < 1) throw ConfigError("model: max_len must be positive");
  if (n_tags < 1) throw ConfigError("model: n_tags must be >= 1 (the O tag)");
  if (!(dropout >= 0.0f && dropout < 1.0f))
    throw ConfigError("model: dropout must be in [0,1)");
  if (grl_lambda < 0.0) throw ConfigError("model: grl_lambda must be >= 0");
}

int64_t ModelParams::index_of(const std::string& name) const {
  for (size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name == name) return static_cast<int64_t>(i);
  }
  throw ContractError("unknown parameter '" + name + "'");
}

const Tensor& ModelParams::get(const std::string& name) const {
  return tensors[static_cast<size_t>(index_of(name))].tensor;
}

Tensor& ModelParams::get(const std::string& name) {
  return tensors[static_cast<size_t>(index_of(name))].tensor;
}

int64_t ModelParams::total_parameters() const {
  int64_t n = 0;
  for (const auto& t : tensors) n += t.tensor.numel();
  return n;
}

ModelParams init_params(const ModelConfig& config, uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  p.positional = sinusoidal_positional(config.max_len, config.d_model);

  auto put = [&](const std::string& name, ParamGroup group, Tensor t) {
    p.tensors.push_back({name, group, std::move(t)});
  };
  auto linear = [&](const std::string& name, ParamGroup group, int64_t in, int64_t out) {
    put(name + ".w", group, uniform_init(Shape{in, out}, in, tensor_seed(seed, name)));
    put(name + ".b", group, Tensor::zeros(Shape{out}));
  };

  put("embedding", ParamGroup::feature,
      normal_init(Shape{config.vocab_size, config.d_model}, 0.02f,
                  tensor_seed(seed, "embedding")));
  for (int64_t l = 0; l < config.n_layers; ++l) {
    const std::string pfx = "enc" + std::to_string(l);
    linear(pfx + ".wq", ParamGroup::feature, config.d_model, config.d_model);
    linear(pfx + ".wk", ParamGroup::feature, config.d_model, config.d_model);
    linear(pfx + ".wv", ParamGroup::feature, config.d_model, config.d_model);
    linear(pfx + ".wo", ParamGroup::feature, config.d_model, config.d_model);
    put(pfx + ".ln1.g", ParamGroup::feature,
        Tensor(Shape{config.d_model},
               std::vector<float>(static_cast<size_t>(config.d_model), 1.0f)));
    put(pfx + ".ln1.b", ParamGroup::feature, Tensor::zeros(Shape{config.d_model}));
    linear(pfx + ".ff1", ParamGroup::feature, config.d_model, config.d_ff);
    linear(pfx + ".ff2", ParamGroup::feature, config.d_ff, config.d_model);
    put(pfx + ".ln2.g", ParamGroup::feature,
        Tensor(Shape{config.d_model},
               std::vector<float>(static_cast<size_t>(config.d_model), 1.0f)));
    put(pfx + ".ln2.b", ParamGroup::feature, Tensor::zeros(Shape{config.d_model}));
  }
  linear("ner", ParamGroup::ner_head, config.d_model, config.n_tags);
  linear("dom1", ParamGroup::domain_head, config.d_model, config.d_model);
  linear("dom2", ParamGroup::domain_head, config.d_model, 2);
  return p;
}

ModelOnTape::ModelOnTape(ad::Tape& tape, const ModelParams& params)
    : tape_(tape), params_(params) {
  param_nodes_.reserve(params.tensors.size());
  for (const auto& t : params.tensors) param_nodes_.push_back(tape_.input(t.tensor));
}

ad::NodeId ModelOnTape::param(const std::string& name) const {
  return param_nodes_[static_cast<size_t>(params_.index_of(name))];
}

ad::NodeId ModelOnTape::encode(const data::Batch& batch, const DropoutPlan& drop) const {
  const ModelConfig& cfg = params_.config;
  if (batch.len > cfg.max_len) {
    throw ContractError("encode: batch length " + std::to_string(batch.len) +
                        " exceeds max_len " + std::to_string(cfg.max_len));
  }
  uint64_t site = 0;
  auto maybe_dropout = [&](ad::NodeId x) {
    ++site;
    if (!drop.enabled || cfg.dropout == 0.0f) return x;
    return tape_.dropout(x, cfg.dropout, mix64(drop.seed, (drop.stream << 32) | site));
  };

  ad::NodeId x = tape_.embedding(param("embedding"), batch.tokens, batch.rows,
                                 batch.len, &params_.positional);
  x = maybe_dropout(x);

  const double inv_sqrt_dh =
      1.0 / std::sqrt(static_cast<double>(cfg.d_model / cfg.n_heads));
  for (int64_t l = 0; l < cfg.n_layers; ++l) {
    const std::string pfx = "enc" + std::to_string(l);
    // self-attention sublayer
    ad::NodeId q = tape_.bias_add(tape_.matmul(x, param(pfx + ".wq.w")),
                                  param(pfx + ".wq.b"));
    ad::NodeId k = tape_.bias_add(tape_.matmul(x, param(pfx + ".wk.w")),
                                  param(pfx + ".wk.b"));
    ad::NodeId v = tape_.bias_add(tape_.matmul(x, param(pfx + ".wv.w")),
                                  param(pfx + ".wv.b"));
    q = tape_.split_heads(q, cfg.n_heads);
    k = tape_.split_heads(k, cfg.n_heads);
    v = tape_.split_heads(v, cfg.n_heads);
    ad::NodeId scores = tape_.scale(tape_.bmm_nt(q, k), inv_sqrt_dh);
    scores = tape_.attention_mask(scores, batch.mask, batch.rows, cfg.n_heads);
    ad::NodeId attn = tape_.softmax(scores, 2);
    ad::NodeId ctx = tape_.merge_heads(tape_.bmm(attn, v), cfg.n_heads);
    ad::NodeId o = tape_.bias_add(tape_.matmul(ctx, param(pfx + ".wo.w")),
                                  param(pfx + ".wo.b"));
    o = maybe_dropout(o);
    x = tape_.layer_norm(tape_.add(x, o), param(pfx + ".ln1.g"), param(pfx + ".ln1.b"));
    // feed-forward sublayer
    ad::NodeId f = tape_.gelu(tape_.bias_add(tape_.matmul(x, param(pfx + ".ff1.w")),
                                             param(pfx + ".ff1.b")));
    f = tape_.bias_add(tape_.matmul(f, param(pfx + ".ff2.w")), param(pfx + ".ff2.b"));
    f = maybe_dropout(f);
    x = tape_.layer_norm(tape_.add(x, f), param(pfx + ".ln2.g"), param(pfx + ".ln2.b"));
  }
  return x;
}

ad::NodeId ModelOnTape::ner_logits(ad::NodeId features) const {
  return tape_.bias_add(tape_.matmul(features, param("ner.w")), param("ner.b"));
}

ad::NodeId ModelOnTape::domain_logits(ad::NodeId features, const data::Batch& batch,
                                      double grl_lambda) const {
  ad::NodeId pooled = tape_.masked_mean_pool(features, batch.mask);
  ad::NodeId rev = tape_.gradient_reversal(pooled, grl_lambda);
  ad::NodeId h = tape_.gelu(
      tape_.bias_add(tape_.matmul(rev, param("dom1.w")), param("dom1.b")));
  return tape_.bias_add(tape_.matmul(h, param("dom2.w")), param("dom2.b"));
}

EvalOutputs eval_forward(const ModelParams& params, const data::Batch& batch) {
  ad::Tape tape;
  ModelOnTape m(tape, params);
  const ad::NodeId features = m.encode(batch, DropoutPlan{});
  const ad::NodeId ner = m.ner_logits(features);
  const ad::NodeId dom = m.domain_logits(features, batch, params.config.grl_lambda);
  return EvalOutputs{tape.value(ner), tape.value(dom)};
}

}  // namespace advner::model
