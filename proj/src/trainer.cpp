#include "advner/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "advner/config_json.hpp"
#include "advner/kernels.hpp"
#include "advner/errors.hpp"
#include "advner/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace advner::trainer {

namespace {

constexpr int kCheckpointFormatVersion = 1;

const char* group_name(model::ParamGroup g) {
  switch (g) {
    case model::ParamGroup::feature: return "feature";
    case model::ParamGroup::ner_head: return "ner_head";
    case model::ParamGroup::domain_head: return "domain_head";
  }
  return "?";
}

std::string to_hex(uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

// Global-norm clip over a subset of gradient tensors, fixed iteration order.
void clip_group(std::vector<std::vector<float>>& grads,
                const std::vector<size_t>& members, double clip) {
  if (clip <= 0.0) return;
  double sq = 0.0;
  for (size_t i : members)
    sq += kernels::sum_squares(static_cast<int64_t>(grads[i].size()), grads[i].data());
  const double norm = std::sqrt(sq);
  if (norm <= clip) return;
  const float scale = static_cast<float>(clip / norm);
  for (size_t i : members) {
    float* g = grads[i].data();
    const int64_t n = static_cast<int64_t>(grads[i].size());
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (n > (1 << 14))
    for (int64_t j = 0; j < n; ++j) g[j] *= scale;
  }
}

void write_f32_le(std::ostream& os, const std::vector<float>& data) {
  for (float f : data) {
    const uint32_t u = std::bit_cast<uint32_t>(f);
    const char bytes[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                           static_cast<char>((u >> 16) & 0xff),
                           static_cast<char>((u >> 24) & 0xff)};
    os.write(bytes, 4);
  }
}

std::vector<float> read_f32_le(const std::string& bytes, size_t offset, size_t count) {
  std::vector<float> out(count);
  for (size_t i = 0; i < count; ++i) {
    const size_t o = offset + i * 4;
    const uint32_t u = static_cast<uint8_t>(bytes[o]) |
                       (static_cast<uint32_t>(static_cast<uint8_t>(bytes[o + 1])) << 8) |
                       (static_cast<uint32_t>(static_cast<uint8_t>(bytes[o + 2])) << 16) |
                       (static_cast<uint32_t>(static_cast<uint8_t>(bytes[o + 3])) << 24);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("checkpoint: cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (alpha < 0.0) throw ConfigError("train: alpha must be >= 0");
  if (grl_lambda < 0.0) throw ConfigError("train: grl_lambda must be >= 0");
  if (grl_warmup_epochs < 0) throw ConfigError("train: grl_warmup_epochs must be >= 0");
  if (lr <= 0.0) throw ConfigError("train: lr must be positive");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (early_stop_patience < 0) throw ConfigError("train: early_stop_patience must be >= 0");
  if (min_freq < 1) throw ConfigError("train: min_freq must be >= 1");
}

TrainState make_state(const model::ModelConfig& model_config, const TrainConfig& config,
                      data::Vocab vocab, uint64_t init_seed) {
  config.validate();
  TrainState st;
  st.params = model::init_params(model_config, init_seed);
  st.vocab = std::move(vocab);
  st.config = config;
  st.opt.m.resize(st.params.tensors.size());
  st.opt.v.resize(st.params.tensors.size());
  for (size_t i = 0; i < st.params.tensors.size(); ++i) {
    st.opt.m[i].assign(st.params.tensors[i].tensor.data.size(), 0.0f);
    st.opt.v[i].assign(st.params.tensors[i].tensor.data.size(), 0.0f);
  }
  return st;
}

losses::LossBreakdown train_step(TrainState& state, const data::Batch& source,
                                 const std::optional<data::Batch>& target) {
  const TrainConfig& cfg = state.config;
  if (!source.has_tags()) throw ContractError("train_step: source batch has no tags");
  if (target && target->has_tags())
    throw ContractError("train_step: target batch must be unlabeled");
  if (cfg.adaptation && !target)
    throw ContractError("train_step: adaptation requires a target batch");

  const int64_t epoch_now = std::max<int64_t>(1, state.epoch);
  const double warmup =
      cfg.grl_warmup_epochs > 0
          ? std::min(1.0, static_cast<double>(epoch_now - 1) /
                              static_cast<double>(cfg.grl_warmup_epochs))
          : 1.0;
  // alpha scales the reversed gradient into theta_f; theta_d sees the domain
  // loss unweighted, so alpha=0 still trains the discriminator.
  const double lambda_eff = cfg.alpha * cfg.grl_lambda * warmup;

  losses::LossBreakdown out;
  out.alpha = cfg.alpha;
  out.n_source_seqs = source.rows;
  for (int32_t m : source.mask) out.n_source_tokens += m;

  std::vector<std::vector<float>> grads;
  try {
    ad::Tape tape;
    model::ModelOnTape m(tape, state.params);
    model::DropoutPlan src_drop{state.params.config.dropout > 0.0f,
                                mix64(cfg.seed, static_cast<uint64_t>(state.step)), 0};
    const ad::NodeId src_feat = m.encode(source, src_drop);
    const ad::NodeId ner_logits = m.ner_logits(src_feat);
    const ad::NodeId l_ner = losses::ner_loss(tape, ner_logits, source.tags, source.mask);
    out.l_ner = tape.scalar_value(l_ner);

    ad::NodeId root = l_ner;
    if (cfg.adaptation && target) {
      out.n_target_seqs = target->rows;
      model::DropoutPlan tgt_drop{state.params.config.dropout > 0.0f,
                                  mix64(cfg.seed, static_cast<uint64_t>(state.step)), 1};
      const ad::NodeId tgt_feat = m.encode(*target, tgt_drop);
      const ad::NodeId src_dom = m.domain_logits(src_feat, source, lambda_eff);
      const ad::NodeId tgt_dom = m.domain_logits(tgt_feat, *target, lambda_eff);
      const ad::NodeId l_adv = losses::domain_loss(tape, src_dom, tgt_dom);
      out.l_adv = tape.scalar_value(l_adv);
      root = tape.add(l_ner, l_adv);
    }
    out.l_total = out.l_ner + cfg.alpha * out.l_adv;

    tape.backward(root);
    grads.reserve(state.params.tensors.size());
    for (ad::NodeId id : m.param_nodes()) grads.push_back(tape.grad(id));
  } catch (const NumericError& e) {
    std::ostringstream os;
    os << e.what() << " [step " << state.step << ", source sequences";
    for (size_t i = 0; i < source.seq_index.size() && i < 8; ++i)
      os << " " << source.seq_index[i];
    os << "]";
    throw NumericError(os.str());
  }

  // theta_d is clipped apart from theta_f/theta_n so that an alpha=0 run
  // stays step-for-step identical to the non-adaptive baseline.
  std::vector<size_t> main_group, domain_group;
  for (size_t i = 0; i < state.params.tensors.size(); ++i) {
    (state.params.tensors[i].group == model::ParamGroup::domain_head ? domain_group
                                                                     : main_group)
        .push_back(i);
  }
  clip_group(grads, main_group, cfg.grad_clip);
  clip_group(grads, domain_group, cfg.grad_clip);

  optimizer_step(state, grads);
  ++state.step;
  return out;
}

void optimizer_step(TrainState& state, const std::vector<std::vector<float>>& grads) {
  const TrainConfig& cfg = state.config;
  if (grads.size() != state.params.tensors.size())
    throw ContractError("optimizer_step: gradient count mismatch");
  ++state.opt.step;
  const double t = static_cast<double>(state.opt.step);
  const float lr = static_cast<float>(cfg.lr);
  for (size_t i = 0; i < state.params.tensors.size(); ++i) {
    auto& w = state.params.tensors[i].tensor.data;
    const auto& g = grads[i];
    const int64_t n = static_cast<int64_t>(w.size());
    if (cfg.optimizer == Optimizer::sgd) {
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (n > (1 << 14))
      for (int64_t j = 0; j < n; ++j) w[j] -= lr * g[j];
    } else {
      auto& mo = state.opt.m[i];
      auto& vo = state.opt.v[i];
      const float b1 = static_cast<float>(cfg.adam_beta1);
      const float b2 = static_cast<float>(cfg.adam_beta2);
      const float inv_bc1 = static_cast<float>(1.0 / (1.0 - std::pow(cfg.adam_beta1, t)));
      const float inv_bc2 = static_cast<float>(1.0 / (1.0 - std::pow(cfg.adam_beta2, t)));
      const float eps = static_cast<float>(cfg.adam_eps);
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (n > (1 << 14))
      for (int64_t j = 0; j < n; ++j) {
        mo[j] = b1 * mo[j] + (1.0f - b1) * g[j];
        vo[j] = b2 * vo[j] + (1.0f - b2) * g[j] * g[j];
        w[j] -= lr * (mo[j] * inv_bc1) / (std::sqrt(vo[j] * inv_bc2) + eps);
      }
    }
  }
}

std::vector<std::pair<data::Batch, std::optional<data::Batch>>> interleave(
    const std::vector<data::Batch>& source, const std::vector<data::Batch>& target,
    bool require_target) {
  if (source.empty()) throw ConfigError("interleave: source stream is empty");
  if (require_target && target.empty())
    throw ConfigError("interleave: adaptation requires a nonempty target stream");
  std::vector<std::pair<data::Batch, std::optional<data::Batch>>> out;
  out.reserve(source.size());
  for (size_t i = 0; i < source.size(); ++i) {
    if (target.empty()) {
      out.emplace_back(source[i], std::nullopt);
    } else {
      out.emplace_back(source[i], target[i % target.size()]);
    }
  }
  return out;
}

std::vector<std::vector<std::string>> predict_tags(
    const model::ModelParams& params, const data::Vocab& vocab,
    const std::vector<data::TokenSequence>& dataset, int64_t batch_size) {
  std::vector<data::TokenSequence> seqs = dataset;
  data::assign_ids(seqs, vocab);
  auto batches = data::make_batches(seqs, batch_size, 0, /*shuffle=*/false);
  std::vector<std::vector<std::string>> out(seqs.size());
  for (auto& b : batches) {
    b.tags.clear();  // prediction runs label-free even on labeled data
    const auto outs = model::eval_forward(params, b);
    const int64_t n_tags = params.config.n_tags;
    for (int64_t r = 0; r < b.rows; ++r) {
      std::vector<std::string> tags;
      for (int64_t l = 0; l < b.len; ++l) {
        if (!b.mask[static_cast<size_t>(r * b.len + l)]) continue;
        const float* row = outs.ner_logits.ptr() + (r * b.len + l) * n_tags;
        int best = 0;
        for (int c = 1; c < n_tags; ++c)
          if (row[c] > row[best]) best = c;
        tags.push_back(vocab.tagset[static_cast<size_t>(best)]);
      }
      out[static_cast<size_t>(b.seq_index[static_cast<size_t>(r)])] = std::move(tags);
    }
  }
  return out;
}

metrics::Metrics evaluate(const TrainState& state,
                          const std::vector<data::TokenSequence>& dataset) {
  if (dataset.empty()) throw ContractError("evaluate: dataset is empty");
  std::vector<std::vector<std::string>> gold;
  gold.reserve(dataset.size());
  for (const auto& seq : dataset) {
    if (seq.tags.empty())
      throw ContractError("evaluate: dataset sequence lacks gold tags");
    gold.push_back(seq.tags);
  }
  auto pred = predict_tags(state.params, state.vocab, dataset, state.config.batch_size);
  return metrics::prf1(pred, gold);
}

double domain_probe(const TrainState& state,
                    const std::vector<data::TokenSequence>& source,
                    const std::vector<data::TokenSequence>& target, int64_t max_rows) {
  std::vector<float> logits;
  std::vector<data::Domain> gold;
  auto run = [&](const std::vector<data::TokenSequence>& corpus, data::Domain dom) {
    if (corpus.empty()) return;
    std::vector<data::TokenSequence> slice(
        corpus.begin(),
        corpus.begin() + static_cast<long>(std::min<size_t>(
                             corpus.size(), static_cast<size_t>(max_rows))));
    data::assign_ids(slice, state.vocab);
    for (auto& b : data::make_batches(slice, state.config.batch_size, 0, false)) {
      b.tags.clear();
      const auto outs = model::eval_forward(state.params, b);
      for (int64_t r = 0; r < b.rows; ++r) {
        logits.push_back(outs.domain_logits.data[static_cast<size_t>(2 * r)]);
        logits.push_back(outs.domain_logits.data[static_cast<size_t>(2 * r + 1)]);
        gold.push_back(dom);
      }
    }
  };
  run(source, data::Domain::source);
  run(target, data::Domain::target);
  if (gold.empty()) return 0.5;
  return metrics::domain_accuracy(logits, gold);
}

FitResult fit(const std::vector<data::TokenSequence>& source_train,
              const std::vector<data::TokenSequence>& source_dev,
              const std::vector<data::TokenSequence>& target,
              const model::ModelConfig& model_config, const TrainConfig& config,
              const data::Vocab& vocab) {
  config.validate();
  if (source_train.empty()) throw ConfigError("fit: source training set is empty");
  if (source_dev.empty()) throw ConfigError("fit: dev set is empty");
  if (config.adaptation && target.empty())
    throw ConfigError("fit: adaptation=true requires a target corpus");

  std::vector<data::TokenSequence> train = source_train;
  std::vector<data::TokenSequence> tgt = target;
  data::assign_ids(train, vocab);
  data::assign_ids(tgt, vocab);
  for (auto& seq : tgt) {
    seq.tags.clear();  // targets participate unlabeled regardless of input
    seq.tag_ids.clear();
  }

  FitResult result;
  result.state = make_state(model_config, config, vocab, config.seed);
  TrainState& st = result.state;

  TrainState best = st;
  int64_t bad_epochs = 0;
  const int64_t probe_rows = 256;

  for (int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    st.epoch = epoch;
    auto src_batches =
        data::make_batches(train, config.batch_size, mix64(config.seed, 1000 + epoch),
                           /*shuffle=*/true);
    std::vector<data::Batch> tgt_batches;
    if (!tgt.empty()) {
      tgt_batches = data::make_batches(
          tgt, config.batch_size, mix64(config.seed ^ 0x746172676574ull, 1000 + epoch),
          /*shuffle=*/true);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    double s_ner = 0, s_adv = 0, s_total = 0;
    for (auto& [sb, tb] : interleave(src_batches, tgt_batches, config.adaptation)) {
      const auto breakdown = train_step(st, sb, config.adaptation ? tb : std::nullopt);
      s_ner += breakdown.l_ner;
      s_adv += breakdown.l_adv;
      s_total += breakdown.l_total;
      rec.mean_losses.n_source_tokens += breakdown.n_source_tokens;
      rec.mean_losses.n_source_seqs += breakdown.n_source_seqs;
      rec.mean_losses.n_target_seqs += breakdown.n_target_seqs;
      ++rec.steps;
    }
    rec.mean_losses.alpha = config.alpha;
    rec.mean_losses.l_ner = s_ner / static_cast<double>(rec.steps);
    rec.mean_losses.l_adv = s_adv / static_cast<double>(rec.steps);
    rec.mean_losses.l_total = s_total / static_cast<double>(rec.steps);
    rec.dev = evaluate(st, source_dev);
    rec.domain_accuracy = domain_probe(st, source_train, tgt, probe_rows);
    result.history.push_back(rec);

    if (rec.dev.f1 > st.best_dev_f1 || result.history.size() == 1) {
      st.best_dev_f1 = rec.dev.f1;
      best = st;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (config.early_stop_patience > 0 && bad_epochs >= config.early_stop_patience)
        break;
    }
  }
  result.state = best;
  return result;
}

void save_checkpoint(const TrainState& state, const std::string& dir) {
  fs::create_directories(dir);

  std::ostringstream params_bytes, moments_bytes;
  for (const auto& t : state.params.tensors) write_f32_le(params_bytes, t.tensor.data);
  for (const auto& m : state.opt.m) write_f32_le(moments_bytes, m);
  for (const auto& v : state.opt.v) write_f32_le(moments_bytes, v);
  const std::string params_str = params_bytes.str();
  const std::string moments_str = moments_bytes.str();

  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["model_config"] = state.params.config;
  manifest["train_config"] = state.config;
  manifest["epoch"] = state.epoch;
  manifest["step"] = state.step;
  manifest["best_dev_f1"] = state.best_dev_f1;
  manifest["optimizer"] = {
      {"type", state.config.optimizer == Optimizer::adam ? "adam" : "sgd"},
      {"step", state.opt.step}};
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& t : state.params.tensors) {
    plist.push_back({{"name", t.name},
                     {"group", group_name(t.group)},
                     {"shape", t.tensor.shape.dims}});
  }
  manifest["params"] = plist;
  manifest["vocab_hash"] = to_hex(state.vocab.content_hash());
  manifest["params_hash"] = to_hex(fnv1a_bytes(params_str.data(), params_str.size()));
  manifest["moments_hash"] = to_hex(fnv1a_bytes(moments_str.data(), moments_str.size()));

  nlohmann::json vocab_json;
  vocab_json["tokens"] = state.vocab.id_to_token;
  vocab_json["tags"] = state.vocab.tagset;

  {
    std::ofstream f(fs::path(dir) / "params.bin", std::ios::binary);
    f.write(params_str.data(), static_cast<std::streamsize>(params_str.size()));
  }
  {
    std::ofstream f(fs::path(dir) / "moments.bin", std::ios::binary);
    f.write(moments_str.data(), static_cast<std::streamsize>(moments_str.size()));
  }
  {
    std::ofstream f(fs::path(dir) / "vocab.json", std::ios::binary);
    f << vocab_json.dump(2) << "\n";
  }
  {
    std::ofstream f(fs::path(dir) / "manifest.json", std::ios::binary);
    f << manifest.dump(2) << "\n";
  }
}

TrainState load_checkpoint(const std::string& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file_bytes(fs::path(dir) / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("checkpoint: manifest.json unreadable: " + std::string(e.what()));
  }
  if (!manifest.contains("format_version") ||
      manifest["format_version"].get<int>() != kCheckpointFormatVersion) {
    throw IntegrityError("checkpoint: unsupported format version");
  }

  model::ModelConfig model_config;
  trainer::TrainConfig train_config;
  try {
    model_config = manifest.at("model_config").get<model::ModelConfig>();
    train_config = manifest.at("train_config").get<trainer::TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("checkpoint: malformed config echo: " + std::string(e.what()));
  }

  // vocab + hash check
  nlohmann::json vocab_json;
  try {
    vocab_json = nlohmann::json::parse(read_file_bytes(fs::path(dir) / "vocab.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("checkpoint: vocab.json unreadable: " + std::string(e.what()));
  }
  data::Vocab vocab;
  vocab.id_to_token = vocab_json.at("tokens").get<std::vector<std::string>>();
  vocab.tagset = vocab_json.at("tags").get<std::vector<std::string>>();
  for (size_t i = 0; i < vocab.id_to_token.size(); ++i)
    vocab.token_to_id[vocab.id_to_token[i]] = static_cast<int32_t>(i);
  for (size_t i = 0; i < vocab.tagset.size(); ++i)
    vocab.tag_to_id[vocab.tagset[i]] = static_cast<int32_t>(i);
  if (to_hex(vocab.content_hash()) != manifest.at("vocab_hash").get<std::string>())
    throw IntegrityError("checkpoint: vocab hash mismatch");

  TrainState st = make_state(model_config, train_config, std::move(vocab), 0);
  st.epoch = manifest.at("epoch").get<int64_t>();
  st.step = manifest.at("step").get<int64_t>();
  st.best_dev_f1 = manifest.at("best_dev_f1").get<double>();
  st.opt.step = manifest.at("optimizer").at("step").get<int64_t>();

  // manifest parameter table must match the model the config describes
  const auto& plist = manifest.at("params");
  if (plist.size() != st.params.tensors.size())
    throw IntegrityError("checkpoint: parameter count mismatch");
  int64_t total = 0;
  for (size_t i = 0; i < st.params.tensors.size(); ++i) {
    const auto& expect = st.params.tensors[i];
    const auto& got = plist[i];
    const auto shape = got.at("shape").get<std::vector<int64_t>>();
    if (got.at("name").get<std::string>() != expect.name ||
        got.at("group").get<std::string>() != group_name(expect.group) ||
        Shape(shape) != expect.tensor.shape) {
      throw IntegrityError("checkpoint: manifest entry '" +
                           got.at("name").get<std::string>() +
                           "' does not match the model layout");
    }
    total += expect.tensor.numel();
  }

  const std::string params_str = read_file_bytes(fs::path(dir) / "params.bin");
  if (params_str.size() != static_cast<size_t>(total) * 4)
    throw IntegrityError("checkpoint: params.bin size mismatch");
  if (to_hex(fnv1a_bytes(params_str.data(), params_str.size())) !=
      manifest.at("params_hash").get<std::string>())
    throw IntegrityError("checkpoint: params.bin hash mismatch");

  const std::string moments_str = read_file_bytes(fs::path(dir) / "moments.bin");
  if (moments_str.size() != static_cast<size_t>(total) * 8)
    throw IntegrityError("checkpoint: moments.bin size mismatch");
  if (to_hex(fnv1a_bytes(moments_str.data(), moments_str.size())) !=
      manifest.at("moments_hash").get<std::string>())
    throw IntegrityError("checkpoint: moments.bin hash mismatch");

  size_t offset = 0;
  for (auto& t : st.params.tensors) {
    t.tensor.data = read_f32_le(params_str, offset, t.tensor.data.size());
    offset += t.tensor.data.size() * 4;
  }
  offset = 0;
  for (auto& m : st.opt.m) {
    m = read_f32_le(moments_str, offset, m.size());
    offset += m.size() * 4;
  }
  for (auto& v : st.opt.v) {
    v = read_f32_le(moments_str, offset, v.size());
    offset += v.size() * 4;
  }
  return st;
}

}  // namespace advner::trainer
