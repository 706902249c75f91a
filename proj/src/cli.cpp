#include "advner/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "advner/config.hpp"
#include "advner/config_json.hpp"
#include "advner/errors.hpp"
#include "advner/experiment.hpp"
#include "advner/gradcheck.hpp"
#include "advner/losses.hpp"
#include "advner/metrics.hpp"
#include "advner/rng.hpp"
#include "advner/synth.hpp"
#include "advner/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace advner::cli {

namespace {

int guard(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

config::ExperimentConfig load_with_overrides(const std::string& path,
                                             const std::vector<std::string>& overrides) {
  config::ExperimentConfig cfg = config::load_config_file(path);
  for (const auto& o : overrides) config::apply_override(cfg, o);
  return cfg;
}

void write_conll_file(const fs::path& path,
                      const std::vector<data::TokenSequence>& seqs) {
  std::ofstream f(path, std::ios::binary);
  for (const auto& s : seqs) {
    for (size_t i = 0; i < s.tokens.size(); ++i)
      f << s.tokens[i] << "\t" << (i < s.tags.size() ? s.tags[i] : "O") << "\n";
    f << "\n";
  }
}

void write_text_file(const fs::path& path,
                     const std::vector<data::TokenSequence>& seqs) {
  std::ofstream f(path, std::ios::binary);
  for (const auto& s : seqs) {
    for (size_t i = 0; i < s.tokens.size(); ++i) f << (i ? " " : "") << s.tokens[i];
    f << "\n";
  }
}

// ---- gradcheck fixtures ---------------------------------------------------

struct CheckLine {
  std::string name;
  double max_err = 0.0;
  int64_t coords = 0;
};

Tensor random_tensor(Shape s, uint64_t seed, float scale = 1.0f) {
  SplitMix64 rng(seed);
  std::vector<float> d(static_cast<size_t>(s.numel()));
  for (auto& x : d) x = rng.uniform_float(-scale, scale);
  return Tensor(std::move(s), std::move(d));
}

CheckLine check_one(const std::string& name, const ad::CheckedFn& fn,
                    std::vector<ad::CheckedParam> params, double h = 1e-3) {
  ad::GradCheckOptions opts;
  opts.h = h;
  opts.max_coords_per_param = 12;
  auto rep = ad::finite_diff_check(fn, std::move(params), opts);
  return {name, rep.max_rel_err, rep.coords_checked};
}

// Each op is exercised inside a tiny scalar objective with random weights.
std::vector<CheckLine> op_checks() {
  std::vector<CheckLine> lines;

  {
    std::vector<float> a = random_tensor(Shape{3, 4}, 101).data;
    std::vector<float> b = random_tensor(Shape{4, 5}, 102).data;
    Tensor r = random_tensor(Shape{3, 5}, 103);
    lines.push_back(check_one(
        "matmul",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto an = t.input(Tensor(Shape{3, 4}, a));
          auto bn = t.input(Tensor(Shape{4, 5}, b));
          auto s = t.sum(t.mul(t.matmul(an, bn), t.input(r)));
          if (g) {
            t.backward(s);
            *g = {t.grad(an), t.grad(bn)};
          }
          return t.scalar_value(s);
        },
        {{"a", &a}, {"b", &b}}));
  }
  {
    std::vector<float> a = random_tensor(Shape{2, 3, 4}, 104).data;
    std::vector<float> b = random_tensor(Shape{2, 4, 3}, 105).data;
    std::vector<float> c = random_tensor(Shape{2, 3, 3}, 106).data;
    lines.push_back(check_one(
        "bmm/bmm_nt",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto an = t.input(Tensor(Shape{2, 3, 4}, a));
          auto bn = t.input(Tensor(Shape{2, 4, 3}, b));
          auto cn = t.input(Tensor(Shape{2, 3, 3}, c));
          auto s = t.sum(t.gelu(t.add(t.bmm(an, bn), t.bmm_nt(cn, cn))));
          if (g) {
            t.backward(s);
            *g = {t.grad(an), t.grad(bn), t.grad(cn)};
          }
          return t.scalar_value(s);
        },
        {{"a", &a}, {"b", &b}, {"c", &c}}, 3e-3));
  }
  {
    std::vector<float> x = random_tensor(Shape{4, 6}, 107, 2.0f).data;
    Tensor r = random_tensor(Shape{4, 6}, 108);
    lines.push_back(check_one(
        "softmax",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto xn = t.input(Tensor(Shape{4, 6}, x));
          auto s = t.sum(t.mul(t.softmax(xn, 1), t.input(r)));
          if (g) {
            t.backward(s);
            *g = {t.grad(xn)};
          }
          return t.scalar_value(s);
        },
        {{"x", &x}}, 3e-3));
  }
  {
    std::vector<float> x = random_tensor(Shape{3, 8}, 109).data;
    std::vector<float> gamma = random_tensor(Shape{8}, 110, 0.5f).data;
    std::vector<float> beta = random_tensor(Shape{8}, 111, 0.5f).data;
    for (auto& v : gamma) v += 1.0f;
    Tensor r = random_tensor(Shape{3, 8}, 112);
    lines.push_back(check_one(
        "layer_norm",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto xn = t.input(Tensor(Shape{3, 8}, x));
          auto gn = t.input(Tensor(Shape{8}, gamma));
          auto bn = t.input(Tensor(Shape{8}, beta));
          auto s = t.sum(t.mul(t.layer_norm(xn, gn, bn), t.input(r)));
          if (g) {
            t.backward(s);
            *g = {t.grad(xn), t.grad(gn), t.grad(bn)};
          }
          return t.scalar_value(s);
        },
        {{"x", &x}, {"gamma", &gamma}, {"beta", &beta}}, 5e-3));
  }
  {
    std::vector<float> x = random_tensor(Shape{40}, 113, 2.0f).data;
    Tensor r = random_tensor(Shape{40}, 114);
    lines.push_back(check_one(
        "gelu",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto xn = t.input(Tensor(Shape{40}, x));
          auto s = t.sum(t.mul(t.gelu(xn), t.input(r)));
          if (g) {
            t.backward(s);
            *g = {t.grad(xn)};
          }
          return t.scalar_value(s);
        },
        {{"x", &x}}));
  }
  {
    std::vector<float> x = random_tensor(Shape{5, 6}, 115).data;
    std::vector<float> b = random_tensor(Shape{6}, 116).data;
    Tensor r = random_tensor(Shape{5, 6}, 117);
    lines.push_back(check_one(
        "bias_add",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto xn = t.input(Tensor(Shape{5, 6}, x));
          auto bn = t.input(Tensor(Shape{6}, b));
          auto s = t.sum(t.mul(t.bias_add(xn, bn), t.input(r)));
          if (g) {
            t.backward(s);
            *g = {t.grad(xn), t.grad(bn)};
          }
          return t.scalar_value(s);
        },
        {{"x", &x}, {"b", &b}}));
  }
  {
    std::vector<float> table = random_tensor(Shape{9, 5}, 118).data;
    const std::vector<int32_t> ids{1, 4, 7, 2, 0, 3, 5, 8};
    const std::vector<int32_t> mask{1, 1, 1, 1, 1, 1, 1, 0};
    Tensor r = random_tensor(Shape{2, 5}, 119);
    lines.push_back(check_one(
        "embedding+masked_mean_pool",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto tab = t.input(Tensor(Shape{9, 5}, table));
          auto pooled = t.masked_mean_pool(t.embedding(tab, ids, 2, 4, nullptr), mask);
          auto s = t.sum(t.mul(pooled, t.input(r)));
          if (g) {
            t.backward(s);
            *g = {t.grad(tab)};
          }
          return t.scalar_value(s);
        },
        {{"table", &table}}));
  }
  {
    std::vector<float> x = random_tensor(Shape{6, 5}, 120).data;
    Tensor r = random_tensor(Shape{6, 5}, 121);
    lines.push_back(check_one(
        "dropout",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto xn = t.input(Tensor(Shape{6, 5}, x));
          auto s = t.sum(t.mul(t.dropout(xn, 0.3f, 4242), t.input(r)));
          if (g) {
            t.backward(s);
            *g = {t.grad(xn)};
          }
          return t.scalar_value(s);
        },
        {{"x", &x}}));
  }
  {
    // pad-key masking feeding a softmax attention row
    std::vector<float> q = random_tensor(Shape{2, 3, 4}, 122).data;
    std::vector<float> k = random_tensor(Shape{2, 3, 4}, 123).data;
    std::vector<float> v = random_tensor(Shape{2, 3, 4}, 124).data;
    const std::vector<int32_t> mask{1, 1, 0, 1, 1, 1};
    lines.push_back(check_one(
        "attention_mask+softmax",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto qn = t.input(Tensor(Shape{2, 3, 4}, q));
          auto kn = t.input(Tensor(Shape{2, 3, 4}, k));
          auto vn = t.input(Tensor(Shape{2, 3, 4}, v));
          auto scores = t.attention_mask(t.scale(t.bmm_nt(qn, kn), 0.5), mask, 2, 1);
          auto s = t.sum(t.bmm(t.softmax(scores, 2), vn));
          if (g) {
            t.backward(s);
            *g = {t.grad(qn), t.grad(kn), t.grad(vn)};
          }
          return t.scalar_value(s);
        },
        {{"q", &q}, {"k", &k}, {"v", &v}}, 3e-3));
  }
  {
    std::vector<float> logits = random_tensor(Shape{2, 4, 5}, 125, 2.0f).data;
    const std::vector<int32_t> tags{0, 1, 2, 3, 4, 0, 1, 2};
    const std::vector<int32_t> mask{1, 1, 1, 0, 1, 1, 1, 1};
    lines.push_back(check_one(
        "nll_masked",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto ln = t.input(Tensor(Shape{2, 4, 5}, logits));
          auto s = t.nll_masked(ln, tags, mask);
          if (g) {
            t.backward(s);
            *g = {t.grad(ln)};
          }
          return t.scalar_value(s);
        },
        {{"logits", &logits}}));
  }
  {
    std::vector<float> logits = random_tensor(Shape{6, 2}, 126, 2.0f).data;
    const std::vector<int32_t> labels{0, 1, 0, 1, 1, 0};
    lines.push_back(check_one(
        "nll_rows",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto ln = t.input(Tensor(Shape{6, 2}, logits));
          auto s = t.scale(t.nll_rows(ln, labels), 1.0 / 6.0);
          if (g) {
            t.backward(s);
            *g = {t.grad(ln)};
          }
          return t.scalar_value(s);
        },
        {{"logits", &logits}}));
  }
  {
    std::vector<float> x = random_tensor(Shape{12}, 127).data;
    Tensor r = random_tensor(Shape{12}, 128);
    lines.push_back(check_one(
        "add/mul/scale/sum",
        [&](std::vector<std::vector<float>>* g) {
          ad::Tape t;
          auto xn = t.input(Tensor(Shape{12}, x));
          auto s = t.sum(t.mul(t.scale(t.add(xn, xn), 0.75), t.input(r)));
          if (g) {
            t.backward(s);
            *g = {t.grad(xn)};
          }
          return t.scalar_value(s);
        },
        {{"x", &x}}));
  }
  return lines;
}

// The reversal op is identity forward and definitionally disagrees with a
// finite difference through the same graph, so it is checked against its
// algebraic contract instead: grads with GRL == -lambda * grads without.
CheckLine grl_check() {
  Tensor x0 = random_tensor(Shape{7}, 129);
  Tensor r = random_tensor(Shape{7}, 130);
  const double lambda = 1.7;
  auto grads_for = [&](bool reversed) {
    ad::Tape t;
    auto xn = t.input(x0);
    auto h = t.gelu(xn);
    if (reversed) h = t.gradient_reversal(h, lambda);
    auto s = t.sum(t.mul(h, t.input(r)));
    t.backward(s);
    struct Out {
      std::vector<float> g;
      std::vector<float> fwd;
    };
    return Out{t.grad(xn), t.value(s).data};
  };
  const auto plain = grads_for(false);
  const auto rev = grads_for(true);
  CheckLine line{"gradient_reversal", 0.0, static_cast<int64_t>(plain.g.size())};
  if (plain.fwd != rev.fwd) line.max_err = 1.0;  // forward must be bit-identical
  for (size_t i = 0; i < plain.g.size(); ++i) {
    const double want = -lambda * static_cast<double>(plain.g[i]);
    const double got = rev.g[i];
    line.max_err = std::max(
        line.max_err, std::abs(got - want) / (std::abs(got) + std::abs(want) + 1e-8));
  }
  return line;
}

// Per-player finite differences of the joint objective: theta_n and theta_d
// against l_ner + alpha*l_adv, theta_f against its effective objective
// l_ner - alpha*lambda*l_adv (the reversed gradient is the exact gradient of
// that surrogate).
std::vector<CheckLine> model_checks() {
  model::ModelConfig mc;
  mc.vocab_size = 30;
  mc.d_model = 16;
  mc.n_heads = 2;
  mc.n_layers = 2;
  mc.d_ff = 32;
  mc.max_len = 8;
  mc.n_tags = 4;
  mc.dropout = 0.0f;
  model::ModelParams params = model::init_params(mc, 424242);
  const double alpha = 2.0, lambda = 1.0;

  auto make_batch = [&](uint64_t seed, bool tags) {
    SplitMix64 rng(seed);
    data::Batch b;
    b.rows = 3;
    b.len = 6;
    b.tokens.assign(18, 0);
    b.mask.assign(18, 0);
    if (tags) b.tags.assign(18, -1);
    for (int64_t r = 0; r < 3; ++r) {
      const int64_t real = 3 + static_cast<int64_t>(rng.below(4));
      for (int64_t l = 0; l < real; ++l) {
        b.tokens[static_cast<size_t>(r * 6 + l)] =
            2 + static_cast<int32_t>(rng.below(28));
        b.mask[static_cast<size_t>(r * 6 + l)] = 1;
        if (tags)
          b.tags[static_cast<size_t>(r * 6 + l)] = static_cast<int32_t>(rng.below(4));
      }
      b.domain.push_back(tags ? data::Domain::source : data::Domain::target);
      b.seq_index.push_back(r);
    }
    return b;
  };
  const data::Batch src = make_batch(7101, true);
  const data::Batch tgt = make_batch(7102, false);

  std::vector<CheckLine> lines;
  const struct {
    const char* name;
    model::ParamGroup group;
  } groups[] = {{"model/theta_n", model::ParamGroup::ner_head},
                {"model/theta_d", model::ParamGroup::domain_head},
                {"model/theta_f", model::ParamGroup::feature}};
  for (const auto& [name, group] : groups) {
    std::vector<ad::CheckedParam> checked;
    std::vector<size_t> indices;
    for (size_t i = 0; i < params.tensors.size(); ++i) {
      if (params.tensors[i].group != group) continue;
      checked.push_back({params.tensors[i].name, &params.tensors[i].tensor.data});
      indices.push_back(i);
    }
    auto fn = [&, group](std::vector<std::vector<float>>* grads) -> double {
      ad::Tape tape;
      model::ModelOnTape m(tape, params);
      const auto fs = m.encode(src, model::DropoutPlan{});
      const auto ft = m.encode(tgt, model::DropoutPlan{});
      const auto l_ner = losses::ner_loss(tape, m.ner_logits(fs), src.tags, src.mask);
      const auto l_adv = losses::domain_loss(tape, m.domain_logits(fs, src, lambda),
                                             m.domain_logits(ft, tgt, lambda));
      const auto total = losses::total_loss(tape, l_ner, l_adv, alpha);
      if (grads) {
        tape.backward(total);
        for (size_t i : indices) grads->push_back(tape.grad(m.param_nodes()[i]));
      }
      const double ner = tape.scalar_value(l_ner);
      const double adv = tape.scalar_value(l_adv);
      return group == model::ParamGroup::feature ? ner - alpha * lambda * adv
                                                 : ner + alpha * adv;
    };
    ad::GradCheckOptions opts;
    opts.h = 8e-3;
    opts.max_coords_per_param = 6;
    opts.grad_floor = 5e-3;  // f32 forward noise floor at this step size
    auto rep = ad::finite_diff_check(fn, std::move(checked), opts);
    lines.push_back({name, rep.max_rel_err, rep.coords_checked});
  }
  return lines;
}

}  // namespace

int cmd_gradcheck(std::ostream& out, std::ostream& err, double tolerance) {
  return guard(err, [&]() {
    std::vector<CheckLine> lines = op_checks();
    lines.push_back(grl_check());
    for (auto& l : model_checks()) lines.push_back(l);

    double worst = 0.0;
    bool ok = true;
    for (const auto& l : lines) {
      const bool pass = l.max_err < tolerance;
      ok = ok && pass;
      worst = std::max(worst, l.max_err);
      out << "gradcheck: " << std::left << std::setw(28) << l.name << " max rel err "
          << std::scientific << std::setprecision(2) << l.max_err << "  ("
          << l.coords << " coords)  " << (pass ? "ok" : "FAIL") << "\n";
    }
    out << (ok ? "PASS" : "FAIL") << ": worst " << std::scientific
        << std::setprecision(2) << worst << " vs tolerance " << tolerance << "\n";
    return ok ? kExitOk : kExitFailure;
  });
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              std::ostream& out, std::ostream& err) {
  return guard(err, [&]() {
    config::ExperimentConfig cfg = load_with_overrides(config_path, overrides);
    auto result = experiment::run_training(cfg, out);
    out << "wrote " << cfg.output_dir << "/checkpoint, history.jsonl, report.json\n";
    if (result.has_test) {
      out << "test: precision " << std::fixed << std::setprecision(4)
          << result.test.precision << " recall " << result.test.recall << " f1 "
          << result.test.f1 << "\n";
    }
    return kExitOk;
  });
}

int cmd_eval(const std::string& checkpoint_dir, const std::string& test_path,
             const std::string& report_path, std::ostream& out, std::ostream& err) {
  return guard(err, [&]() {
    trainer::TrainState state = trainer::load_checkpoint(checkpoint_dir);
    data::ParseOptions opts;
    opts.max_len = static_cast<int>(state.params.config.max_len);
    opts.warn = &err;
    auto test = data::parse_conll_file(test_path, opts);
    auto m = trainer::evaluate(state, test);
    nlohmann::json flat;
    for (const auto& [k, v] : metrics::flatten(m)) {
      flat[k] = v;
      out << k << " " << std::fixed << std::setprecision(6) << v << "\n";
    }
    const fs::path report = report_path.empty()
                                ? fs::path(checkpoint_dir) / "eval_report.json"
                                : fs::path(report_path);
    std::ofstream f(report, std::ios::binary);
    f << flat.dump(2) << "\n";
    return kExitOk;
  });
}

int cmd_predict(const std::string& checkpoint_dir, const std::string& input_path,
                const std::string& output_path, std::ostream& out, std::ostream& err) {
  return guard(err, [&]() {
    trainer::TrainState state = trainer::load_checkpoint(checkpoint_dir);
    data::ParseOptions opts;
    opts.max_len = static_cast<int>(state.params.config.max_len);
    opts.warn = &err;
    auto seqs = data::load_unlabeled_file(input_path, /*conll_format=*/false, opts);
    auto tags = trainer::predict_tags(state.params, state.vocab, seqs,
                                      state.config.batch_size);
    std::ofstream file;
    std::ostream* dst = &out;
    if (!output_path.empty()) {
      file.open(output_path, std::ios::binary);
      if (!file) throw DataError("cannot write " + output_path);
      dst = &file;
    }
    for (size_t i = 0; i < seqs.size(); ++i) {
      for (size_t j = 0; j < seqs[i].tokens.size(); ++j)
        (*dst) << seqs[i].tokens[j] << "\t" << tags[i][j] << "\n";
      (*dst) << "\n";
    }
    return kExitOk;
  });
}

int cmd_synth(const std::string& config_path, const std::vector<std::string>& overrides,
              std::ostream& out, std::ostream& err) {
  return guard(err, [&]() {
    config::ExperimentConfig cfg = load_with_overrides(config_path, overrides);
    if (!cfg.synth.present) throw ConfigError("synth: config has no synth section");
    auto corpora = experiment::make_synthetic_corpora(
        cfg.synth, synth::pair_mode_from_string(cfg.synth.mode), cfg.train.seed);
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    write_conll_file(dir / "source_train.conll", corpora.source_train);
    write_conll_file(dir / "source_dev.conll", corpora.source_dev);
    write_conll_file(dir / "source_test.conll", corpora.source_test);
    write_text_file(dir / "target.txt", corpora.target);

    // measured overlap goes into the stats file next to the corpora
    auto target_labeled = corpora.resolved_target;
    target_labeled.n_sentences = std::min<int64_t>(cfg.synth.n_target, 1000);
    std::istringstream tin(synth::generate(target_labeled));
    auto tgt_parsed = data::parse_conll(tin);
    nlohmann::json stats;
    stats["mode"] = cfg.synth.mode;
    stats["n_source_train"] = corpora.source_train.size();
    stats["n_source_dev"] = corpora.source_dev.size();
    stats["n_source_test"] = corpora.source_test.size();
    stats["n_target"] = corpora.target.size();
    stats["context_jaccard_source_target"] =
        synth::context_jaccard(corpora.source_train, tgt_parsed);
    std::ofstream sf(dir / "synth_stats.json", std::ios::binary);
    sf << stats.dump(2) << "\n";
    out << "wrote corpora to " << dir.string() << " (context jaccard "
        << std::fixed << std::setprecision(3)
        << stats["context_jaccard_source_target"].get<double>() << ")\n";
    return kExitOk;
  });
}

int cmd_experiment(const std::string& config_path,
                   const std::vector<std::string>& overrides, std::ostream& out,
                   std::ostream& err) {
  return guard(err, [&]() {
    config::ExperimentConfig cfg = load_with_overrides(config_path, overrides);
    auto report = experiment::run_experiment(cfg, out);
    experiment::write_report_files(report, cfg.output_dir);
    std::ifstream table(fs::path(cfg.output_dir) / "experiment_report.txt");
    out << table.rdbuf();
    out << "wrote " << cfg.output_dir << "/experiment_report.{json,txt}\n";
    return kExitOk;
  });
}

}  // namespace advner::cli

#include "CLI11.hpp"

namespace advner::cli {

int run(int argc, char** argv) {
  CLI::App app{"adversarial domain adaptation for NER (from-scratch C++)"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_dir, input_path, output_path, report_path;
  std::vector<std::string> overrides;

  auto* train = app.add_subcommand("train", "train a model from a JSON config");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--set", overrides, "dotted.path=value overrides");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a CoNLL test set");
  eval->add_option("checkpoint", checkpoint_dir, "checkpoint directory")->required();
  eval->add_option("test", input_path, "CoNLL test file")->required();
  eval->add_option("--report", report_path, "metrics report path");

  auto* predict = app.add_subcommand("predict", "tag plain text, one sentence per line");
  predict->add_option("checkpoint", checkpoint_dir, "checkpoint directory")->required();
  predict->add_option("input", input_path, "input text file")->required();
  predict->add_option("--out", output_path, "output file (default stdout)");

  auto* synth = app.add_subcommand("synth", "generate synthetic corpora from a config");
  synth->add_option("--config", config_path, "config file")->required();
  synth->add_option("--set", overrides, "dotted.path=value overrides");

  auto* exp = app.add_subcommand("experiment",
                                 "matched adapted/baseline runs over seeds and modes");
  exp->add_option("--config", config_path, "config file")->required();
  exp->add_option("--set", overrides, "dotted.path=value overrides");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  double tolerance = 1e-3;
  gradcheck->add_option("--tolerance", tolerance, "max relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  if (train->parsed())
    return cmd_train(config_path, overrides, std::cout, std::cerr);
  if (eval->parsed())
    return cmd_eval(checkpoint_dir, input_path, report_path, std::cout, std::cerr);
  if (predict->parsed())
    return cmd_predict(checkpoint_dir, input_path, output_path, std::cout, std::cerr);
  if (synth->parsed()) return cmd_synth(config_path, overrides, std::cout, std::cerr);
  if (exp->parsed()) return cmd_experiment(config_path, overrides, std::cout, std::cerr);
  if (gradcheck->parsed()) return cmd_gradcheck(std::cout, std::cerr, tolerance);
  return kExitConfig;
}

}  // namespace advner::cli
