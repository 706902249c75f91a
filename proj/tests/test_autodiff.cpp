#include <cmath>
#include <cstring>
#include <vector>

#include "advner/errors.hpp"
#include "advner/gradcheck.hpp"
#include "advner/rng.hpp"
#include "advner/tape.hpp"
#include "doctest.h"

using namespace advner;
using ad::NodeId;
using ad::Tape;

namespace {

Tensor random_tensor(Shape s, uint64_t seed, float scale = 1.0f) {
  SplitMix64 rng(seed);
  std::vector<float> d(static_cast<size_t>(s.numel()));
  for (auto& x : d) x = rng.uniform_float(-scale, scale);
  return Tensor(std::move(s), std::move(d));
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("matmul identity and hand product") {
  Tape t;
  NodeId eye = t.input(Tensor(Shape{2, 2}, {1, 0, 0, 1}));
  NodeId m = t.input(Tensor(Shape{2, 2}, {1, 2, 3, 4}));
  NodeId p = t.matmul(eye, m);
  CHECK(t.value(p).data == std::vector<float>{1, 2, 3, 4});

  NodeId a = t.input(Tensor(Shape{2, 2}, {1, 2, 3, 4}));
  NodeId b = t.input(Tensor(Shape{2, 2}, {5, 6, 7, 8}));
  NodeId c = t.matmul(a, b);
  CHECK(t.value(c).data == std::vector<float>{19, 22, 43, 50});
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tape t;
  NodeId a = t.input(Tensor::zeros(Shape{2, 3}));
  NodeId b = t.input(Tensor::zeros(Shape{2, 3}));
  CHECK_THROWS_AS(t.matmul(a, b), DimensionError);
  try {
    t.matmul(a, b);
  } catch (const DimensionError& e) {
    // error names both shapes
    CHECK(std::string(e.what()).find("[2 x 3]") != std::string::npos);
  }
}

TEST_CASE("matmul backward matches finite differences") {
  std::vector<float> wa = random_tensor(Shape{3, 4}, 31).data;
  std::vector<float> wb = random_tensor(Shape{4, 2}, 32).data;
  auto f = [&](std::vector<std::vector<float>>* grads) -> double {
    Tape t;
    NodeId a = t.input(Tensor(Shape{3, 4}, wa));
    NodeId b = t.input(Tensor(Shape{4, 2}, wb));
    NodeId s = t.sum(t.matmul(a, b));
    if (grads) {
      t.backward(s);
      *grads = {t.grad(a), t.grad(b)};
    }
    return t.scalar_value(s);
  };
  auto rep = ad::finite_diff_check(f, {{"a", &wa}, {"b", &wb}});
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("softmax known values") {
  Tape t;
  NodeId x = t.input(Tensor(Shape{2}, {0, 0}));
  NodeId y = t.softmax(x, 0);
  CHECK(t.value(y).data[0] == doctest::Approx(0.5f));
  CHECK(t.value(y).data[1] == doctest::Approx(0.5f));

  NodeId x2 = t.input(Tensor(Shape{2}, {std::log(2.0f), 0.0f}));
  NodeId y2 = t.softmax(x2, 0);
  CHECK(t.value(y2).data[0] == doctest::Approx(2.0f / 3.0f));
  CHECK(t.value(y2).data[1] == doctest::Approx(1.0f / 3.0f));

  NodeId x3 = t.input(Tensor(Shape{2}, {1000.0f, 0.0f}));
  NodeId y3 = t.softmax(x3, 0);
  CHECK(t.value(y3).data[0] == doctest::Approx(1.0f));
  CHECK(t.value(y3).data[1] == doctest::Approx(0.0f));
  CHECK(std::isfinite(t.value(y3).data[0]));

  NodeId bad = t.input(Tensor::zeros(Shape{2, 2}));
  CHECK_THROWS_AS(t.softmax(bad, 2), ContractError);
}

TEST_CASE("softmax gradient on a non-last axis") {
  std::vector<float> w = random_tensor(Shape{3, 4}, 33, 2.0f).data;
  auto f = [&](std::vector<std::vector<float>>* grads) -> double {
    Tape t;
    NodeId x = t.input(Tensor(Shape{3, 4}, w));
    NodeId r = t.input(random_tensor(Shape{3, 4}, 34));
    NodeId s = t.sum(t.mul(t.softmax(x, 0), r));
    if (grads) {
      t.backward(s);
      *grads = {t.grad(x)};
    }
    return t.scalar_value(s);
  };
  auto rep = ad::finite_diff_check(f, {{"x", &w}});
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("layer_norm constant row maps to beta") {
  Tape t;
  NodeId x = t.input(Tensor(Shape{1, 3}, {5, 5, 5}));
  NodeId g = t.input(Tensor(Shape{3}, {1, 1, 1}));
  NodeId b = t.input(Tensor(Shape{3}, {0, 0, 0}));
  NodeId y = t.layer_norm(x, g, b);
  for (float v : t.value(y).data) CHECK(v == doctest::Approx(0.0f));
}

TEST_CASE("layer_norm output is normalized") {
  Tape t;
  NodeId x = t.input(random_tensor(Shape{4, 16}, 35, 3.0f));
  NodeId g = t.input(Tensor(Shape{16}, std::vector<float>(16, 1.0f)));
  NodeId b = t.input(Tensor(Shape{16}, std::vector<float>(16, 0.0f)));
  NodeId y = t.layer_norm(x, g, b);
  for (int r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < 16; ++j) mean += t.value(y).data[static_cast<size_t>(r * 16 + j)];
    mean /= 16.0;
    for (int j = 0; j < 16; ++j) {
      const double d = t.value(y).data[static_cast<size_t>(r * 16 + j)] - mean;
      var += d * d;
    }
    var /= 16.0;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("layer_norm gradient matches central differences tightly") {
  std::vector<float> wx = random_tensor(Shape{3, 8}, 36).data;
  std::vector<float> wg = random_tensor(Shape{8}, 37, 0.5f).data;
  std::vector<float> wb = random_tensor(Shape{8}, 38, 0.5f).data;
  for (auto& v : wg) v += 1.0f;  // keep gamma away from zero
  Tensor r = random_tensor(Shape{3, 8}, 39);
  for (auto& v : r.data) v = v >= 0 ? 1.0f : -1.0f;
  auto f = [&](std::vector<std::vector<float>>* grads) -> double {
    Tape t;
    NodeId x = t.input(Tensor(Shape{3, 8}, wx));
    NodeId g = t.input(Tensor(Shape{8}, wg));
    NodeId b = t.input(Tensor(Shape{8}, wb));
    NodeId rr = t.input(r);
    NodeId s = t.sum(t.mul(t.layer_norm(x, g, b), rr));
    if (grads) {
      t.backward(s);
      *grads = {t.grad(x), t.grad(g), t.grad(b)};
    }
    return t.scalar_value(s);
  };
  ad::GradCheckOptions opts;
  opts.h = 1e-2;         // balances f32 forward noise against truncation
  opts.grad_floor = 0.1; // at f32 the 1e-4 regime exists only where signal >> noise
  auto rep = ad::finite_diff_check(f, {{"x", &wx}, {"gamma", &wg}, {"beta", &wb}}, opts);
  CHECK(rep.coords_checked > 8);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("gradient_reversal forward is bit-identical, backward is -lambda") {
  Tape t;
  Tensor in(Shape{2}, {1.0f, -2.0f});
  NodeId x = t.input(in);
  NodeId y = t.gradient_reversal(x, 1.0);
  CHECK(std::memcmp(t.value(y).data.data(), in.data.data(), 2 * sizeof(float)) == 0);

  // upstream [0.5, 0.5], lambda=1 -> parent grad [-0.5, -0.5]
  {
    Tape t2;
    NodeId a = t2.input(Tensor(Shape{2}, {3.0f, 4.0f}));
    NodeId g = t2.gradient_reversal(a, 1.0);
    NodeId w = t2.input(Tensor(Shape{2}, {0.5f, 0.5f}));
    NodeId loss = t2.sum(t2.mul(g, w));
    t2.backward(loss);
    CHECK(t2.grad(a)[0] == doctest::Approx(-0.5f));
    CHECK(t2.grad(a)[1] == doctest::Approx(-0.5f));
  }
  // upstream [1, 0], lambda=2 -> parent grad [-2, 0]
  {
    Tape t2;
    NodeId a = t2.input(Tensor(Shape{2}, {3.0f, 4.0f}));
    NodeId g = t2.gradient_reversal(a, 2.0);
    NodeId w = t2.input(Tensor(Shape{2}, {1.0f, 0.0f}));
    NodeId loss = t2.sum(t2.mul(g, w));
    t2.backward(loss);
    CHECK(t2.grad(a)[0] == doctest::Approx(-2.0f));
    CHECK(t2.grad(a)[1] == doctest::Approx(0.0f));
  }
  CHECK_THROWS_AS(t.gradient_reversal(x, -0.5), ConfigError);
}

TEST_CASE("gradient_reversal inserted on an edge flips exactly that gradient") {
  // loss = sum(gelu(x) * r) with and without a reversal on the gelu edge:
  // values equal, gradients scaled by -lambda.
  Tensor x0 = random_tensor(Shape{5}, 40);
  Tensor r0 = random_tensor(Shape{5}, 41);
  const double lambda = 1.7;
  auto build = [&](bool reversed, std::vector<float>* gx) -> float {
    Tape t;
    NodeId x = t.input(x0);
    NodeId h = t.gelu(x);
    if (reversed) h = t.gradient_reversal(h, lambda);
    NodeId loss = t.sum(t.mul(h, t.input(r0)));
    t.backward(loss);
    if (gx) *gx = t.grad(x);
    return t.value(loss).data[0];
  };
  std::vector<float> g_plain, g_rev;
  const float v_plain = build(false, &g_plain);
  const float v_rev = build(true, &g_rev);
  CHECK(v_plain == v_rev);
  for (size_t i = 0; i < g_plain.size(); ++i) {
    CHECK(g_rev[i] == doctest::Approx(static_cast<float>(-lambda) * g_plain[i])
                          .epsilon(1e-5));
  }
}

TEST_CASE("backward of sum gives all-ones gradient") {
  Tape t;
  NodeId w = t.input(random_tensor(Shape{2, 3, 2}, 42));
  NodeId s = t.sum(w);
  t.backward(s);
  for (float g : t.grad(w)) CHECK(g == 1.0f);
}

TEST_CASE("backward accumulates over repeated consumers: d(w*w)/dw = 2w") {
  Tape t;
  NodeId w = t.input(Tensor::scalar(3.0f));
  NodeId sq = t.mul(w, w);
  t.backward(sq);
  CHECK(t.grad(w)[0] == doctest::Approx(6.0f));
}

TEST_CASE("backward rejects non-scalar roots") {
  Tape t;
  NodeId w = t.input(Tensor::zeros(Shape{2, 2}));
  CHECK_THROWS_AS(t.backward(w), ContractError);
}

TEST_CASE("backward is deterministic") {
  Tape t;
  NodeId a = t.input(random_tensor(Shape{4, 4}, 43));
  NodeId b = t.input(random_tensor(Shape{4, 4}, 44));
  NodeId loss = t.sum(t.gelu(t.matmul(a, b)));
  t.backward(loss);
  const std::vector<float> g1 = t.grad(a);
  t.backward(loss);
  CHECK(std::memcmp(g1.data(), t.grad(a).data(), g1.size() * sizeof(float)) == 0);
}

TEST_CASE("forward op with non-finite output raises a numeric error") {
  Tape t;
  CHECK_THROWS_AS(
      t.input(Tensor(Shape{2}, {1.0f, std::numeric_limits<float>::infinity()})),
      NumericError);
  NodeId big = t.input(Tensor(Shape{2}, {3.0e38f, 3.0e38f}));
  CHECK_THROWS_AS(t.add(big, big), NumericError);
}

TEST_CASE("composite MLP loss gradients match finite differences") {
  std::vector<float> w1 = random_tensor(Shape{4, 8}, 45, 0.7f).data;
  std::vector<float> b1 = random_tensor(Shape{8}, 46, 0.2f).data;
  std::vector<float> w2 = random_tensor(Shape{8, 3}, 47, 0.7f).data;
  std::vector<float> b2 = random_tensor(Shape{3}, 48, 0.2f).data;
  Tensor x0 = random_tensor(Shape{6, 4}, 49);
  const std::vector<int32_t> labels{0, 2, 1, 1, 0, 2};
  auto f = [&](std::vector<std::vector<float>>* grads) -> double {
    Tape t;
    NodeId x = t.input(x0);
    NodeId n1 = t.input(Tensor(Shape{4, 8}, w1));
    NodeId n2 = t.input(Tensor(Shape{8}, b1));
    NodeId n3 = t.input(Tensor(Shape{8, 3}, w2));
    NodeId n4 = t.input(Tensor(Shape{3}, b2));
    NodeId h = t.gelu(t.bias_add(t.matmul(x, n1), n2));
    NodeId logits = t.bias_add(t.matmul(h, n3), n4);
    NodeId loss = t.nll_rows(logits, labels);
    if (grads) {
      t.backward(loss);
      *grads = {t.grad(n1), t.grad(n2), t.grad(n3), t.grad(n4)};
    }
    return t.scalar_value(loss);
  };
  ad::GradCheckOptions opts;
  opts.h = 1e-2;
  opts.grad_floor = 0.1;
  auto rep = ad::finite_diff_check(
      f, {{"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2}}, opts);
  CHECK(rep.coords_checked > 8);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("finite_diff_check on a linear objective is essentially exact") {
  std::vector<float> w = random_tensor(Shape{6}, 50).data;
  Tensor r = random_tensor(Shape{6}, 51);
  auto f = [&](std::vector<std::vector<float>>* grads) -> double {
    Tape t;
    NodeId x = t.input(Tensor(Shape{6}, w));
    NodeId s = t.sum(t.mul(x, t.input(r)));
    if (grads) {
      t.backward(s);
      *grads = {t.grad(x)};
    }
    return t.scalar_value(s);
  };
  auto rep = ad::finite_diff_check(f, {{"w", &w}});
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("finite_diff_check flags a broken backward") {
  std::vector<float> w = random_tensor(Shape{6}, 52).data;
  Tensor r = random_tensor(Shape{6}, 53);
  auto f = [&](std::vector<std::vector<float>>* grads) -> double {
    Tape t;
    NodeId x = t.input(Tensor(Shape{6}, w));
    NodeId s = t.sum(t.mul(x, t.input(r)));
    if (grads) {
      t.backward(s);
      *grads = {t.grad(x)};
      for (auto& g : (*grads)[0]) g = -g;  // deliberately wrong sign
    }
    return t.scalar_value(s);
  };
  auto rep = ad::finite_diff_check(f, {{"w", &w}});
  CHECK(rep.max_rel_err > 0.5);
}

TEST_CASE("finite_diff_check validates h and non-finite objectives") {
  std::vector<float> w{1.0f};
  auto f = [&](std::vector<std::vector<float>>* grads) -> double {
    if (grads) grads->assign(1, std::vector<float>{1.0f});
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(ad::finite_diff_check(f, {{"w", &w}}), NumericError);
  auto ok = [&](std::vector<std::vector<float>>* grads) -> double {
    if (grads) grads->assign(1, std::vector<float>{1.0f});
    return w[0];
  };
  ad::GradCheckOptions opts;
  opts.h = 0.0;
  CHECK_THROWS_AS(ad::finite_diff_check(ok, {{"w", &w}}, opts), ConfigError);
}

TEST_CASE("per-op gradients match finite differences on randomized inputs") {
  // dropout: mask is part of the function (fixed seed), so FD applies.
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    std::vector<float> w = random_tensor(Shape{4, 6}, 60 + seed).data;
    Tensor r = random_tensor(Shape{4, 6}, 70 + seed);
    auto f = [&](std::vector<std::vector<float>>* grads) -> double {
      Tape t;
      NodeId x = t.input(Tensor(Shape{4, 6}, w));
      NodeId d = t.dropout(x, 0.4f, 123 + seed);
      NodeId s = t.sum(t.mul(d, t.input(r)));
      if (grads) {
        t.backward(s);
        *grads = {t.grad(x)};
      }
      return t.scalar_value(s);
    };
    auto rep = ad::finite_diff_check(f, {{"x", &w}});
    CHECK(rep.max_rel_err < 1e-3);
  }

  // bias_add + gelu + bmm/bmm_nt chain
  std::vector<float> q = random_tensor(Shape{2, 3, 4}, 80).data;
  std::vector<float> k = random_tensor(Shape{2, 3, 4}, 81).data;
  std::vector<float> v = random_tensor(Shape{2, 3, 4}, 82).data;
  auto f2 = [&](std::vector<std::vector<float>>* grads) -> double {
    Tape t;
    NodeId qn = t.input(Tensor(Shape{2, 3, 4}, q));
    NodeId kn = t.input(Tensor(Shape{2, 3, 4}, k));
    NodeId vn = t.input(Tensor(Shape{2, 3, 4}, v));
    NodeId scores = t.softmax(t.scale(t.bmm_nt(qn, kn), 0.5), 2);
    NodeId ctx = t.bmm(scores, vn);
    NodeId s = t.sum(t.gelu(ctx));
    if (grads) {
      t.backward(s);
      *grads = {t.grad(qn), t.grad(kn), t.grad(vn)};
    }
    return t.scalar_value(s);
  };
  ad::GradCheckOptions attn_opts;
  attn_opts.h = 3e-3;
  auto rep2 = ad::finite_diff_check(f2, {{"q", &q}, {"k", &k}, {"v", &v}}, attn_opts);
  CHECK(rep2.max_rel_err < 1e-3);

  // embedding + masked_mean_pool
  std::vector<float> table = random_tensor(Shape{7, 5}, 83).data;
  const std::vector<int32_t> ids{1, 2, 3, 0, 4, 4, 5, 6};
  const std::vector<int32_t> mask{1, 1, 1, 0, 1, 1, 1, 1};
  Tensor rp = random_tensor(Shape{2, 5}, 84);
  auto f3 = [&](std::vector<std::vector<float>>* grads) -> double {
    Tape t;
    NodeId tab = t.input(Tensor(Shape{7, 5}, table));
    NodeId emb = t.embedding(tab, ids, 2, 4, nullptr);
    NodeId pooled = t.masked_mean_pool(emb, mask);
    NodeId s = t.sum(t.mul(pooled, t.input(rp)));
    if (grads) {
      t.backward(s);
      *grads = {t.grad(tab)};
    }
    return t.scalar_value(s);
  };
  auto rep3 = ad::finite_diff_check(f3, {{"table", &table}});
  CHECK(rep3.max_rel_err < 1e-3);

  // nll_masked over rank-3 logits
  std::vector<float> logits = random_tensor(Shape{2, 3, 4}, 85, 2.0f).data;
  const std::vector<int32_t> tags{0, 1, 2, 3, 0, 1};
  const std::vector<int32_t> tmask{1, 1, 0, 1, 1, 1};
  auto f4 = [&](std::vector<std::vector<float>>* grads) -> double {
    Tape t;
    NodeId ln = t.input(Tensor(Shape{2, 3, 4}, logits));
    NodeId s = t.nll_masked(ln, tags, tmask);
    if (grads) {
      t.backward(s);
      *grads = {t.grad(ln)};
    }
    return t.scalar_value(s);
  };
  auto rep4 = ad::finite_diff_check(f4, {{"logits", &logits}});
  CHECK(rep4.max_rel_err < 1e-3);
}

TEST_CASE("dropout scales kept values and seeds reproduce masks") {
  Tape t;
  Tensor x0(Shape{1000}, std::vector<float>(1000, 1.0f));
  NodeId x = t.input(x0);
  NodeId d1 = t.dropout(x, 0.25f, 999);
  NodeId d2 = t.dropout(x, 0.25f, 999);
  CHECK(t.value(d1).data == t.value(d2).data);
  int kept = 0;
  for (float v : t.value(d1).data) {
    if (v != 0.0f) {
      CHECK(v == doctest::Approx(1.0f / 0.75f));
      ++kept;
    }
  }
  CHECK(kept > 650);
  CHECK(kept < 850);
  CHECK_THROWS_AS(t.dropout(x, 1.0f, 1), ConfigError);
}

TEST_CASE("embedding rejects out-of-range ids with the sequence index") {
  Tape t;
  NodeId tab = t.input(Tensor::zeros(Shape{5, 3}));
  const std::vector<int32_t> ids{1, 2, 9, 0};
  try {
    t.embedding(tab, ids, 2, 2, nullptr);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("sequence 1") != std::string::npos);
  }
}

TEST_CASE("nll on gradient_reversal graph equals -lambda times plain gradient") {
  std::vector<float> w = random_tensor(Shape{3, 4}, 90).data;
  Tensor x0 = random_tensor(Shape{2, 3}, 91);
  const std::vector<int32_t> labels{1, 3};
  const double lambda = 2.5;
  auto grads_for = [&](bool reversed) {
    Tape t;
    NodeId x = t.input(x0);
    NodeId wn = t.input(Tensor(Shape{3, 4}, w));
    NodeId h = reversed ? t.gradient_reversal(x, lambda) : x;
    NodeId loss = t.nll_rows(t.matmul(h, wn), labels);
    t.backward(loss);
    return t.grad(x);
  };
  auto g_plain = grads_for(false);
  auto g_rev = grads_for(true);
  for (size_t i = 0; i < g_plain.size(); ++i)
    CHECK(g_rev[i] == doctest::Approx(static_cast<float>(-lambda) * g_plain[i])
                          .epsilon(1e-5));
}

}  // TEST_SUITE
