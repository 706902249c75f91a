#include "advner/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "advner/errors.hpp"
#include "advner/kernels.hpp"
#include "advner/rng.hpp"

namespace advner::ad {

namespace {

constexpr int64_t kGrain = 1 << 14;

void accumulate(float* dst, const float* src, int64_t n) {
  kernels::axpy_accumulate(n, src, dst);
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

// Counter-based dropout decision; independent of evaluation order.
inline bool dropout_keep(uint64_t seed, int64_t i, float rate) {
  const uint64_t r = mix64(seed, static_cast<uint64_t>(i));
  const double u = static_cast<double>(r >> 11) * 0x1.0p-53;
  return u >= static_cast<double>(rate);
}

constexpr float kMaskPenalty = -1e9f;

}  // namespace

NodeId Tape::push(Tensor value, std::vector<NodeId> parents,
                  std::function<void(Tape&, NodeId)> backward_fn, std::string op) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.backward_fn = std::move(backward_fn);
  n.op = std::move(op);
  nodes_.push_back(std::move(n));
  const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
  if (check_finite_) check_node_finite(id);
  return id;
}

void Tape::check_node_finite(NodeId id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (!kernels::all_finite(n.value.numel(), n.value.ptr())) {
    throw NumericError("non-finite value produced by op '" + n.op + "' (node " +
                       std::to_string(id) + ")");
  }
}

NodeId Tape::input(Tensor value) { return push(std::move(value), {}, nullptr, "input"); }

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.shape == tb.shape,
          "add: shape mismatch " + ta.shape.str() + " vs " + tb.shape.str());
  Tensor out(ta.shape, ta.data);
  accumulate(out.ptr(), tb.ptr(), tb.numel());
  NodeId id = push(std::move(out), {a, b},
                   [a, b](Tape& t, NodeId self) {
                     const auto& g = t.grads_[static_cast<size_t>(self)];
                     accumulate(t.grad_ptr(a), g.data(), static_cast<int64_t>(g.size()));
                     accumulate(t.grad_ptr(b), g.data(), static_cast<int64_t>(g.size()));
                   },
                   "add");
  if (value(id).numel() == 1) {
    set_precise(id, scalar_value(a) + scalar_value(b));
  }
  return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.shape == tb.shape,
          "mul: shape mismatch " + ta.shape.str() + " vs " + tb.shape.str());
  Tensor out = Tensor::zeros(ta.shape);
  for (int64_t i = 0; i < ta.numel(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  return push(std::move(out), {a, b},
              [a, b](Tape& t, NodeId self) {
                const auto& g = t.grads_[static_cast<size_t>(self)];
                const float* va = t.value_ptr(a);
                const float* vb = t.value_ptr(b);
                float* ga = t.grad_ptr(a);
                float* gb = t.grad_ptr(b);
                const int64_t n = static_cast<int64_t>(g.size());
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (n > kGrain)
                for (int64_t i = 0; i < n; ++i) {
                  ga[i] += g[i] * vb[i];
                  gb[i] += g[i] * va[i];
                }
              },
              "mul");
}

NodeId Tape::scale(NodeId a, double c) {
  const Tensor& ta = value(a);
  Tensor out = Tensor::zeros(ta.shape);
  for (int64_t i = 0; i < ta.numel(); ++i)
    out.data[i] = static_cast<float>(ta.data[i] * c);
  NodeId id = push(std::move(out), {a},
                   [a, c](Tape& t, NodeId self) {
                     const auto& g = t.grads_[static_cast<size_t>(self)];
                     float* ga = t.grad_ptr(a);
                     const int64_t n = static_cast<int64_t>(g.size());
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (n > kGrain)
                     for (int64_t i = 0; i < n; ++i)
                       ga[i] += static_cast<float>(g[i] * c);
                   },
                   "scale");
  if (value(id).numel() == 1) set_precise(id, scalar_value(a) * c);
  return id;
}

NodeId Tape::bias_add(NodeId x, NodeId b) {
  const Tensor& tx = value(x);
  const Tensor& tb = value(b);
  require(tb.shape.rank() == 1, "bias_add: bias must be rank 1, got " + tb.shape.str());
  const int64_t width = tb.shape.dim(0);
  require(tx.shape.rank() >= 1 && tx.shape.dim(tx.shape.rank() - 1) == width,
          "bias_add: last dim of " + tx.shape.str() + " != bias " + tb.shape.str());
  const int64_t rows = tx.numel() / width;
  Tensor out(tx.shape, tx.data);
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (rows * width > kGrain)
  for (int64_t r = 0; r < rows; ++r) {
    float* row = out.ptr() + r * width;
    const float* bias = tb.ptr();
    for (int64_t j = 0; j < width; ++j) row[j] += bias[j];
  }
  return push(std::move(out), {x, b},
              [x, b, rows, width](Tape& t, NodeId self) {
                const auto& g = t.grads_[static_cast<size_t>(self)];
                accumulate(t.grad_ptr(x), g.data(), static_cast<int64_t>(g.size()));
                float* gb = t.grad_ptr(b);
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (rows * width > kGrain)
                for (int64_t j = 0; j < width; ++j) {
                  double acc = 0.0;
                  for (int64_t r = 0; r < rows; ++r) acc += g[r * width + j];
                  gb[j] += static_cast<float>(acc);
                }
              },
              "bias_add");
}

NodeId Tape::sum(NodeId x) {
  const Tensor& tx = value(x);
  const double total = kernels::sum_all(tx.numel(), tx.ptr());
  Tensor out = Tensor::scalar(static_cast<float>(total));
  NodeId id = push(std::move(out), {x},
                   [x](Tape& t, NodeId self) {
                     const float g = t.grads_[static_cast<size_t>(self)][0];
                     float* gx = t.grad_ptr(x);
                     const int64_t n = t.value(x).numel();
                     for (int64_t i = 0; i < n; ++i) gx[i] += g;
                   },
                   "sum");
  set_precise(id, total);
  return id;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(tb.shape.rank() == 2, "matmul: right operand must be rank 2, got " +
                                    tb.shape.str());
  require(ta.shape.rank() == 2 || ta.shape.rank() == 3,
          "matmul: left operand must be rank 2 or 3, got " + ta.shape.str());
  const int64_t k = ta.shape.dim(ta.shape.rank() - 1);
  if (k != tb.shape.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + ta.shape.str() + " vs " +
                         tb.shape.str());
  }
  const int64_t n = tb.shape.dim(1);
  const int64_t rows = ta.numel() / k;
  Shape out_shape = ta.shape;
  out_shape.dims.back() = n;
  Tensor out = Tensor::zeros(out_shape);
  kernels::gemm_nn(rows, k, n, ta.ptr(), tb.ptr(), out.ptr());
  return push(std::move(out), {a, b},
              [a, b, rows, k, n](Tape& t, NodeId self) {
                const auto& g = t.grads_[static_cast<size_t>(self)];
                // da = g . b^T
                std::vector<float> da(static_cast<size_t>(rows * k));
                kernels::gemm_nt(rows, n, k, g.data(), t.value_ptr(b), da.data());
                accumulate(t.grad_ptr(a), da.data(), rows * k);
                // db = a^T . g
                std::vector<float> db(static_cast<size_t>(k * n));
                kernels::gemm_tn(k, rows, n, t.value_ptr(a), g.data(), db.data());
                accumulate(t.grad_ptr(b), db.data(), k * n);
              },
              "matmul");
}

NodeId Tape::bmm(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.shape.rank() == 3 && tb.shape.rank() == 3,
          "bmm: operands must be rank 3, got " + ta.shape.str() + " and " +
              tb.shape.str());
  const int64_t g = ta.shape.dim(0), m = ta.shape.dim(1), k = ta.shape.dim(2);
  if (tb.shape.dim(0) != g || tb.shape.dim(1) != k) {
    throw DimensionError("bmm: incompatible shapes " + ta.shape.str() + " vs " +
                         tb.shape.str());
  }
  const int64_t n = tb.shape.dim(2);
  Tensor out = Tensor::zeros(Shape{g, m, n});
  kernels::bmm_nn(g, m, k, n, ta.ptr(), tb.ptr(), out.ptr());
  return push(std::move(out), {a, b},
              [a, b, g, m, k, n](Tape& t, NodeId self) {
                const auto& gr = t.grads_[static_cast<size_t>(self)];
                std::vector<float> da(static_cast<size_t>(g * m * k));
                kernels::bmm_nt(g, m, n, k, gr.data(), t.value_ptr(b), da.data());
                accumulate(t.grad_ptr(a), da.data(), g * m * k);
                std::vector<float> db(static_cast<size_t>(g * k * n));
                kernels::bmm_tn(g, k, m, n, t.value_ptr(a), gr.data(), db.data());
                accumulate(t.grad_ptr(b), db.data(), g * k * n);
              },
              "bmm");
}

NodeId Tape::bmm_nt(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.shape.rank() == 3 && tb.shape.rank() == 3,
          "bmm_nt: operands must be rank 3, got " + ta.shape.str() + " and " +
              tb.shape.str());
  const int64_t g = ta.shape.dim(0), m = ta.shape.dim(1), k = ta.shape.dim(2);
  if (tb.shape.dim(0) != g || tb.shape.dim(2) != k) {
    throw DimensionError("bmm_nt: incompatible shapes " + ta.shape.str() + " vs " +
                         tb.shape.str());
  }
  const int64_t n = tb.shape.dim(1);
  Tensor out = Tensor::zeros(Shape{g, m, n});
  kernels::bmm_nt(g, m, k, n, ta.ptr(), tb.ptr(), out.ptr());
  return push(std::move(out), {a, b},
              [a, b, g, m, k, n](Tape& t, NodeId self) {
                const auto& gr = t.grads_[static_cast<size_t>(self)];
                // da[s] = g[s] . b[s]
                std::vector<float> da(static_cast<size_t>(g * m * k));
                kernels::bmm_nn(g, m, n, k, gr.data(), t.value_ptr(b), da.data());
                accumulate(t.grad_ptr(a), da.data(), g * m * k);
                // db[s] = g[s]^T . a[s]
                std::vector<float> db(static_cast<size_t>(g * n * k));
                kernels::bmm_tn(g, n, m, k, gr.data(), t.value_ptr(a), db.data());
                accumulate(t.grad_ptr(b), db.data(), g * n * k);
              },
              "bmm_nt");
}

NodeId Tape::softmax(NodeId x, int axis) {
  const Tensor& tx = value(x);
  const int rank = tx.shape.rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ContractError("softmax: axis " + std::to_string(axis) +
                        " out of range for shape " + tx.shape.str());
  }
  const int64_t width = tx.shape.dim(axis);
  int64_t inner = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= tx.shape.dim(i);
  const int64_t outer = tx.numel() / (width * inner);
  Tensor out = Tensor::zeros(tx.shape);
  if (inner == 1) {
    kernels::softmax_rows(outer, width, tx.ptr(), out.ptr());
  } else {
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        const int64_t base = o * width * inner + in;
        float mx = tx.data[base];
        for (int64_t t2 = 1; t2 < width; ++t2)
          mx = std::max(mx, tx.data[base + t2 * inner]);
        double denom = 0.0;
        for (int64_t t2 = 0; t2 < width; ++t2) {
          const float e = std::exp(tx.data[base + t2 * inner] - mx);
          out.data[base + t2 * inner] = e;
          denom += e;
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (int64_t t2 = 0; t2 < width; ++t2) out.data[base + t2 * inner] *= inv;
      }
    }
  }
  return push(std::move(out), {x},
              [x, outer, width, inner](Tape& t, NodeId self) {
                const auto& g = t.grads_[static_cast<size_t>(self)];
                const float* y = t.value_ptr(self);
                float* gx = t.grad_ptr(x);
                const int64_t lines = outer * inner;
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (lines * width > kGrain)
                for (int64_t line = 0; line < lines; ++line) {
                  const int64_t o = line / inner;
                  const int64_t in = line % inner;
                  const int64_t base = o * width * inner + in;
                  double dot = 0.0;
                  for (int64_t t2 = 0; t2 < width; ++t2) {
                    const int64_t idx = base + t2 * inner;
                    dot += static_cast<double>(g[idx]) * y[idx];
                  }
                  for (int64_t t2 = 0; t2 < width; ++t2) {
                    const int64_t idx = base + t2 * inner;
                    gx[idx] += y[idx] * static_cast<float>(g[idx] - dot);
                  }
                }
              },
              "softmax");
}

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, float eps) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gamma);
  const Tensor& tb = value(beta);
  const int64_t width = tx.shape.dim(tx.shape.rank() - 1);
  require(tg.shape.rank() == 1 && tg.shape.dim(0) == width,
          "layer_norm: gamma " + tg.shape.str() + " does not match last dim of " +
              tx.shape.str());
  require(tb.shape.rank() == 1 && tb.shape.dim(0) == width,
          "layer_norm: beta " + tb.shape.str() + " does not match last dim of " +
              tx.shape.str());
  const int64_t rows = tx.numel() / width;
  Tensor out = Tensor::zeros(tx.shape);
  auto mean = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
  auto rstd = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
  kernels::layer_norm_rows(rows, width, tx.ptr(), tg.ptr(), tb.ptr(), eps, out.ptr(),
                           mean->data(), rstd->data());
  return push(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, rows, width, mean, rstd](Tape& t, NodeId self) {
        const auto& g = t.grads_[static_cast<size_t>(self)];
        const float* xv = t.value_ptr(x);
        const float* gv = t.value_ptr(gamma);
        float* gx = t.grad_ptr(x);
        float* gg = t.grad_ptr(gamma);
        float* gb = t.grad_ptr(beta);
        // dgamma/dbeta: deterministic column sums (rows accumulated in order).
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (rows * width > kGrain)
        for (int64_t j = 0; j < width; ++j) {
          double sg = 0.0, sb = 0.0;
          for (int64_t r = 0; r < rows; ++r) {
            const int64_t idx = r * width + j;
            const float xhat = (xv[idx] - (*mean)[r]) * (*rstd)[r];
            sg += static_cast<double>(g[idx]) * xhat;
            sb += g[idx];
          }
          gg[j] += static_cast<float>(sg);
          gb[j] += static_cast<float>(sb);
        }
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (rows * width > kGrain)
        for (int64_t r = 0; r < rows; ++r) {
          const float mu = (*mean)[r];
          const float rs = (*rstd)[r];
          double m1 = 0.0, m2 = 0.0;  // mean(gamma*g), mean(gamma*g*xhat)
          for (int64_t j = 0; j < width; ++j) {
            const int64_t idx = r * width + j;
            const double gg2 = static_cast<double>(gv[j]) * g[idx];
            m1 += gg2;
            m2 += gg2 * ((xv[idx] - mu) * rs);
          }
          m1 /= static_cast<double>(width);
          m2 /= static_cast<double>(width);
          for (int64_t j = 0; j < width; ++j) {
            const int64_t idx = r * width + j;
            const double xhat = (xv[idx] - mu) * rs;
            const double gg2 = static_cast<double>(gv[j]) * g[idx];
            gx[idx] += static_cast<float>((gg2 - m1 - xhat * m2) * rs);
          }
        }
      },
      "layer_norm");
}

NodeId Tape::gelu(NodeId x) {
  const Tensor& tx = value(x);
  Tensor out = Tensor::zeros(tx.shape);
  kernels::gelu(tx.numel(), tx.ptr(), out.ptr());
  return push(std::move(out), {x},
              [x](Tape& t, NodeId self) {
                const auto& g = t.grads_[static_cast<size_t>(self)];
                std::vector<float> gx(g.size());
                kernels::gelu_grad(static_cast<int64_t>(g.size()), t.value_ptr(x),
                                   g.data(), gx.data());
                accumulate(t.grad_ptr(x), gx.data(), static_cast<int64_t>(gx.size()));
              },
              "gelu");
}

NodeId Tape::gradient_reversal(NodeId x, double lambda) {
  if (lambda < 0.0) {
    throw ConfigError("gradient_reversal: lambda must be >= 0, got " +
                      std::to_string(lambda));
  }
  const Tensor& tx = value(x);
  Tensor out = tx;  // bit-identical forward
  return push(std::move(out), {x},
              [x, lambda](Tape& t, NodeId self) {
                const auto& g = t.grads_[static_cast<size_t>(self)];
                float* gx = t.grad_ptr(x);
                const int64_t n = static_cast<int64_t>(g.size());
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (n > kGrain)
                for (int64_t i = 0; i < n; ++i)
                  gx[i] += static_cast<float>(-lambda * g[i]);
              },
              "gradient_reversal");
}

NodeId Tape::dropout(NodeId x, float rate, uint64_t seed) {
  if (rate < 0.0f || rate >= 1.0f) {
    throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  if (rate == 0.0f) return x;
  const Tensor& tx = value(x);
  const float keep_scale = 1.0f / (1.0f - rate);
  Tensor out = Tensor::zeros(tx.shape);
  const int64_t n_elems = tx.numel();
  float* op = out.ptr();
  const float* xp = tx.ptr();
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (n_elems > kGrain)
  for (int64_t i = 0; i < n_elems; ++i)
    op[i] = dropout_keep(seed, i, rate) ? xp[i] * keep_scale : 0.0f;
  return push(std::move(out), {x},
              [x, rate, seed, keep_scale](Tape& t, NodeId self) {
                const auto& g = t.grads_[static_cast<size_t>(self)];
                float* gx = t.grad_ptr(x);
                const int64_t n = static_cast<int64_t>(g.size());
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (n > kGrain)
                for (int64_t i = 0; i < n; ++i) {
                  if (dropout_keep(seed, i, rate)) gx[i] += g[i] * keep_scale;
                }
              },
              "dropout");
}

NodeId Tape::embedding(NodeId table, const std::vector<int32_t>& ids, int64_t rows,
                       int64_t len, const Tensor* pos) {
  const Tensor& tt = value(table);
  require(tt.shape.rank() == 2, "embedding: table must be rank 2, got " +
                                    tt.shape.str());
  const int64_t vocab = tt.shape.dim(0);
  const int64_t d = tt.shape.dim(1);
  if (static_cast<int64_t>(ids.size()) != rows * len) {
    throw ContractError("embedding: ids length does not match rows*len");
  }
  if (pos) {
    require(pos->shape.rank() == 2 && pos->shape.dim(0) >= len &&
                pos->shape.dim(1) == d,
            "embedding: positional table " + pos->shape.str() +
                " too small for len " + std::to_string(len));
  }
  for (int64_t i = 0; i < rows * len; ++i) {
    const int32_t id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= vocab) {
      throw DataError("embedding: token id " + std::to_string(id) +
                      " out of range [0," + std::to_string(vocab) +
                      ") in sequence " + std::to_string(i / len) + " position " +
                      std::to_string(i % len));
    }
  }
  Tensor out = Tensor::zeros(Shape{rows, len, d});
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (rows * len * d > kGrain)
  for (int64_t i = 0; i < rows * len; ++i) {
    const int64_t l = i % len;
    const int32_t id = ids[static_cast<size_t>(i)];
    float* o = out.ptr() + i * d;
    const float* src = tt.ptr() + static_cast<int64_t>(id) * d;
    const float* pv = pos ? pos->ptr() + l * d : nullptr;
    for (int64_t c = 0; c < d; ++c) o[c] = pv ? src[c] + pv[c] : src[c];
  }
  auto ids_copy = std::make_shared<std::vector<int32_t>>(ids);
  return push(std::move(out), {table},
              [table, ids_copy, rows, len, d](Tape& t, NodeId self) {
                const auto& g = t.grads_[static_cast<size_t>(self)];
                float* gt = t.grad_ptr(table);
                // Duplicate ids collide, so the scatter-add parallelizes over
                // feature columns; positions stay in fixed order per column.
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (rows * len * d > kGrain)
                for (int64_t c = 0; c < d; ++c) {
                  for (int64_t i = 0; i < rows * len; ++i) {
                    const int32_t id = (*ids_copy)[static_cast<size_t>(i)];
                    gt[static_cast<int64_t>(id) * d + c] += g[i * d + c];
                  }
                }
              },
              "embedding");
}

NodeId Tape::attention_mask(NodeId scores, const std::vector<int32_t>& mask,
                            int64_t batch, int64_t heads) {
  const Tensor& ts = value(scores);
  require(ts.shape.rank() == 3, "attention_mask: scores must be rank 3, got " +
                                    ts.shape.str());
  const int64_t g = ts.shape.dim(0);
  const int64_t lq = ts.shape.dim(1);
  const int64_t lk = ts.shape.dim(2);
  require(g == batch * heads, "attention_mask: group dim " + std::to_string(g) +
                                  " != batch*heads");
  if (static_cast<int64_t>(mask.size()) != batch * lk) {
    throw ContractError("attention_mask: mask length does not match batch*len");
  }
  Tensor out(ts.shape, ts.data);
  auto mask_copy0 = std::make_shared<std::vector<int32_t>>(mask);
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (g * lq * lk > kGrain)
  for (int64_t s = 0; s < g; ++s) {
    const int64_t b = s / heads;
    for (int64_t i = 0; i < lq; ++i) {
      float* row = out.ptr() + (s * lq + i) * lk;
      for (int64_t j = 0; j < lk; ++j) {
        if ((*mask_copy0)[static_cast<size_t>(b * lk + j)] == 0) row[j] += kMaskPenalty;
      }
    }
  }
  return push(std::move(out), {scores},
              [scores](Tape& t, NodeId self) {
                const auto& g2 = t.grads_[static_cast<size_t>(self)];
                accumulate(t.grad_ptr(scores), g2.data(),
                           static_cast<int64_t>(g2.size()));
              },
              "attention_mask");
}

NodeId Tape::masked_mean_pool(NodeId x, const std::vector<int32_t>& mask) {
  const Tensor& tx = value(x);
  require(tx.shape.rank() == 3, "masked_mean_pool: input must be rank 3, got " +
                                    tx.shape.str());
  const int64_t b = tx.shape.dim(0), len = tx.shape.dim(1), d = tx.shape.dim(2);
  if (static_cast<int64_t>(mask.size()) != b * len) {
    throw ContractError("masked_mean_pool: mask length does not match batch*len");
  }
  auto counts = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(b), 0);
  for (int64_t r = 0; r < b; ++r) {
    int64_t c = 0;
    for (int64_t l = 0; l < len; ++l) c += mask[static_cast<size_t>(r * len + l)] != 0;
    if (c == 0) throw ContractError("masked_mean_pool: row " + std::to_string(r) +
                                    " has no unmasked positions");
    (*counts)[static_cast<size_t>(r)] = c;
  }
  Tensor out = Tensor::zeros(Shape{b, d});
  for (int64_t r = 0; r < b; ++r) {
    for (int64_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (int64_t l = 0; l < len; ++l) {
        if (mask[static_cast<size_t>(r * len + l)]) acc += tx.data[(r * len + l) * d + c];
      }
      out.data[r * d + c] =
          static_cast<float>(acc / static_cast<double>((*counts)[static_cast<size_t>(r)]));
    }
  }
  auto mask_copy = std::make_shared<std::vector<int32_t>>(mask);
  return push(std::move(out), {x},
              [x, mask_copy, counts, b, len, d](Tape& t, NodeId self) {
                const auto& g = t.grads_[static_cast<size_t>(self)];
                float* gx = t.grad_ptr(x);
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (b * len * d > kGrain)
                for (int64_t r = 0; r < b; ++r) {
                  const float inv =
                      1.0f / static_cast<float>((*counts)[static_cast<size_t>(r)]);
                  for (int64_t l = 0; l < len; ++l) {
                    if (!(*mask_copy)[static_cast<size_t>(r * len + l)]) continue;
                    const float* gr = g.data() + r * d;
                    float* dst = gx + (r * len + l) * d;
                    for (int64_t c = 0; c < d; ++c) dst[c] += gr[c] * inv;
                  }
                }
              },
              "masked_mean_pool");
}

NodeId Tape::split_heads(NodeId x, int64_t heads) {
  const Tensor& tx = value(x);
  require(tx.shape.rank() == 3, "split_heads: input must be rank 3, got " +
                                    tx.shape.str());
  const int64_t b = tx.shape.dim(0), len = tx.shape.dim(1), d = tx.shape.dim(2);
  require(d % heads == 0, "split_heads: model dim " + std::to_string(d) +
                              " not divisible by heads " + std::to_string(heads));
  const int64_t dh = d / heads;
  Tensor out = Tensor::zeros(Shape{b * heads, len, dh});
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (b * heads * len * dh > kGrain)
  for (int64_t s = 0; s < b * heads; ++s) {
    const int64_t bi = s / heads, h = s % heads;
    for (int64_t l = 0; l < len; ++l) {
      const float* src = tx.ptr() + (bi * len + l) * d + h * dh;
      float* dst = out.ptr() + (s * len + l) * dh;
      std::copy(src, src + dh, dst);
    }
  }
  return push(std::move(out), {x},
              [x, b, heads, len, dh, d](Tape& t, NodeId self) {
                const auto& g = t.grads_[static_cast<size_t>(self)];
                float* gx = t.grad_ptr(x);
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (b * heads * len * dh > kGrain)
                for (int64_t s = 0; s < b * heads; ++s) {
                  const int64_t bi = s / heads, h = s % heads;
                  for (int64_t l = 0; l < len; ++l) {
                    const float* src = g.data() + (s * len + l) * dh;
                    float* dst = gx + (bi * len + l) * d + h * dh;
                    for (int64_t cc = 0; cc < dh; ++cc) dst[cc] += src[cc];
                  }
                }
              },
              "split_heads");
}

NodeId Tape::merge_heads(NodeId x, int64_t heads) {
  const Tensor& tx = value(x);
  require(tx.shape.rank() == 3, "merge_heads: input must be rank 3, got " +
                                    tx.shape.str());
  const int64_t g = tx.shape.dim(0), len = tx.shape.dim(1), dh = tx.shape.dim(2);
  require(g % heads == 0, "merge_heads: group dim " + std::to_string(g) +
                              " not divisible by heads " + std::to_string(heads));
  const int64_t b = g / heads;
  const int64_t d = dh * heads;
  Tensor out = Tensor::zeros(Shape{b, len, d});
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (b * heads * len * dh > kGrain)
  for (int64_t s = 0; s < b * heads; ++s) {
    const int64_t bi = s / heads, h = s % heads;
    for (int64_t l = 0; l < len; ++l) {
      const float* src = tx.ptr() + (s * len + l) * dh;
      float* dst = out.ptr() + (bi * len + l) * d + h * dh;
      std::copy(src, src + dh, dst);
    }
  }
  return push(std::move(out), {x},
              [x, b, heads, len, dh, d](Tape& t, NodeId self) {
                const auto& gr = t.grads_[static_cast<size_t>(self)];
                float* gx = t.grad_ptr(x);
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (b * heads * len * dh > kGrain)
                for (int64_t s = 0; s < b * heads; ++s) {
                  const int64_t bi = s / heads, h = s % heads;
                  for (int64_t l = 0; l < len; ++l) {
                    const float* src = gr.data() + (bi * len + l) * d + h * dh;
                    float* dst = gx + (s * len + l) * dh;
                    for (int64_t cc = 0; cc < dh; ++cc) dst[cc] += src[cc];
                  }
                }
              },
              "merge_heads");
}

namespace {

// Stable log-sum-exp of one row, double accumulation.
inline double row_lse(const float* row, int64_t width) {
  float mx = row[0];
  for (int64_t j = 1; j < width; ++j) mx = std::max(mx, row[j]);
  double acc = 0.0;
  for (int64_t j = 0; j < width; ++j) acc += std::exp(static_cast<double>(row[j]) - mx);
  return static_cast<double>(mx) + std::log(acc);
}

}  // namespace

NodeId Tape::nll_masked(NodeId logits, const std::vector<int32_t>& targets,
                        const std::vector<int32_t>& mask) {
  const Tensor& tl = value(logits);
  require(tl.shape.rank() == 3, "nll_masked: logits must be rank 3, got " +
                                    tl.shape.str());
  const int64_t b = tl.shape.dim(0), len = tl.shape.dim(1), c = tl.shape.dim(2);
  if (static_cast<int64_t>(targets.size()) != b * len ||
      static_cast<int64_t>(mask.size()) != b * len) {
    throw ContractError("nll_masked: targets/mask length does not match batch*len");
  }
  int64_t n_real = 0;
  double total = 0.0;
  for (int64_t i = 0; i < b * len; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    const int32_t tgt = targets[static_cast<size_t>(i)];
    if (tgt < 0 || tgt >= c) {
      throw DataError("nll_masked: tag id " + std::to_string(tgt) + " >= n_tags " +
                      std::to_string(c) + " at sequence " + std::to_string(i / len) +
                      " position " + std::to_string(i % len));
    }
    const float* row = tl.ptr() + i * c;
    total += row_lse(row, c) - static_cast<double>(row[tgt]);
    ++n_real;
  }
  if (n_real == 0) throw ContractError("nll_masked: mask has no real positions");
  const double mean = total / static_cast<double>(n_real);
  Tensor out = Tensor::scalar(static_cast<float>(mean));
  auto tgt_copy = std::make_shared<std::vector<int32_t>>(targets);
  auto mask_copy = std::make_shared<std::vector<int32_t>>(mask);
  NodeId id = push(
      std::move(out), {logits},
      [logits, tgt_copy, mask_copy, b, len, c, n_real](Tape& t, NodeId self) {
        const float g = t.grads_[static_cast<size_t>(self)][0];
        const float* lv = t.value_ptr(logits);
        float* gl = t.grad_ptr(logits);
        const float scale = g / static_cast<float>(n_real);
#pragma omp parallel for schedule(static) \
    num_threads(kernels::thread_budget()) if (b * len * c > kGrain)
        for (int64_t i = 0; i < b * len; ++i) {
          if (!(*mask_copy)[static_cast<size_t>(i)]) continue;
          const float* row = lv + i * c;
          const double lse = row_lse(row, c);
          const int32_t tgt = (*tgt_copy)[static_cast<size_t>(i)];
          float* grow = gl + i * c;
          for (int64_t j = 0; j < c; ++j) {
            const float p =
                static_cast<float>(std::exp(static_cast<double>(row[j]) - lse));
            grow[j] += scale * (p - (j == tgt ? 1.0f : 0.0f));
          }
        }
      },
      "nll_masked");
  set_precise(id, mean);
  return id;
}

NodeId Tape::nll_rows(NodeId logits, const std::vector<int32_t>& labels) {
  const Tensor& tl = value(logits);
  require(tl.shape.rank() == 2, "nll_rows: logits must be rank 2, got " +
                                    tl.shape.str());
  const int64_t n = tl.shape.dim(0), c = tl.shape.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw ContractError("nll_rows: labels length does not match rows");
  }
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const int32_t lab = labels[static_cast<size_t>(i)];
    if (lab < 0 || lab >= c) {
      throw DataError("nll_rows: label " + std::to_string(lab) + " out of range at row " +
                      std::to_string(i));
    }
    const float* row = tl.ptr() + i * c;
    total += row_lse(row, c) - static_cast<double>(row[lab]);
  }
  Tensor out = Tensor::scalar(static_cast<float>(total));
  auto lab_copy = std::make_shared<std::vector<int32_t>>(labels);
  NodeId id = push(std::move(out), {logits},
                   [logits, lab_copy, n, c](Tape& t, NodeId self) {
                     const float g = t.grads_[static_cast<size_t>(self)][0];
                     const float* lv = t.value_ptr(logits);
                     float* gl = t.grad_ptr(logits);
                     for (int64_t i = 0; i < n; ++i) {
                       const float* row = lv + i * c;
                       const double lse = row_lse(row, c);
                       const int32_t lab = (*lab_copy)[static_cast<size_t>(i)];
                       float* grow = gl + i * c;
                       for (int64_t j = 0; j < c; ++j) {
                         const float p = static_cast<float>(
                             std::exp(static_cast<double>(row[j]) - lse));
                         grow[j] += g * (p - (j == lab ? 1.0f : 0.0f));
                       }
                     }
                   },
                   "nll_rows");
  set_precise(id, total);
  return id;
}

void Tape::backward(NodeId root) {
  if (root < 0 || static_cast<size_t>(root) >= nodes_.size()) {
    throw ContractError("backward: invalid root node id");
  }
  if (value(root).numel() != 1) {
    throw ContractError("backward: root must be scalar, got shape " +
                        value(root).shape.str());
  }
  grads_.assign(nodes_.size(), {});
  for (size_t i = 0; i < nodes_.size(); ++i)
    grads_[i].assign(nodes_[i].value.data.size(), 0.0f);
  grads_[static_cast<size_t>(root)][0] = 1.0f;
  for (NodeId id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.backward_fn) n.backward_fn(*this, id);
  }
  backward_done_ = true;
}

const std::vector<float>& Tape::grad(NodeId id) const {
  if (!backward_done_) throw ContractError("grad: backward has not been run");
  return grads_[static_cast<size_t>(id)];
}

double Tape::scalar_value(NodeId id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (n.value.numel() != 1) {
    throw ContractError("scalar_value: node is not scalar, shape " + n.value.shape.str());
  }
  if (!std::isnan(n.precise)) return n.precise;
  return static_cast<double>(n.value.data[0]);
}

}  // namespace advner::ad
