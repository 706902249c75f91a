#include "advner/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace advner::kernels {

namespace {

// Work sizes below this run serially; spawning a team costs more than the loop.
constexpr int64_t kParGrain = 1 << 14;

int read_thread_budget() {
#ifdef _OPENMP
  int budget = omp_get_max_threads();
#else
  int budget = 1;
#endif
  if (const char* env = std::getenv("ADVNER_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) budget = static_cast<int>(std::min<long>(v, 1024));
  }
  return budget < 1 ? 1 : budget;
}

inline float gelu_one(float x) {
  // exact erf form: x * Phi(x)
  return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752440f));
}

inline float gelu_grad_one(float x) {
  const float phi = 0.5f * (1.0f + std::erf(x * 0.70710678118654752440f));
  const float pdf = std::exp(-0.5f * x * x) * 0.39894228040143267794f;
  return phi + x * pdf;
}

// float accumulation in a vector-friendly i-k-j order; the per-element
// summation order is fixed by the code, so serial and parallel runs agree
// bit for bit.
inline void gemm_nn_row(int64_t i, int64_t k, int64_t n, const float* a, const float* b,
                        float* c) {
  const float* ai = a + i * k;
  float* ci = c + i * n;
  for (int64_t j = 0; j < n; ++j) ci[j] = 0.0f;
  for (int64_t p = 0; p < k; ++p) {
    const float av = ai[p];
    const float* bp = b + p * n;
    for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
  }
}

inline void gemm_nt_row(int64_t i, int64_t k, int64_t n, const float* a, const float* b,
                        float* c) {
  const float* ai = a + i * k;
  float* ci = c + i * n;
  for (int64_t j = 0; j < n; ++j) {
    const float* bj = b + j * k;
    float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
    int64_t p = 0;
    for (; p + 4 <= k; p += 4) {
      s0 += ai[p] * bj[p];
      s1 += ai[p + 1] * bj[p + 1];
      s2 += ai[p + 2] * bj[p + 2];
      s3 += ai[p + 3] * bj[p + 3];
    }
    float tail = 0.0f;
    for (; p < k; ++p) tail += ai[p] * bj[p];
    ci[j] = ((s0 + s1) + (s2 + s3)) + tail;
  }
}

inline void gemm_tn_row(int64_t i, int64_t m, int64_t k, int64_t n, const float* a,
                        const float* b, float* c) {
  // c[i,j] = sum_p a[p,i] * b[p,j], a is [k,m], b is [k,n]
  float* ci = c + i * n;
  for (int64_t j = 0; j < n; ++j) ci[j] = 0.0f;
  for (int64_t p = 0; p < k; ++p) {
    const float av = a[p * m + i];
    const float* bp = b + p * n;
    for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
  }
}

inline void softmax_one_row(int64_t width, const float* xr, float* yr) {
  float mx = xr[0];
  for (int64_t j = 1; j < width; ++j) mx = std::max(mx, xr[j]);
  double denom = 0.0;
  for (int64_t j = 0; j < width; ++j) {
    const float e = std::exp(xr[j] - mx);
    yr[j] = e;
    denom += e;
  }
  const float inv = static_cast<float>(1.0 / denom);
  for (int64_t j = 0; j < width; ++j) yr[j] *= inv;
}

inline void layer_norm_one_row(int64_t width, const float* xr, const float* gamma,
                               const float* beta, float eps, float* yr, float* mean_out,
                               float* rstd_out) {
  double mean = 0.0;
  for (int64_t j = 0; j < width; ++j) mean += xr[j];
  mean /= static_cast<double>(width);
  double var = 0.0;
  for (int64_t j = 0; j < width; ++j) {
    const double d = xr[j] - mean;
    var += d * d;
  }
  var /= static_cast<double>(width);
  const float rstd = static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(eps)));
  const float mu = static_cast<float>(mean);
  for (int64_t j = 0; j < width; ++j) {
    const float xhat = (xr[j] - mu) * rstd;
    yr[j] = gamma[j] * xhat + beta[j];
  }
  if (mean_out) *mean_out = mu;
  if (rstd_out) *rstd_out = rstd;
}

}  // namespace

int thread_budget() {
  static const int budget = read_thread_budget();
  return budget;
}

namespace serial {

void gemm_nn(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c) {
  for (int64_t i = 0; i < m; ++i) gemm_nn_row(i, k, n, a, b, c);
}

void gemm_nt(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c) {
  for (int64_t i = 0; i < m; ++i) gemm_nt_row(i, k, n, a, b, c);
}

void gemm_tn(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c) {
  for (int64_t i = 0; i < m; ++i) gemm_tn_row(i, m, k, n, a, b, c);
}

void bmm_nn(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b,
            float* c) {
  for (int64_t s = 0; s < g; ++s)
    gemm_nn(m, k, n, a + s * m * k, b + s * k * n, c + s * m * n);
}

void bmm_nt(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b,
            float* c) {
  for (int64_t s = 0; s < g; ++s)
    gemm_nt(m, k, n, a + s * m * k, b + s * n * k, c + s * m * n);
}

void bmm_tn(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b,
            float* c) {
  for (int64_t s = 0; s < g; ++s)
    gemm_tn(m, k, n, a + s * k * m, b + s * k * n, c + s * m * n);
}

void softmax_rows(int64_t rows, int64_t width, const float* x, float* y) {
  for (int64_t r = 0; r < rows; ++r)
    softmax_one_row(width, x + r * width, y + r * width);
}

void layer_norm_rows(int64_t rows, int64_t width, const float* x, const float* gamma,
                     const float* beta, float eps, float* y, float* save_mean,
                     float* save_rstd) {
  for (int64_t r = 0; r < rows; ++r)
    layer_norm_one_row(width, x + r * width, gamma, beta, eps, y + r * width,
                       save_mean ? save_mean + r : nullptr,
                       save_rstd ? save_rstd + r : nullptr);
}

void gelu(int64_t n, const float* x, float* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

void gelu_grad(int64_t n, const float* x, const float* gy, float* gx) {
  for (int64_t i = 0; i < n; ++i) gx[i] = gy[i] * gelu_grad_one(x[i]);
}

}  // namespace serial

void gemm_nn(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c) {
#pragma omp parallel for schedule(static) num_threads(thread_budget()) \
    if (m * n * k > kParGrain)
  for (int64_t i = 0; i < m; ++i) gemm_nn_row(i, k, n, a, b, c);
}

void gemm_nt(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c) {
#pragma omp parallel for schedule(static) num_threads(thread_budget()) \
    if (m * n * k > kParGrain)
  for (int64_t i = 0; i < m; ++i) gemm_nt_row(i, k, n, a, b, c);
}

void gemm_tn(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c) {
#pragma omp parallel for schedule(static) num_threads(thread_budget()) \
    if (m * n * k > kParGrain)
  for (int64_t i = 0; i < m; ++i) gemm_tn_row(i, m, k, n, a, b, c);
}

void bmm_nn(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b,
            float* c) {
#pragma omp parallel for schedule(static) num_threads(thread_budget()) \
    if (g * m * n * k > kParGrain)
  for (int64_t t = 0; t < g * m; ++t) {
    const int64_t s = t / m, i = t % m;
    gemm_nn_row(i, k, n, a + s * m * k, b + s * k * n, c + s * m * n);
  }
}

void bmm_nt(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b,
            float* c) {
#pragma omp parallel for schedule(static) num_threads(thread_budget()) \
    if (g * m * n * k > kParGrain)
  for (int64_t t = 0; t < g * m; ++t) {
    const int64_t s = t / m, i = t % m;
    gemm_nt_row(i, k, n, a + s * m * k, b + s * n * k, c + s * m * n);
  }
}

void bmm_tn(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b,
            float* c) {
#pragma omp parallel for schedule(static) num_threads(thread_budget()) \
    if (g * m * n * k > kParGrain)
  for (int64_t t = 0; t < g * m; ++t) {
    const int64_t s = t / m, i = t % m;
    gemm_tn_row(i, m, k, n, a + s * k * m, b + s * k * n, c + s * m * n);
  }
}

void softmax_rows(int64_t rows, int64_t width, const float* x, float* y) {
#pragma omp parallel for schedule(static) num_threads(thread_budget()) \
    if (rows * width > kParGrain)
  for (int64_t r = 0; r < rows; ++r)
    softmax_one_row(width, x + r * width, y + r * width);
}

void layer_norm_rows(int64_t rows, int64_t width, const float* x, const float* gamma,
                     const float* beta, float eps, float* y, float* save_mean,
                     float* save_rstd) {
#pragma omp parallel for schedule(static) num_threads(thread_budget()) \
    if (rows * width > kParGrain)
  for (int64_t r = 0; r < rows; ++r)
    layer_norm_one_row(width, x + r * width, gamma, beta, eps, y + r * width,
                       save_mean ? save_mean + r : nullptr,
                       save_rstd ? save_rstd + r : nullptr);
}

void gelu(int64_t n, const float* x, float* y) {
#pragma omp parallel for schedule(static) num_threads(thread_budget()) if (n > kParGrain)
  for (int64_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

void gelu_grad(int64_t n, const float* x, const float* gy, float* gx) {
#pragma omp parallel for schedule(static) num_threads(thread_budget()) if (n > kParGrain)
  for (int64_t i = 0; i < n; ++i) gx[i] = gy[i] * gelu_grad_one(x[i]);
}

double sum_all(int64_t n, const float* x) {
  // 64 fixed chunks regardless of thread count, so the combine order (and
  // therefore the rounding) never depends on parallelism.
  constexpr int64_t kChunks = 64;
  if (n == 0) return 0.0;
  double partial[kChunks] = {0.0};
  const int64_t step = (n + kChunks - 1) / kChunks;
#pragma omp parallel for schedule(static) num_threads(thread_budget()) if (n > kParGrain)
  for (int64_t ci = 0; ci < kChunks; ++ci) {
    const int64_t lo = ci * step;
    const int64_t hi = std::min(n, lo + step);
    double acc = 0.0;
    for (int64_t i = lo; i < hi; ++i) acc += x[i];
    partial[ci] = acc;
  }
  double total = 0.0;
  for (int64_t ci = 0; ci < kChunks; ++ci) total += partial[ci];
  return total;
}

void axpy_accumulate(int64_t n, const float* src, float* dst) {
#pragma omp parallel for schedule(static) num_threads(thread_budget()) if (n > kParGrain)
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

bool all_finite(int64_t n, const float* x) {
  bool ok = true;
#pragma omp parallel for schedule(static) num_threads(thread_budget()) \
    reduction(&& : ok) if (n > kParGrain)
  for (int64_t i = 0; i < n; ++i) ok = ok && std::isfinite(x[i]);
  return ok;
}

double sum_squares(int64_t n, const float* x) {
  constexpr int64_t kChunks = 64;
  if (n == 0) return 0.0;
  double partial[kChunks] = {0.0};
  const int64_t step = (n + kChunks - 1) / kChunks;
#pragma omp parallel for schedule(static) num_threads(thread_budget()) if (n > kParGrain)
  for (int64_t ci = 0; ci < kChunks; ++ci) {
    const int64_t lo = ci * step;
    const int64_t hi = std::min(n, lo + step);
    double acc = 0.0;
    for (int64_t i = lo; i < hi; ++i) acc += static_cast<double>(x[i]) * x[i];
    partial[ci] = acc;
  }
  double total = 0.0;
  for (int64_t ci = 0; ci < kChunks; ++ci) total += partial[ci];
  return total;
}

}  // namespace advner::kernels
