#pragma once

#include <cstdint>

namespace advner::kernels {

// Number of OpenMP threads the kernels may use. Reads ADVNER_THREADS once;
// falls back to the OpenMP default. Always >= 1.
int thread_budget();

// Serial reference implementations. The parallel versions below must produce
// bit-identical output for any thread count: every output element is written
// by exactly one thread using the same inner-loop order as the reference, and
// all accumulation happens in a fixed order inside double accumulators.
namespace serial {

// c[m,n] = a[m,k] * b[k,n]
void gemm_nn(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);
// c[m,n] = a[m,k] * b[n,k]^T
void gemm_nt(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);
// c[m,n] = a[k,m]^T * b[k,n]
void gemm_tn(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);

// Batched variants over g independent [m,k]x[k,n] (or transposed) problems.
void bmm_nn(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);
void bmm_nt(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);
void bmm_tn(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);

// Row-wise stabilized softmax over the last (contiguous) dimension.
void softmax_rows(int64_t rows, int64_t width, const float* x, float* y);

// Row-wise layer norm; mean/rstd saved for the backward pass (may be null).
void layer_norm_rows(int64_t rows, int64_t width, const float* x, const float* gamma,
                     const float* beta, float eps, float* y, float* save_mean,
                     float* save_rstd);

void gelu(int64_t n, const float* x, float* y);
void gelu_grad(int64_t n, const float* x, const float* gy, float* gx);

}  // namespace serial

void gemm_nn(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);
void gemm_nt(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);
void gemm_tn(int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);
void bmm_nn(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);
void bmm_nt(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);
void bmm_tn(int64_t g, int64_t m, int64_t k, int64_t n, const float* a, const float* b, float* c);
void softmax_rows(int64_t rows, int64_t width, const float* x, float* y);
void layer_norm_rows(int64_t rows, int64_t width, const float* x, const float* gamma,
                     const float* beta, float eps, float* y, float* save_mean,
                     float* save_rstd);
void gelu(int64_t n, const float* x, float* y);
void gelu_grad(int64_t n, const float* x, const float* gy, float* gx);

// Deterministic full reduction: fixed chunk grid independent of thread count,
// double accumulation per chunk, serial combine.
double sum_all(int64_t n, const float* x);
double sum_squares(int64_t n, const float* x);

// Elementwise dst += src, parallel above a grain size.
void axpy_accumulate(int64_t n, const float* src, float* dst);

bool all_finite(int64_t n, const float* x);

}  // namespace advner::kernels
