// Compares the serial reference kernels against the OpenMP versions and
// verifies they agree bit-for-bit while timing both. ADVNER_THREADS bounds
// the parallel side.

#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <vector>

#include "advner/kernels.hpp"
#include "advner/rng.hpp"

using namespace advner;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<float> random_vec(size_t n, uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = rng.uniform_float(-1.0f, 1.0f);
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() /
         static_cast<double>(reps);
}

void report(const std::string& name, double serial_ms, double parallel_ms,
            bool identical) {
  std::cout << std::left << std::setw(26) << name << std::right << std::fixed
            << std::setprecision(3) << std::setw(10) << serial_ms << " ms"
            << std::setw(10) << parallel_ms << " ms   x" << std::setprecision(2)
            << (parallel_ms > 0 ? serial_ms / parallel_ms : 0.0)
            << (identical ? "   bit-identical" : "   MISMATCH") << "\n";
}

}  // namespace

int main() {
  std::cout << "thread budget: " << kernels::thread_budget() << "\n";
  std::cout << std::left << std::setw(26) << "kernel" << std::right << std::setw(13)
            << "serial" << std::setw(13) << "parallel" << "\n";
  bool all_ok = true;

  {
    const int64_t m = 256, k = 256, n = 256;
    auto a = random_vec(static_cast<size_t>(m * k), 1);
    auto b = random_vec(static_cast<size_t>(k * n), 2);
    std::vector<float> c1(static_cast<size_t>(m * n)), c2(c1.size());
    const double ts = time_ms([&] { kernels::serial::gemm_nn(m, k, n, a.data(), b.data(), c1.data()); }, 5);
    const double tp = time_ms([&] { kernels::gemm_nn(m, k, n, a.data(), b.data(), c2.data()); }, 5);
    const bool same = std::memcmp(c1.data(), c2.data(), c1.size() * 4) == 0;
    all_ok = all_ok && same;
    report("gemm_nn 256^3", ts, tp, same);
  }
  {
    const int64_t g = 64, m = 32, k = 32, n = 32;
    auto a = random_vec(static_cast<size_t>(g * m * k), 3);
    auto b = random_vec(static_cast<size_t>(g * n * k), 4);
    std::vector<float> c1(static_cast<size_t>(g * m * n)), c2(c1.size());
    const double ts = time_ms([&] { kernels::serial::bmm_nt(g, m, k, n, a.data(), b.data(), c1.data()); }, 20);
    const double tp = time_ms([&] { kernels::bmm_nt(g, m, k, n, a.data(), b.data(), c2.data()); }, 20);
    const bool same = std::memcmp(c1.data(), c2.data(), c1.size() * 4) == 0;
    all_ok = all_ok && same;
    report("bmm_nt 64x32^3", ts, tp, same);
  }
  {
    const int64_t rows = 4096, width = 128;
    auto x = random_vec(static_cast<size_t>(rows * width), 5);
    std::vector<float> y1(x.size()), y2(x.size());
    const double ts = time_ms([&] { kernels::serial::softmax_rows(rows, width, x.data(), y1.data()); }, 20);
    const double tp = time_ms([&] { kernels::softmax_rows(rows, width, x.data(), y2.data()); }, 20);
    const bool same = std::memcmp(y1.data(), y2.data(), y1.size() * 4) == 0;
    all_ok = all_ok && same;
    report("softmax 4096x128", ts, tp, same);
  }
  {
    const int64_t rows = 4096, width = 128;
    auto x = random_vec(static_cast<size_t>(rows * width), 6);
    auto gamma = random_vec(static_cast<size_t>(width), 7);
    auto beta = random_vec(static_cast<size_t>(width), 8);
    std::vector<float> y1(x.size()), y2(x.size());
    const double ts = time_ms([&] {
      kernels::serial::layer_norm_rows(rows, width, x.data(), gamma.data(), beta.data(), 1e-5f, y1.data(), nullptr, nullptr);
    }, 20);
    const double tp = time_ms([&] {
      kernels::layer_norm_rows(rows, width, x.data(), gamma.data(), beta.data(), 1e-5f, y2.data(), nullptr, nullptr);
    }, 20);
    const bool same = std::memcmp(y1.data(), y2.data(), y1.size() * 4) == 0;
    all_ok = all_ok && same;
    report("layer_norm 4096x128", ts, tp, same);
  }
  {
    const int64_t n = 1 << 20;
    auto x = random_vec(static_cast<size_t>(n), 9);
    std::vector<float> y1(x.size()), y2(x.size());
    const double ts = time_ms([&] { kernels::serial::gelu(n, x.data(), y1.data()); }, 10);
    const double tp = time_ms([&] { kernels::gelu(n, x.data(), y2.data()); }, 10);
    const bool same = std::memcmp(y1.data(), y2.data(), y1.size() * 4) == 0;
    all_ok = all_ok && same;
    report("gelu 1M", ts, tp, same);
  }

  std::cout << (all_ok ? "all kernels bit-identical across implementations\n"
                       : "KERNEL MISMATCH DETECTED\n");
  return all_ok ? 0 : 1;
}
