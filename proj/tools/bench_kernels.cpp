// Micro-benchmark comparing the OpenMP kernels against their serial reference
// twins, and asserting bitwise agreement between the two on the same inputs.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <vector>

#include <omp.h>

#include "splitcert/kernels.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  auto t0 = clock_type::now();
  for (int r = 0; r < reps; ++r) fn();
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count() /
         static_cast<double>(reps);
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main() {
  using namespace splitcert;

  const std::int64_t dim = 4096, batch = 64;
  const std::int64_t total = dim * batch;
  const int reps = 20;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);

  auto fill = [&](std::vector<double>& v) {
    for (auto& x : v) x = unif(rng);
  };
  std::vector<double> a(total), c(total), y(total), lam(total), z(total), mu(total);
  fill(a);
  fill(c);
  fill(y);
  fill(lam);
  fill(z);
  fill(mu);
  std::vector<double> lower(dim), upper(dim);
  for (std::int64_t i = 0; i < dim; ++i) {
    double u = unif(rng), v = unif(rng);
    lower[i] = std::min(u, v);
    upper[i] = std::max(u, v);
  }
  std::vector<ReluHullParams> hulls;
  for (std::int64_t i = 0; i < dim; ++i)
    hulls.push_back(ReluHullParams::from_interval(lower[i], upper[i]));

  std::vector<double> out_p(total), out_s(total), out2_p(total), out2_s(total);
  bool all_match = true;

  std::cout << "threads: " << omp_get_max_threads() << ", dim: " << dim
            << ", batch: " << batch << "\n";
  std::cout << "kernel             parallel_ms  serial_ms  speedup  bitwise\n";

  auto report = [&](const char* name, double par, double ser, bool match) {
    std::printf("%-18s %11.3f %10.3f %8.2fx  %s\n", name, par, ser, ser / par,
                match ? "ok" : "MISMATCH");
    all_match = all_match && match;
  };

  {
    double par = time_ms([&] {
      kernels::relu_hull_layer(hulls.data(), dim, batch, a.data(), c.data(), out_p.data(),
                               out2_p.data());
    }, reps);
    double ser = time_ms([&] {
      kernels::serial::relu_hull_layer(hulls.data(), dim, batch, a.data(), c.data(),
                                       out_s.data(), out2_s.data());
    }, reps);
    report("relu_hull_layer", par, ser,
           bitwise_equal(out_p, out_s) && bitwise_equal(out2_p, out2_s));
  }
  {
    double par = time_ms([&] {
      kernels::clamp_layer(lower.data(), upper.data(), dim, batch, a.data(), out_p.data());
    }, reps);
    double ser = time_ms([&] {
      kernels::serial::clamp_layer(lower.data(), upper.data(), dim, batch, a.data(),
                                   out_s.data());
    }, reps);
    report("clamp_layer", par, ser, bitwise_equal(out_p, out_s));
  }
  {
    double par = time_ms([&] {
      kernels::consensus_average(total, y.data(), lam.data(), z.data(), mu.data(),
                                 out_p.data());
    }, reps);
    double ser = time_ms([&] {
      kernels::serial::consensus_average(total, y.data(), lam.data(), z.data(), mu.data(),
                                         out_s.data());
    }, reps);
    report("consensus_average", par, ser, bitwise_equal(out_p, out_s));
  }
  {
    out_p = lam;
    out_s = lam;
    double par = time_ms([&] {
      kernels::dual_accumulate(total, a.data(), c.data(), out_p.data());
    }, reps);
    double ser = time_ms([&] {
      kernels::serial::dual_accumulate(total, a.data(), c.data(), out_s.data());
    }, reps);
    report("dual_accumulate", par, ser, bitwise_equal(out_p, out_s));
  }

  if (!all_match) {
    std::cerr << "parallel kernels diverged from the serial reference\n";
    return 1;
  }
  return 0;
}
