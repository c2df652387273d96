#include "splitcert/kernels.hpp"

namespace splitcert::kernels {

void relu_hull_layer(const ReluHullParams* hulls, std::int64_t dim, std::int64_t batch,
                     const double* a, const double* c, double* x, double* y) {
  const std::int64_t total = dim * batch;
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < total; ++t) {
    project_relu_hull(a[t], c[t], hulls[t % dim], x[t], y[t]);
  }
}

void clamp_layer(const double* lower, const double* upper, std::int64_t dim,
                 std::int64_t batch, const double* v, double* x) {
  const std::int64_t total = dim * batch;
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < total; ++t) {
    const std::int64_t i = t % dim;
    x[t] = v[t] < lower[i] ? lower[i] : (v[t] > upper[i] ? upper[i] : v[t]);
  }
}

void consensus_average(std::int64_t n, const double* y, const double* lam, const double* z,
                       const double* mu, double* x) {
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < n; ++t) x[t] = 0.5 * ((y[t] - lam[t]) + (z[t] - mu[t]));
}

void dual_accumulate(std::int64_t n, const double* x, const double* v, double* dual) {
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < n; ++t) dual[t] += x[t] - v[t];
}

namespace serial {

void relu_hull_layer(const ReluHullParams* hulls, std::int64_t dim, std::int64_t batch,
                     const double* a, const double* c, double* x, double* y) {
  const std::int64_t total = dim * batch;
  for (std::int64_t t = 0; t < total; ++t)
    project_relu_hull(a[t], c[t], hulls[t % dim], x[t], y[t]);
}

void clamp_layer(const double* lower, const double* upper, std::int64_t dim,
                 std::int64_t batch, const double* v, double* x) {
  const std::int64_t total = dim * batch;
  for (std::int64_t t = 0; t < total; ++t) {
    const std::int64_t i = t % dim;
    x[t] = v[t] < lower[i] ? lower[i] : (v[t] > upper[i] ? upper[i] : v[t]);
  }
}

void consensus_average(std::int64_t n, const double* y, const double* lam, const double* z,
                       const double* mu, double* x) {
  for (std::int64_t t = 0; t < n; ++t) x[t] = 0.5 * ((y[t] - lam[t]) + (z[t] - mu[t]));
}

void dual_accumulate(std::int64_t n, const double* x, const double* v, double* dual) {
  for (std::int64_t t = 0; t < n; ++t) dual[t] += x[t] - v[t];
}

}  // namespace serial

}  // namespace splitcert::kernels
