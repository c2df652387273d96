#pragma once

#include <cstdint>

#include "splitcert/proj.hpp"

namespace splitcert::kernels {

// Data-parallel inner loops of the solver. Column-major (dim x batch) buffers.
// Each function has a serial twin in kernels::serial used as the reference in
// tests and the baseline in the kernel benchmark; the parallel versions must
// match it bitwise (no floating-point reductions are parallelized).

/// Elementwise ReLU-hull projection of (a, c) for a whole activation layer.
/// hulls has length dim; a/c/x/y are dim x batch.
void relu_hull_layer(const ReluHullParams* hulls, std::int64_t dim, std::int64_t batch,
                     const double* a, const double* c, double* x, double* y);

/// x = clamp(v, lower, upper), bounds shared across the batch.
void clamp_layer(const double* lower, const double* upper, std::int64_t dim,
                 std::int64_t batch, const double* v, double* x);

/// x = 0.5 * ((y - lam) + (z - mu)), the interior x-update.
void consensus_average(std::int64_t n, const double* y, const double* lam, const double* z,
                       const double* mu, double* x);

/// dual += (x - v), the scaled dual ascent step.
void dual_accumulate(std::int64_t n, const double* x, const double* v, double* dual);

namespace serial {
void relu_hull_layer(const ReluHullParams* hulls, std::int64_t dim, std::int64_t batch,
                     const double* a, const double* c, double* x, double* y);
void clamp_layer(const double* lower, const double* upper, std::int64_t dim,
                 std::int64_t batch, const double* v, double* x);
void consensus_average(std::int64_t n, const double* y, const double* lam, const double* z,
                       const double* mu, double* x);
void dual_accumulate(std::int64_t n, const double* x, const double* v, double* dual);
}  // namespace serial

}  // namespace splitcert::kernels
