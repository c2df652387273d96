#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "splitcert/bounds.hpp"
#include "splitcert/convfft.hpp"
#include "splitcert/proj.hpp"

namespace splitcert {

struct ResidualBalancing {
  bool enabled = true;
  double tau = 2.0;
  double mu = 10.0;
  // Initial gap between adaptation attempts (in iterations). The solver
  // doubles the gap after every actual rho change, so an oscillating rho backs
  // off instead of flapping forever; adapting on every residual check makes
  // rho flip before the rescaled duals can settle, which stalls convergence.
  int period = 50;
};

struct SolverConfig {
  double rho0 = 1.0;
  double eps_abs = 1e-6;
  double eps_rel = 1e-5;
  int max_iter = 20000;
  ResidualBalancing balancing;
  BoundSource bound_source = BoundSource::Linear;
  int check_every = 10;
  // When an entry hits max_iter unconverged, certify its bound by minimizing
  // the Lagrangian at frozen duals instead of reporting it uncertified.
  bool certify_early_stop = true;
  std::string trace_path;  // per-check-iteration CSV when non-empty

  void validate() const;
};

/// Primal/dual residuals and their tolerances, both as printed sums of squared
/// consensus violations and the sqrt(p)/sqrt(n) scaled tolerance levels.
struct Residuals {
  double r_p = 0.0, r_d = 0.0;
  double eps_p = 0.0, eps_d = 0.0;
};

/// Batch of linear objectives c^T x_l, one column per batch entry.
struct LinearObjective {
  Eigen::MatrixXd c;  // output_dim x batch
};

enum class SolveStatus { Converged, MaxIter, CertifiedEarlyStop };

std::string solve_status_name(SolveStatus s);

struct Certificate {
  std::vector<double> lower_bound;       // per batch entry
  std::vector<SolveStatus> status;       // per batch entry
  std::vector<bool> certified;           // bound is a valid lower bound on J*
  int iters = 0;
  std::vector<Residuals> final_residuals;  // per batch entry
  std::vector<std::vector<std::pair<int, double>>> rho_trace;  // per entry
  std::optional<std::vector<std::vector<double>>> objective_trace;  // per entry, per check

  bool all_converged() const {
    for (auto s : status)
      if (s != SolveStatus::Converged) return false;
    return true;
  }
};

/// Full ADMM iterate; every tensor carries a trailing batch axis (columns).
struct SolverState {
  std::vector<Eigen::MatrixXd> x;        // l+1 blocks, n_k x batch
  std::vector<Eigen::MatrixXd> y, z;     // l blocks
  std::vector<Eigen::MatrixXd> lam, mu;  // scaled duals, l blocks
  Eigen::ArrayXd rho;                    // per batch entry
  int iter = 0;

  std::int64_t batch() const { return x.empty() ? 0 : x[0].cols(); }
  bool all_finite() const;
};

/// Per-layer projection caches plus the elementwise ReLU hull parameters,
/// shareable across solver runs on the same network and bounds.
struct ProjectionCaches {
  std::vector<std::shared_ptr<AffineProjCache>> affine;    // per layer or null
  std::vector<std::shared_ptr<FourierConvCache>> fourier;  // per layer or null
  std::vector<std::vector<ReluHullParams>> hulls;          // per ReLU layer input
};

ProjectionCaches build_projection_caches(const Network& net, const BoundsCache& bounds);

SolverState init_state(const Network& net, const InputSet& input, const SolverConfig& cfg,
                       std::int64_t batch);

void x_update(SolverState& state, const Network& net, const InputSet& input,
              const LinearObjective& objective);
void yz_update(SolverState& state, const Network& net, const ProjectionCaches& caches);
void dual_update(SolverState& state, const Network& net);

/// Residuals per batch entry; prev_y/prev_z hold the (y, z) blocks from before
/// the current iteration's update.
std::vector<Residuals> compute_residuals(const SolverState& state, const Network& net,
                                         const std::vector<Eigen::MatrixXd>& prev_y,
                                         const std::vector<Eigen::MatrixXd>& prev_z,
                                         const SolverConfig& cfg);

/// Residual-balancing step for one batch entry; rescales the scaled duals so
/// the unscaled multipliers stay continuous across the rho change.
void balance_rho(SolverState& state, std::int64_t entry, const Residuals& res,
                 const SolverConfig& cfg);

Certificate solve(const Network& net, const InputSet& input, const BoundsCache& bounds,
                  const LinearObjective& objective, const SolverConfig& cfg);

/// Lower bound on the relaxation optimum from the dual function at the state's
/// current multipliers: minimizes the augmented Lagrangian at frozen duals by
/// alternating x- and (y,z)-steps, then evaluates it. Entries whose inner
/// iteration fails to settle get -inf (sound but vacuous).
Eigen::VectorXd dual_certificate(const SolverState& state, const Network& net,
                                 const InputSet& input, const ProjectionCaches& caches,
                                 const LinearObjective& objective, const SolverConfig& cfg);

}  // namespace splitcert
