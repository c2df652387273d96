#include "splitcert/solver.hpp"

#include <fstream>

#include "splitcert/kernels.hpp"

namespace splitcert {

void SolverConfig::validate() const {
  if (!(rho0 > 0.0)) throw SolverError("rho0 must be positive");
  if (!(eps_abs > 0.0) || !(eps_rel >= 0.0)) throw SolverError("tolerances must be positive");
  if (max_iter < 1) throw SolverError("max_iter must be positive");
  if (check_every < 1) throw SolverError("check_every must be positive");
  if (balancing.enabled && (balancing.tau <= 1.0 || balancing.mu <= 1.0))
    throw SolverError("residual balancing requires tau > 1 and mu > 1");
  if (balancing.enabled && balancing.period < 1)
    throw SolverError("residual balancing period must be positive");
}

std::string solve_status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIter: return "max_iter";
    case SolveStatus::CertifiedEarlyStop: return "certified_early_stop";
  }
  return "?";
}

bool SolverState::all_finite() const {
  auto ok = [](const std::vector<Eigen::MatrixXd>& blocks) {
    for (const auto& m : blocks)
      if (!m.allFinite()) return false;
    return true;
  };
  return ok(x) && ok(y) && ok(z) && ok(lam) && ok(mu) && rho.allFinite();
}

ProjectionCaches build_projection_caches(const Network& net, const BoundsCache& bounds) {
  bounds.validate(net);
  ProjectionCaches caches;
  const std::size_t ell = net.layers.size();
  caches.affine.resize(ell);
  caches.fourier.resize(ell);
  caches.hulls.resize(ell);
  for (std::size_t k = 0; k < ell; ++k) {
    const Layer& layer = net.layers[k];
    switch (layer.kind) {
      case LayerKind::Affine:
        caches.affine[k] = build_affine_cache(layer);
        break;
      case LayerKind::CircularConv:
        caches.fourier[k] = build_fourier_cache(layer);
        break;
      case LayerKind::ReLU: {
        auto& hulls = caches.hulls[k];
        hulls.reserve(static_cast<std::size_t>(layer.dim_in()));
        for (std::int64_t i = 0; i < layer.dim_in(); ++i)
          hulls.push_back(ReluHullParams::from_interval(bounds.lower[k][i], bounds.upper[k][i]));
        break;
      }
      default:
        break;  // selection-structured layers project in O(n) without a cache
    }
  }
  return caches;
}

SolverState init_state(const Network& net, const InputSet& input, const SolverConfig& cfg,
                       std::int64_t batch) {
  net.validate();
  cfg.validate();
  if (batch < 1) throw SolverError("batch must be >= 1");
  Eigen::VectorXd x0 = input.center_point();
  if (x0.size() != net.input_dim()) throw ShapeError("input set dim mismatch");
  SolverState st;
  st.x = forward_batch(net, x0.replicate(1, batch));
  const std::size_t ell = net.layers.size();
  for (std::size_t k = 0; k < ell; ++k) {
    st.y.push_back(st.x[k]);
    st.z.push_back(st.x[k + 1]);
    st.lam.push_back(Eigen::MatrixXd::Zero(st.x[k].rows(), batch));
    st.mu.push_back(Eigen::MatrixXd::Zero(st.x[k + 1].rows(), batch));
  }
  st.rho = Eigen::ArrayXd::Constant(batch, cfg.rho0);
  st.iter = 0;
  return st;
}

namespace {

void project_input(const InputSet& input, const Eigen::MatrixXd& v, Eigen::MatrixXd& out) {
  const Eigen::Index batch = v.cols();
  out.resize(v.rows(), batch);
  if (input.kind == InputKind::Box) {
    kernels::clamp_layer(input.lower.data.data(), input.upper.data.data(), v.rows(), batch,
                         v.data(), out.data());
    return;
  }
  if (std::isinf(input.p)) {
    Eigen::VectorXd lo = input.center.vec().array() - input.radius;
    Eigen::VectorXd hi = input.center.vec().array() + input.radius;
    kernels::clamp_layer(lo.data(), hi.data(), v.rows(), batch, v.data(), out.data());
    return;
  }
  for (Eigen::Index col = 0; col < batch; ++col)
    out.col(col) = project_lp_ball(v.col(col), input.center.vec(), input.radius, input.p);
}

}  // namespace

void x_update(SolverState& state, const Network& net, const InputSet& input,
              const LinearObjective& objective) {
  const std::size_t ell = net.layers.size();
  project_input(input, state.y[0] - state.lam[0], state.x[0]);
  for (std::size_t k = 1; k < ell; ++k)
    kernels::consensus_average(state.x[k].size(), state.y[k].data(), state.lam[k].data(),
                               state.z[k - 1].data(), state.mu[k - 1].data(),
                               state.x[k].data());
  state.x[ell] = state.z[ell - 1] - state.mu[ell - 1];
  for (Eigen::Index col = 0; col < state.batch(); ++col)
    state.x[ell].col(col) -= objective.c.col(col) / state.rho[col];
}

void yz_update(SolverState& state, const Network& net, const ProjectionCaches& caches) {
  const std::size_t ell = net.layers.size();
  for (std::size_t k = 0; k < ell; ++k) {
    const Layer& layer = net.layers[k];
    const Eigen::MatrixXd a = state.x[k] + state.lam[k];
    const Eigen::MatrixXd c = state.x[k + 1] + state.mu[k];
    switch (layer.kind) {
      case LayerKind::ReLU:
        kernels::relu_hull_layer(caches.hulls[k].data(), a.rows(), a.cols(), a.data(),
                                 c.data(), state.y[k].data(), state.z[k].data());
        break;
      case LayerKind::Affine:
        if (!caches.affine[k]) throw SolverError("missing affine projection cache");
        project_affine_graph(a, c, layer, *caches.affine[k], state.y[k], state.z[k]);
        break;
      case LayerKind::CircularConv:
        if (!caches.fourier[k]) throw SolverError("missing fourier projection cache");
        caches.fourier[k]->project(a, c, state.y[k], state.z[k]);
        break;
      default:
        project_selection_graph(a, c, layer, state.y[k], state.z[k]);
        break;
    }
  }
}

void dual_update(SolverState& state, const Network& net) {
  const std::size_t ell = net.layers.size();
  for (std::size_t k = 0; k < ell; ++k) {
    kernels::dual_accumulate(state.lam[k].size(), state.x[k].data(), state.y[k].data(),
                             state.lam[k].data());
    kernels::dual_accumulate(state.mu[k].size(), state.x[k + 1].data(), state.z[k].data(),
                             state.mu[k].data());
  }
}

std::vector<Residuals> compute_residuals(const SolverState& state, const Network& net,
                                         const std::vector<Eigen::MatrixXd>& prev_y,
                                         const std::vector<Eigen::MatrixXd>& prev_z,
                                         const SolverConfig& cfg) {
  const std::size_t ell = net.layers.size();
  const auto dims = net.layer_dims();
  double p_dim = static_cast<double>(dims[0] + dims[ell]);
  double n_dim = 0.0;
  for (std::size_t i = 0; i <= ell; ++i) n_dim += static_cast<double>(dims[i]);
  for (std::size_t i = 1; i < ell; ++i) p_dim += 2.0 * static_cast<double>(dims[i]);

  const Eigen::Index batch = state.batch();
  std::vector<Residuals> res(static_cast<std::size_t>(batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    double r_p = 0.0;
    for (std::size_t k = 0; k < ell; ++k) {
      r_p += (state.y[k].col(b) - state.x[k].col(b)).squaredNorm();
      r_p += (state.x[k + 1].col(b) - state.z[k].col(b)).squaredNorm();
    }
    double r_d = (state.y[0].col(b) - prev_y[0].col(b)).squaredNorm() +
                 (state.z[ell - 1].col(b) - prev_z[ell - 1].col(b)).squaredNorm();
    for (std::size_t k = 1; k < ell; ++k)
      r_d += ((state.y[k].col(b) - prev_y[k].col(b)) +
              (state.z[k - 1].col(b) - prev_z[k - 1].col(b)))
                 .squaredNorm();
    r_d *= state.rho[b];

    double x_norm2 = state.x[0].col(b).squaredNorm() + state.x[ell].col(b).squaredNorm();
    for (std::size_t i = 1; i < ell; ++i) x_norm2 += 2.0 * state.x[i].col(b).squaredNorm();
    double yz_norm2 = 0.0;
    for (std::size_t i = 0; i < ell; ++i)
      yz_norm2 += state.y[i].col(b).squaredNorm() + state.z[i].col(b).squaredNorm();
    double dual_norm2 = state.lam[0].col(b).squaredNorm() +
                        state.mu[ell - 1].col(b).squaredNorm();
    for (std::size_t i = 1; i < ell; ++i)
      dual_norm2 += (state.lam[i].col(b) + state.mu[i - 1].col(b)).squaredNorm();

    Residuals r;
    r.r_p = r_p;
    r.r_d = r_d;
    r.eps_p = std::sqrt(p_dim) * cfg.eps_abs +
              cfg.eps_rel * std::max(std::sqrt(x_norm2), std::sqrt(yz_norm2));
    r.eps_d = std::sqrt(n_dim) * cfg.eps_abs + cfg.eps_rel * std::sqrt(dual_norm2);
    res[static_cast<std::size_t>(b)] = r;
  }
  return res;
}

void balance_rho(SolverState& state, std::int64_t entry, const Residuals& res,
                 const SolverConfig& cfg) {
  const double tau = cfg.balancing.tau, mu_rb = cfg.balancing.mu;
  // The ratio test runs on residual norms; r_p/r_d accumulate squared norms.
  const double rp = std::sqrt(res.r_p), rd = std::sqrt(res.r_d);
  if (rp > mu_rb * rd) {
    state.rho[entry] *= tau;
    for (auto& l : state.lam) l.col(entry) /= tau;
    for (auto& m : state.mu) m.col(entry) /= tau;
  } else if (rd > mu_rb * rp) {
    state.rho[entry] /= tau;
    for (auto& l : state.lam) l.col(entry) *= tau;
    for (auto& m : state.mu) m.col(entry) *= tau;
  }
}

namespace {

// The residual formulas accumulate squared violations; the stopping rule uses
// their square roots against the tolerance levels, which also satisfies the
// weaker r <= eps comparison whenever eps <= 1.
bool entry_converged(const Residuals& r) {
  return std::sqrt(r.r_p) <= r.eps_p && std::sqrt(r.r_d) <= r.eps_d;
}

void check_finite(const SolverState& state, int iter) {
  for (std::size_t k = 0; k < state.x.size(); ++k)
    if (!state.x[k].allFinite())
      throw SolverError("solver diverged: non-finite x at iteration " + std::to_string(iter) +
                        ", layer " + std::to_string(k));
  for (std::size_t k = 0; k < state.y.size(); ++k)
    if (!state.y[k].allFinite() || !state.z[k].allFinite() || !state.lam[k].allFinite() ||
        !state.mu[k].allFinite())
      throw SolverError("solver diverged: non-finite (y,z,duals) at iteration " +
                        std::to_string(iter) + ", layer " + std::to_string(k));
}

void restore_columns(std::vector<Eigen::MatrixXd>& dst, const std::vector<Eigen::MatrixXd>& src,
                     const std::vector<char>& frozen) {
  for (std::size_t k = 0; k < dst.size(); ++k)
    for (Eigen::Index b = 0; b < dst[k].cols(); ++b)
      if (frozen[static_cast<std::size_t>(b)]) dst[k].col(b) = src[k].col(b);
}

}  // namespace

Eigen::VectorXd dual_certificate(const SolverState& state, const Network& net,
                                 const InputSet& input, const ProjectionCaches& caches,
                                 const LinearObjective& objective, const SolverConfig& cfg) {
  SolverState st = state;
  const Eigen::Index batch = st.batch();
  const std::size_t ell = net.layers.size();
  const long cap = 10L * cfg.max_iter;
  constexpr double kInnerTol = 1e-9;

  Eigen::VectorXd change = Eigen::VectorXd::Constant(batch, 1.0);
  for (long it = 0; it < cap; ++it) {
    std::vector<Eigen::MatrixXd> px = st.x, py = st.y, pz = st.z;
    x_update(st, net, input, objective);
    yz_update(st, net, caches);
    change.setZero();
    for (Eigen::Index b = 0; b < batch; ++b) {
      double d = 0.0;
      for (std::size_t k = 0; k <= ell; ++k)
        d = std::max(d, (st.x[k].col(b) - px[k].col(b)).lpNorm<Eigen::Infinity>());
      for (std::size_t k = 0; k < ell; ++k) {
        d = std::max(d, (st.y[k].col(b) - py[k].col(b)).lpNorm<Eigen::Infinity>());
        d = std::max(d, (st.z[k].col(b) - pz[k].col(b)).lpNorm<Eigen::Infinity>());
      }
      change[b] = d;
    }
    if ((change.array() <= kInnerTol).all()) break;
  }

  Eigen::VectorXd g(batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (change[b] > kInnerTol) {
      g[b] = -std::numeric_limits<double>::infinity();  // sound but vacuous
      continue;
    }
    double val = objective.c.col(b).dot(st.x[ell].col(b));
    double quad = 0.0;
    for (std::size_t k = 0; k < ell; ++k) {
      quad += (st.x[k].col(b) - st.y[k].col(b) + st.lam[k].col(b)).squaredNorm() -
              st.lam[k].col(b).squaredNorm();
      quad += (st.x[k + 1].col(b) - st.z[k].col(b) + st.mu[k].col(b)).squaredNorm() -
              st.mu[k].col(b).squaredNorm();
    }
    g[b] = val + 0.5 * st.rho[b] * quad;
  }
  return g;
}

Certificate solve(const Network& net, const InputSet& input, const BoundsCache& bounds,
                  const LinearObjective& objective, const SolverConfig& cfg) {
  net.validate();
  cfg.validate();
  input.validate();
  if (objective.c.rows() != net.output_dim())
    throw ShapeError("objective dim does not match network output");
  if (!objective.c.allFinite()) throw SolverError("objective must be finite");

  const std::int64_t batch = objective.c.cols();
  ProjectionCaches caches = build_projection_caches(net, bounds);
  SolverState state = init_state(net, input, cfg, batch);
  const std::size_t ell = net.layers.size();

  std::ofstream trace;
  if (!cfg.trace_path.empty()) {
    trace.open(cfg.trace_path);
    if (!trace) throw IoError("cannot open trace file: " + cfg.trace_path);
    trace << "iter,r_p,r_d,eps_p,eps_d,rho,objective\n";
  }

  Certificate cert;
  cert.lower_bound.assign(static_cast<std::size_t>(batch), 0.0);
  cert.status.assign(static_cast<std::size_t>(batch), SolveStatus::MaxIter);
  cert.certified.assign(static_cast<std::size_t>(batch), false);
  cert.final_residuals.assign(static_cast<std::size_t>(batch), Residuals{});
  cert.rho_trace.resize(static_cast<std::size_t>(batch));
  cert.objective_trace = std::vector<std::vector<double>>(static_cast<std::size_t>(batch));
  for (Eigen::Index b = 0; b < batch; ++b)
    cert.rho_trace[static_cast<std::size_t>(b)].emplace_back(0, state.rho[b]);

  std::vector<char> frozen(static_cast<std::size_t>(batch), 0);
  SolverState frozen_snapshot = state;
  std::size_t n_frozen = 0;

  // Exponential backoff on residual balancing: each actual rho change doubles
  // the entry's waiting interval, so a rho that keeps flip-flopping settles
  // down instead of oscillating forever just above the stopping tolerance.
  std::vector<int> balance_gap(static_cast<std::size_t>(batch), cfg.balancing.period);
  std::vector<int> next_balance(static_cast<std::size_t>(batch), cfg.balancing.period);

  std::vector<Eigen::MatrixXd> prev_y, prev_z;
  int iter = 0;
  for (iter = 1; iter <= cfg.max_iter; ++iter) {
    const bool check = (iter % cfg.check_every == 0) || iter == cfg.max_iter;
    if (check) {
      prev_y = state.y;
      prev_z = state.z;
    }
    x_update(state, net, input, objective);
    yz_update(state, net, caches);
    dual_update(state, net);
    state.iter = iter;

    if (!check) {
      if (n_frozen) {
        restore_columns(state.x, frozen_snapshot.x, frozen);
        restore_columns(state.y, frozen_snapshot.y, frozen);
        restore_columns(state.z, frozen_snapshot.z, frozen);
        restore_columns(state.lam, frozen_snapshot.lam, frozen);
        restore_columns(state.mu, frozen_snapshot.mu, frozen);
      }
      continue;
    }

    check_finite(state, iter);
    auto res = compute_residuals(state, net, prev_y, prev_z, cfg);

    for (Eigen::Index b = 0; b < batch; ++b) {
      const auto bi = static_cast<std::size_t>(b);
      if (frozen[bi]) continue;
      (*cert.objective_trace)[bi].push_back(objective.c.col(b).dot(state.x[ell].col(b)));
      if (entry_converged(res[bi])) {
        frozen[bi] = 1;
        ++n_frozen;
        cert.final_residuals[bi] = res[bi];
        cert.status[bi] = SolveStatus::Converged;
        cert.certified[bi] = true;
        cert.lower_bound[bi] = objective.c.col(b).dot(state.x[ell].col(b));
        for (std::size_t k = 0; k <= ell; ++k) frozen_snapshot.x[k].col(b) = state.x[k].col(b);
        for (std::size_t k = 0; k < ell; ++k) {
          frozen_snapshot.y[k].col(b) = state.y[k].col(b);
          frozen_snapshot.z[k].col(b) = state.z[k].col(b);
          frozen_snapshot.lam[k].col(b) = state.lam[k].col(b);
          frozen_snapshot.mu[k].col(b) = state.mu[k].col(b);
        }
        frozen_snapshot.rho[b] = state.rho[b];
      } else {
        cert.final_residuals[bi] = res[bi];
        if (cfg.balancing.enabled && iter >= next_balance[bi]) {
          double before = state.rho[b];
          balance_rho(state, b, res[bi], cfg);
          if (state.rho[b] != before) {
            cert.rho_trace[bi].emplace_back(iter, state.rho[b]);
            balance_gap[bi] *= 2;
          }
          next_balance[bi] = iter + balance_gap[bi];
        }
      }
    }

    if (trace.is_open()) {
      double rp = 0.0, rd = 0.0;
      double ep = std::numeric_limits<double>::infinity(), ed = ep;
      for (const auto& r : res) {
        rp = std::max(rp, r.r_p);
        rd = std::max(rd, r.r_d);
        ep = std::min(ep, r.eps_p);
        ed = std::min(ed, r.eps_d);
      }
      double obj = 0.0;
      for (Eigen::Index b = 0; b < batch; ++b)
        obj += objective.c.col(b).dot(state.x[ell].col(b));
      trace << iter << "," << rp << "," << rd << "," << ep << "," << ed << ","
            << state.rho[0] << "," << obj << "\n";
    }

    if (n_frozen == static_cast<std::size_t>(batch)) break;
  }
  cert.iters = std::min(iter, cfg.max_iter);

  // Converged columns may have advanced a few joint iterations past their
  // convergence point; evaluate the certificate from the recorded state.
  if (n_frozen) {
    restore_columns(state.x, frozen_snapshot.x, frozen);
    restore_columns(state.y, frozen_snapshot.y, frozen);
    restore_columns(state.z, frozen_snapshot.z, frozen);
    restore_columns(state.lam, frozen_snapshot.lam, frozen);
    restore_columns(state.mu, frozen_snapshot.mu, frozen);
    for (Eigen::Index b = 0; b < batch; ++b)
      if (frozen[static_cast<std::size_t>(b)]) state.rho[b] = frozen_snapshot.rho[b];
  }

  // The final primal iterate still carries O(tolerance) error and can overshoot
  // the true optimum, so certified bounds always come from the dual function at
  // the final multipliers, for converged and early-stopped entries alike.
  const bool unconverged = n_frozen < static_cast<std::size_t>(batch);
  if (n_frozen > 0 || (unconverged && cfg.certify_early_stop)) {
    Eigen::VectorXd g = dual_certificate(state, net, input, caches, objective, cfg);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const auto bi = static_cast<std::size_t>(b);
      if (frozen[bi]) {
        cert.certified[bi] = std::isfinite(g[b]);
        if (cert.certified[bi]) cert.lower_bound[bi] = g[b];
      } else if (cfg.certify_early_stop) {
        cert.lower_bound[bi] = g[b];
        cert.status[bi] = SolveStatus::CertifiedEarlyStop;
        cert.certified[bi] = std::isfinite(g[b]);
      }
    }
  }
  if (unconverged && !cfg.certify_early_stop) {
    for (Eigen::Index b = 0; b < batch; ++b) {
      const auto bi = static_cast<std::size_t>(b);
      if (frozen[bi]) continue;
      cert.lower_bound[bi] = objective.c.col(b).dot(state.x[ell].col(b));
      cert.status[bi] = SolveStatus::MaxIter;
      cert.certified[bi] = false;
    }
  }
  return cert;
}

}  // namespace splitcert
