// Independent reference implementations used to check the library. These are
// deliberately written with different algorithms than the code under test:
// Dykstra's alternating projections, dense KKT solves, full sorts, and direct
// loop-nest convolutions.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "splitcert/model.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// 2-D projection onto the ReLU hull by Dykstra's algorithm over a halfspace /
// affine-set description of the hull.

struct HalfPlane {
  Eigen::Vector2d n;
  double beta = 0.0;
  bool equality = false;

  Eigen::Vector2d project(const Eigen::Vector2d& v) const {
    double viol = n.dot(v) - beta;
    if (!equality && viol >= 0.0) return v;
    return v - (viol / n.squaredNorm()) * n;
  }
};

inline Eigen::Vector2d dykstra(const Eigen::Vector2d& v0, const std::vector<HalfPlane>& sets,
                               int iters = 50000) {
  Eigen::Vector2d v = v0;
  std::vector<Eigen::Vector2d> inc(sets.size(), Eigen::Vector2d::Zero());
  for (int it = 0; it < iters; ++it) {
    Eigen::Vector2d prev = v;
    for (std::size_t s = 0; s < sets.size(); ++s) {
      Eigen::Vector2d w = v + inc[s];
      Eigen::Vector2d p = sets[s].project(w);
      inc[s] = w - p;
      v = p;
    }
    if ((v - prev).lpNorm<Eigen::Infinity>() < 1e-14) break;
  }
  return v;
}

inline Eigen::Vector2d relu_hull_project(double a, double c, double l, double u) {
  if (l == u) return {l, std::max(0.0, l)};
  std::vector<HalfPlane> sets;
  if (l >= 0.0) {
    sets.push_back({{-1.0, 1.0}, 0.0, true});  // y = x
    sets.push_back({{1.0, 0.0}, l, false});    // x >= l
    sets.push_back({{-1.0, 0.0}, -u, false});  // x <= u
  } else if (u <= 0.0) {
    sets.push_back({{0.0, 1.0}, 0.0, true});   // y = 0
    sets.push_back({{1.0, 0.0}, l, false});
    sets.push_back({{-1.0, 0.0}, -u, false});
  } else {
    double s = u / (u - l);
    sets.push_back({{-1.0, 1.0}, 0.0, false});  // y >= x
    sets.push_back({{0.0, 1.0}, 0.0, false});   // y >= 0
    sets.push_back({{s, -1.0}, s * l, false});  // y <= s (x - l)
  }
  return dykstra({a, c}, sets);
}

// ---------------------------------------------------------------------------
// Affine graph projection via the dense KKT system
//   [ I   0   W^T ] [y]   [ a]
//   [ 0   I   -I  ] [z] = [ c]
//   [ W  -I    0  ] [nu]  [-b]

inline void affine_graph_kkt(const Eigen::VectorXd& a, const Eigen::VectorXd& c,
                             const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                             Eigen::VectorXd& y, Eigen::VectorXd& z) {
  const Eigen::Index n = W.cols(), m = W.rows();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + 2 * m, n + 2 * m);
  K.topLeftCorner(n, n).setIdentity();
  K.block(0, n + m, n, m) = W.transpose();
  K.block(n, n, m, m).setIdentity();
  K.block(n, n + m, m, m) = -Eigen::MatrixXd::Identity(m, m);
  K.block(n + m, 0, m, n) = W;
  K.block(n + m, n, m, m) = -Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd rhs(n + 2 * m);
  rhs << a, c, -b;
  Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
  y = sol.head(n);
  z = sol.segment(n, m);
}

// ---------------------------------------------------------------------------
// l1-ball projection by the full-sort thresholding formula.

inline Eigen::VectorXd l1_project_sorted(const Eigen::VectorXd& w, double r) {
  if (w.lpNorm<1>() <= r) return w;
  const Eigen::Index n = w.size();
  std::vector<double> mag(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) mag[static_cast<std::size_t>(i)] = std::abs(w[i]);
  std::sort(mag.begin(), mag.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cum += mag[static_cast<std::size_t>(j)];
    double cand = (cum - r) / static_cast<double>(j + 1);
    if (cand < mag[static_cast<std::size_t>(j)]) theta = cand;
  }
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i)
    out[i] = std::copysign(std::max(std::abs(w[i]) - theta, 0.0), w[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Dense matrix of a circular cross-correlation on a (ch, h, w) grid.

inline Eigen::MatrixXd circulant_matrix(const splitcert::Tensor& kernels, std::int64_t h,
                                        std::int64_t w) {
  const std::int64_t oc = kernels.shape[0], ic = kernels.shape[1];
  const std::int64_t kh = kernels.shape[2], kw = kernels.shape[3];
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(oc * h * w, ic * h * w);
  for (std::int64_t j = 0; j < oc; ++j)
    for (std::int64_t py = 0; py < h; ++py)
      for (std::int64_t px = 0; px < w; ++px)
        for (std::int64_t i = 0; i < ic; ++i)
          for (std::int64_t qy = 0; qy < kh; ++qy)
            for (std::int64_t qx = 0; qx < kw; ++qx) {
              std::int64_t sy = (py + qy) % h, sx = (px + qx) % w;
              W((j * h + py) * w + px, (i * h + sy) * w + sx) +=
                  kernels[((j * ic + i) * kh + qy) * kw + qx];
            }
  return W;
}

// ---------------------------------------------------------------------------
// Direct loop-nest reference for a standard zero-padded strided convolution.

inline Eigen::VectorXd reference_conv(const splitcert::ConvSpec& spec,
                                      const Eigen::VectorXd& x) {
  const std::int64_t ic = spec.input_shape[0], h = spec.input_shape[1],
                     w = spec.input_shape[2];
  const std::int64_t oc = spec.kernels.shape[0], kh = spec.kernels.shape[2],
                     kw = spec.kernels.shape[3];
  const std::int64_t ho = (h + 2 * spec.pad_h - kh) / spec.stride_h + 1;
  const std::int64_t wo = (w + 2 * spec.pad_w - kw) / spec.stride_w + 1;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(oc * ho * wo);
  for (std::int64_t j = 0; j < oc; ++j)
    for (std::int64_t oy = 0; oy < ho; ++oy)
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        double acc = spec.bias ? (*spec.bias)[j] : 0.0;
        for (std::int64_t i = 0; i < ic; ++i)
          for (std::int64_t qy = 0; qy < kh; ++qy)
            for (std::int64_t qx = 0; qx < kw; ++qx) {
              std::int64_t sy = oy * spec.stride_h + qy - spec.pad_h;
              std::int64_t sx = ox * spec.stride_w + qx - spec.pad_w;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              acc += spec.kernels[((j * ic + i) * kh + qy) * kw + qx] *
                     x[(i * h + sy) * w + sx];
            }
        z[(j * ho + oy) * wo + ox] = acc;
      }
  return z;
}

// ---------------------------------------------------------------------------
// Random fully-connected ReLU network builders.

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows,
                                     Eigen::Index cols, double scale = 1.0) {
  std::uniform_real_distribution<double> unif(-scale, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = unif(rng);
  return m;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n,
                                     double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

/// Affine/ReLU stack: dims = {n0, n1, ..., nL}; ReLU after every affine layer
/// except the last.
inline splitcert::Network random_relu_net(std::mt19937_64& rng,
                                          const std::vector<std::int64_t>& dims,
                                          double scale = 1.0) {
  splitcert::Network net;
  net.input_shape = {dims.front()};
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    Eigen::MatrixXd W = random_matrix(rng, dims[k + 1], dims[k], scale);
    Eigen::VectorXd b = random_vector(rng, dims[k + 1], scale);
    net.layers.push_back(splitcert::make_affine_layer(W, b));
    if (k + 2 < dims.size())
      net.layers.push_back(splitcert::make_relu_layer({dims[k + 1]}));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Exhaustive activation-pattern attack search for small Affine/ReLU stacks over
// a box. For every sign pattern of the unstable units the induced affine map is
// minimized analytically over the box; each candidate is re-evaluated with the
// true network, so the returned value is always attained by a feasible point.

struct AttackResult {
  double best_value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
};

inline AttackResult pattern_attack(const splitcert::Network& net, const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi, const Eigen::VectorXd& c,
                                   const std::vector<std::vector<int>>& unstable) {
  using namespace splitcert;
  auto value_at = [&](const Eigen::VectorXd& x) {
    return c.dot(forward_batch(net, x).back().col(0));
  };

  AttackResult result;
  auto consider = [&](Eigen::VectorXd x) {
    x = x.cwiseMax(lo).cwiseMin(hi);
    double v = value_at(x);
    if (v < result.best_value) {
      result.best_value = v;
      result.best_x = x;
    }
  };
  consider(0.5 * (lo + hi));
  consider(lo);
  consider(hi);

  std::size_t total_unstable = 0;
  for (const auto& layer_unstable : unstable) total_unstable += layer_unstable.size();
  const std::size_t patterns = std::size_t{1} << total_unstable;

  // Activation of stable units under the midpoint forward pass fixes their gate.
  auto mids = forward_batch(net, 0.5 * (lo + hi));

  for (std::size_t mask = 0; mask < patterns; ++mask) {
    // Compose the affine map induced by this gate pattern.
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(net.input_dim(), net.input_dim());
    Eigen::VectorXd d = Eigen::VectorXd::Zero(net.input_dim());
    std::size_t bit = 0;
    std::size_t relu_idx = 0;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
      const Layer& layer = net.layers[k];
      if (layer.kind == LayerKind::Affine) {
        d = layer.W * d + layer.b;
        A = layer.W * A;
      } else if (layer.kind == LayerKind::ReLU) {
        Eigen::VectorXd pre = mids[k].col(0);
        Eigen::VectorXd gate(pre.size());
        for (Eigen::Index i = 0; i < pre.size(); ++i) gate[i] = pre[i] > 0.0 ? 1.0 : 0.0;
        for (int ui : unstable[relu_idx]) {
          gate[ui] = (mask >> bit) & 1u ? 1.0 : 0.0;
          ++bit;
        }
        A = gate.asDiagonal() * A;
        d = gate.asDiagonal() * d;
        ++relu_idx;
      } else {
        Eigen::MatrixXd Ad;
        layer.apply_linear(A, Ad);
        Eigen::MatrixXd dd;
        layer.apply_linear(d, dd);
        A = Ad;
        d = dd.col(0) + layer.constant_term();
      }
    }
    // argmin over the box of (c^T A) x + c^T d, then verified on the true net.
    Eigen::VectorXd g = A.transpose() * c;
    Eigen::VectorXd cand(net.input_dim());
    for (Eigen::Index i = 0; i < cand.size(); ++i) cand[i] = g[i] > 0.0 ? lo[i] : hi[i];
    consider(cand);
  }
  return result;
}

/// Exact optimum of c^T f(x) over a box for a network whose ReLUs are all
/// stable under [lo, hi] pre-activation bounds (so f is affine on the box).
inline double stable_box_optimum(const splitcert::Network& net, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi, const Eigen::VectorXd& c) {
  using namespace splitcert;
  auto mids = forward_batch(net, 0.5 * (lo + hi));
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(net.input_dim(), net.input_dim());
  Eigen::VectorXd d = Eigen::VectorXd::Zero(net.input_dim());
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const Layer& layer = net.layers[k];
    if (layer.kind == LayerKind::ReLU) {
      Eigen::VectorXd pre = mids[k].col(0);
      Eigen::VectorXd gate(pre.size());
      for (Eigen::Index i = 0; i < pre.size(); ++i) gate[i] = pre[i] > 0.0 ? 1.0 : 0.0;
      A = gate.asDiagonal() * A;
      d = gate.asDiagonal() * d;
    } else {
      Eigen::MatrixXd An;
      layer.apply_linear(A, An);
      Eigen::MatrixXd dn;
      layer.apply_linear(d, dn);
      A = An;
      d = dn.col(0) + layer.constant_term();
    }
  }
  Eigen::VectorXd g = A.transpose() * c;
  double val = c.dot(d);
  for (Eigen::Index i = 0; i < g.size(); ++i)
    val += g[i] > 0.0 ? g[i] * lo[i] : g[i] * hi[i];
  return val;
}

}  // namespace oracles
