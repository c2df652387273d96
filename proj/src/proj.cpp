#include "splitcert/proj.hpp"

#include <algorithm>
#include <cmath>

namespace splitcert {

ReluHullParams ReluHullParams::from_interval(double l, double u) {
  if (!(l <= u)) throw ShapeError("relu hull requires l <= u");
  ReluHullParams h;
  h.l = l;
  h.u = u;
  h.y_l = std::max(0.0, l);
  h.y_u = std::max(0.0, u);
  h.s = (u > l) ? (h.y_u - h.y_l) / (u - l) : 0.0;
  return h;
}

namespace {
// Projection onto the segment from (x0,y0) to (x1,y1).
inline void project_segment(double a, double c, double x0, double y0, double x1, double y1,
                            double& px, double& py) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((a - x0) * dx + (c - y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  px = x0 + t * dx;
  py = y0 + t * dy;
}
}  // namespace

void project_relu_hull(double a, double c, const ReluHullParams& hull, double& x_out,
                       double& y_out) {
  const double l = hull.l, u = hull.u;
  if (l == u) {  // degenerate interval: the hull is a single point
    x_out = l;
    y_out = hull.y_l;
    return;
  }
  if (l >= 0.0) {  // segment y = x over [l, u]
    double t = std::clamp(0.5 * (a + c), l, u);
    x_out = t;
    y_out = t;
    return;
  }
  if (u <= 0.0) {  // segment y = 0 over [l, u]
    x_out = std::clamp(a, l, u);
    y_out = 0.0;
    return;
  }

  // Triangle with vertices (l, 0), (0, 0), (u, u) for l < 0 < u. Interior
  // points are fixed by the projection.
  const double s = hull.s;
  const double chord = s * (a - l);  // chord height at a (y_l = 0 here)
  if (a >= l && a <= u && c >= std::max(0.0, a) && c <= chord) {
    x_out = a;
    y_out = c;
    return;
  }

  // Facet candidates in fixed order: y = x on [0, u], the chord, y = 0 on
  // [l, 0]. Equidistant candidates keep the earliest index.
  double cx[3], cy[3];
  project_segment(a, c, 0.0, 0.0, u, u, cx[0], cy[0]);
  project_segment(a, c, l, 0.0, u, u, cx[1], cy[1]);
  project_segment(a, c, l, 0.0, 0.0, 0.0, cx[2], cy[2]);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    double d = (a - cx[i]) * (a - cx[i]) + (c - cy[i]) * (c - cy[i]);
    if (d < best_d - 1e-12) {
      best_d = d;
      best = i;
    }
  }
  x_out = cx[best];
  y_out = cy[best];
}

void project_box(const Eigen::VectorXd& v, const Eigen::VectorXd& lower,
                 const Eigen::VectorXd& upper, Eigen::VectorXd& out) {
  if (v.size() != lower.size() || v.size() != upper.size())
    throw ShapeError("box projection shape mismatch");
  out = v.cwiseMax(lower).cwiseMin(upper);
}

Tensor project_box(const Tensor& v, const Tensor& lower, const Tensor& upper) {
  if (v.shape != lower.shape || v.shape != upper.shape)
    throw ShapeError("box projection shape mismatch");
  Eigen::VectorXd out;
  project_box(v.vec(), lower.vec(), upper.vec(), out);
  Tensor t = Tensor::from_vector(out);
  t.shape = v.shape;
  return t;
}

namespace {

// Simplex-style l1 projection of w (already centered) to radius r, via the
// pivot method on |w|; expected linear time through nth_element partitioning.
Eigen::VectorXd project_l1(const Eigen::VectorXd& w, double r) {
  const Eigen::Index n = w.size();
  if (w.lpNorm<1>() <= r) return w;
  std::vector<double> mag(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) mag[static_cast<std::size_t>(i)] = std::abs(w[i]);
  // Find theta such that sum(max(|w_i| - theta, 0)) = r.
  double lo_sum = 0.0;
  std::size_t lo_count = 0;
  auto begin = mag.begin(), end = mag.end();
  double theta = 0.0;
  while (begin != end) {
    auto mid = begin + (end - begin) / 2;
    std::nth_element(begin, mid, end, std::greater<double>());
    double pivot = *mid;
    double above_sum = lo_sum;
    std::size_t above_count = lo_count;
    for (auto it = begin; it != mid + 1; ++it) {
      above_sum += *it;
      ++above_count;
    }
    // theta candidate if exactly the elements >= pivot stay active
    double cand = (above_sum - r) / static_cast<double>(above_count);
    if (cand < pivot) {
      // pivot element stays active; recurse on the smaller elements
      lo_sum = above_sum;
      lo_count = above_count;
      theta = cand;
      begin = mid + 1;
    } else {
      end = mid;
    }
  }
  theta = (lo_sum - r) / static_cast<double>(lo_count);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = std::max(std::abs(w[i]) - theta, 0.0);
    out[i] = std::copysign(m, w[i]);
  }
  return out;
}

}  // namespace

Eigen::VectorXd project_lp_ball(const Eigen::VectorXd& v, const Eigen::VectorXd& center,
                                double radius, double p) {
  if (v.size() != center.size()) throw ShapeError("lp ball projection shape mismatch");
  Eigen::VectorXd w = v - center;
  if (std::isinf(p)) {
    return center + w.cwiseMax(-radius).cwiseMin(radius);
  }
  if (p == 2.0) {
    double norm = w.norm();
    if (norm <= radius) return v;
    return center + w * (radius / norm);
  }
  if (p == 1.0) {
    return center + project_l1(w, radius);
  }
  throw ShapeError("lp ball projection supports p in {1, 2, inf}");
}

AffineProjCache::AffineProjCache(const Eigen::MatrixXd& W) {
  const Eigen::Index n_in = W.cols(), n_out = W.rows();
  constexpr Eigen::Index kMaxDense = 20000;
  if (std::min(n_in, n_out) > kMaxDense)
    throw GeometryError("dense affine factorization too large; use the conv path");
  W_copy_ = W;
  if (n_out < n_in) {
    // Expanding layer: factor (I + W W^T) and solve via the Woodbury identity.
    woodbury_ = true;
    llt_.compute(Eigen::MatrixXd::Identity(n_out, n_out) + W * W.transpose());
  } else {
    llt_.compute(Eigen::MatrixXd::Identity(n_in, n_in) + W.transpose() * W);
  }
  if (llt_.info() != Eigen::Success)
    throw SolverError("factorization of I + W^T W failed");  // cannot happen: SPD >= I
}

Eigen::MatrixXd AffineProjCache::solve(const Eigen::MatrixXd& rhs) const {
  if (woodbury_) {
    // (I + W^T W)^{-1} = I - W^T (I + W W^T)^{-1} W
    return rhs - W_copy_.transpose() * llt_.solve(W_copy_ * rhs);
  }
  return llt_.solve(rhs);
}

std::shared_ptr<AffineProjCache> build_affine_cache(const Layer& layer) {
  if (layer.kind != LayerKind::Affine)
    throw ShapeError("affine cache requires a dense affine layer");
  return std::make_shared<AffineProjCache>(layer.W);
}

void project_affine_graph(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                          const Layer& layer, const AffineProjCache& cache,
                          Eigen::MatrixXd& y, Eigen::MatrixXd& z) {
  if (a.rows() != layer.dim_in() || c.rows() != layer.dim_out() || a.cols() != c.cols())
    throw ShapeError("affine graph projection shape mismatch");
  y = cache.solve(a + layer.W.transpose() * (c.colwise() - layer.b));
  z.noalias() = layer.W * y;
  z.colwise() += layer.b;
}

void project_selection_graph(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                             const Layer& layer, Eigen::MatrixXd& y, Eigen::MatrixXd& z) {
  if (!layer.is_selection_like()) throw ShapeError("not a selection-structured layer");
  if (a.rows() != layer.dim_in() || c.rows() != layer.dim_out() || a.cols() != c.cols())
    throw ShapeError("selection graph projection shape mismatch");
  const Eigen::Index cols = a.cols();
  Eigen::VectorXd ct = layer.constant_term();
  if (layer.kind == LayerKind::Bias) {
    y = 0.5 * (a + c);
    y.colwise() -= 0.5 * layer.b;
    z = y;
    z.colwise() += layer.b;
    return;
  }
  y = a;
  z.resize(layer.dim_out(), cols);
  for (std::int64_t o = 0; o < layer.dim_out(); ++o) {
    auto src = layer.indices[static_cast<std::size_t>(o)];
    if (src < 0) {
      z.row(o).setConstant(ct[o]);  // forced by z = S y + b
    } else {
      y.row(src) = 0.5 * (a.row(src) + c.row(o) - Eigen::RowVectorXd::Constant(cols, ct[o]));
      z.row(o) = y.row(src) + Eigen::RowVectorXd::Constant(cols, ct[o]);
    }
  }
}

}  // namespace splitcert
