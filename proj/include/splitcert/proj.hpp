#pragma once

#include <memory>

#include "splitcert/model.hpp"

namespace splitcert {

/// Parameters of the ReLU convex hull over a pre-activation interval [l, u].
struct ReluHullParams {
  double l = 0.0, u = 0.0;
  double y_l = 0.0, y_u = 0.0;
  double s = 0.0;  // chord slope, defined when u > l

  static ReluHullParams from_interval(double l, double u);
};

/// Nearest point of the ReLU hull to (a, c): the triangle for l < 0 < u,
/// otherwise the corresponding line segment. Candidates are tried in facet
/// order y=x, chord, y=0; ties within 1e-12 keep the earliest.
void project_relu_hull(double a, double c, const ReluHullParams& hull, double& x_out,
                       double& y_out);

void project_box(const Eigen::VectorXd& v, const Eigen::VectorXd& lower,
                 const Eigen::VectorXd& upper, Eigen::VectorXd& out);
Tensor project_box(const Tensor& v, const Tensor& lower, const Tensor& upper);

Eigen::VectorXd project_lp_ball(const Eigen::VectorXd& v, const Eigen::VectorXd& center,
                                double radius, double p);

/// Cached factorization for repeated solves with (I + W^T W)^{-1}. The factor
/// is taken in the smaller of the two dimensions; for wide solves the Woodbury
/// identity is applied on top of (I + W W^T).
class AffineProjCache {
 public:
  explicit AffineProjCache(const Eigen::MatrixXd& W);

  /// Solves (I + W^T W) y = rhs, column-wise.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

 private:
  const Eigen::MatrixXd* W_ = nullptr;  // set only on the Woodbury path
  Eigen::MatrixXd W_copy_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  bool woodbury_ = false;
};

std::shared_ptr<AffineProjCache> build_affine_cache(const Layer& layer);

/// Euclidean projection of (a, c) onto the graph {(y, z) : z = W y + b} of a
/// dense affine layer.
void project_affine_graph(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                          const Layer& layer, const AffineProjCache& cache,
                          Eigen::MatrixXd& y, Eigen::MatrixXd& z);

/// Graph projection for selection-structured layers (pad/crop/downsample/bias)
/// in O(n), no cache needed.
void project_selection_graph(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                             const Layer& layer, Eigen::MatrixXd& y, Eigen::MatrixXd& z);

}  // namespace splitcert
