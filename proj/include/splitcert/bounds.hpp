#pragma once

#include <string>
#include <vector>

#include "splitcert/model.hpp"

namespace splitcert {

struct SolverConfig;

enum class InputKind { Box, LpBall };

/// Admissible input region X: an axis-aligned box or an lp ball (p in {1,2,inf}).
struct InputSet {
  InputKind kind = InputKind::Box;
  // Box
  Tensor lower, upper;
  // LpBall
  Tensor center;
  double radius = 0.0;
  double p = std::numeric_limits<double>::infinity();

  static InputSet box(Tensor lower, Tensor upper);
  static InputSet lp_ball(Tensor center, double radius, double p);

  void validate() const;
  Shape shape() const { return kind == InputKind::Box ? lower.shape : center.shape; }
  std::int64_t dim() const { return shape_numel(shape()); }

  /// Smallest axis-aligned box containing the set (exact for boxes and inf balls).
  void bounding_box(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const;
  Eigen::VectorXd center_point() const;
  bool contains(const Eigen::VectorXd& v, double tol = 1e-12) const;
};

/// Per-layer intervals enclosing x_0..x_l over the input set.
struct BoundsCache {
  std::vector<Tensor> lower, upper;  // indexed by layer input 0..l

  void validate(const Network& net) const;
};

BoundsCache interval_propagate(const Network& net, const InputSet& input);
BoundsCache linear_bound_propagate(const Network& net, const InputSet& input);

/// Tightens seed bounds layer-by-layer by solving the relaxation of each
/// truncated prefix for min/max of every coordinate. `fallback_layers`, when
/// given, records layer indices where the solver failed to certify and the
/// seed bound was kept.
BoundsCache tighten_bounds_admm(const Network& net, const InputSet& input,
                                const BoundsCache& seed_bounds, const SolverConfig& cfg,
                                std::vector<int>* fallback_layers = nullptr);

enum class BoundSource { Interval, Linear, Admm };

BoundsCache compute_bounds(const Network& net, const InputSet& input, BoundSource source,
                           const SolverConfig& cfg, std::vector<int>* fallback_layers = nullptr);

void save_bounds(const BoundsCache& cache, const std::string& path);
BoundsCache load_bounds(const std::string& path);

}  // namespace splitcert
