#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitcert/solver.hpp"

namespace splitcert {

struct RobustnessQuery {
  Network net;
  Tensor x_star;
  int true_class = 0;
  InputSet input;
  SolverConfig cfg;
};

enum class Verdict { CertifiedRobust, NotCertified };

struct VerdictReport {
  Verdict verdict = Verdict::NotCertified;
  std::vector<int> target_classes;     // the i != i* objectives, in order
  std::vector<double> lower_bounds;    // per objective
  std::vector<bool> certified;         // per objective
  Certificate certificate;             // batched solve artifacts
  std::string bound_source;
  std::vector<int> bound_fallback_layers;
  double wall_seconds = 0.0;
};

/// Certifies local robustness of the true class against every other class by
/// one batched solve of the pairwise margin objectives. Refuses queries whose
/// nominal input is already misclassified.
VerdictReport certify_robustness(const RobustnessQuery& q);

struct OutputRange {
  Tensor lower, upper;
  std::vector<bool> certified;  // per output coordinate
  Certificate certificate;
};

/// Certified enclosure of the network output over the input set: one batch of
/// 2*n_out objectives (min e_i and min -e_i).
OutputRange output_range(const Network& net, const InputSet& input, const SolverConfig& cfg);

struct ReachQuery {
  Network dynamics;  // state -> state, square dims
  int horizon = 1;
  InputSet init_set;
  SolverConfig cfg;
};

struct ReachStep {
  Tensor lower, upper;
  bool certified = true;  // false when the propagation fallback box was used
};

/// Boxes enclosing x(1)..x(t) of the t-fold composition of the dynamics.
std::vector<ReachStep> reach_boxes(const ReachQuery& q);

/// Sampled (plus coordinate-descent refined) minimum of c^T f(x) over the
/// input set; an upper bound on the true optimum, companion to certificates.
double empirical_upper_bound(const Network& net, const InputSet& input,
                             const Eigen::VectorXd& c, std::int64_t samples,
                             std::uint64_t seed = 0);

}  // namespace splitcert
