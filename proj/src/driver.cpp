#include "splitcert/driver.hpp"

#include <chrono>
#include <random>

namespace splitcert {

namespace {

Tensor tensor_with_shape(const Eigen::VectorXd& v, const Shape& shape) {
  Tensor t = Tensor::from_vector(v);
  t.shape = shape;
  return t;
}

Eigen::VectorXd forward_output(const Network& net, const Eigen::VectorXd& x0) {
  return forward_batch(net, x0).back().col(0);
}

}  // namespace

VerdictReport certify_robustness(const RobustnessQuery& q) {
  const auto t0 = std::chrono::steady_clock::now();
  q.net.validate();
  q.cfg.validate();
  q.input.validate();
  if (q.x_star.numel() != q.net.input_dim()) throw ShapeError("nominal input dim mismatch");
  const std::int64_t n_out = q.net.output_dim();
  if (q.true_class < 0 || q.true_class >= n_out)
    throw GeometryError("true class out of range for network output");
  if (!q.input.contains(q.x_star.vec(), 1e-9))
    throw GeometryError("nominal input lies outside the perturbation set");

  Eigen::VectorXd logits = forward_output(q.net, q.x_star.vec());
  Eigen::Index argmax = 0;
  logits.maxCoeff(&argmax);
  if (static_cast<std::int64_t>(argmax) != q.true_class)
    throw GeometryError("nominal input misclassified: network argmax is class " +
                        std::to_string(argmax) + ", expected class " +
                        std::to_string(q.true_class));

  VerdictReport report;
  std::vector<int> fallback;
  BoundsCache bounds = compute_bounds(q.net, q.input, q.cfg.bound_source, q.cfg, &fallback);
  switch (q.cfg.bound_source) {
    case BoundSource::Interval: report.bound_source = "interval"; break;
    case BoundSource::Linear: report.bound_source = "linear"; break;
    case BoundSource::Admm: report.bound_source = "admm"; break;
  }
  report.bound_fallback_layers = fallback;

  if (n_out == 1) {  // single-output nets have nothing to compare against
    report.verdict = Verdict::CertifiedRobust;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
  }

  // Pairwise margins, one objective column per competing class.
  LinearObjective obj;
  obj.c = Eigen::MatrixXd::Zero(n_out, n_out - 1);
  for (std::int64_t i = 0, col = 0; i < n_out; ++i) {
    if (i == q.true_class) continue;
    obj.c(q.true_class, col) = 1.0;
    obj.c(i, col) = -1.0;
    report.target_classes.push_back(static_cast<int>(i));
    ++col;
  }

  report.certificate = solve(q.net, q.input, bounds, obj, q.cfg);
  report.lower_bounds = report.certificate.lower_bound;
  report.certified.assign(report.certificate.certified.begin(),
                          report.certificate.certified.end());

  // A margin bound is trusted only above a small floor: the dual certificate
  // carries floating-point round-off, so a bare `> 0` would certify ties whose
  // true margin is exactly zero.
  constexpr double kMarginFloor = 1e-9;
  bool robust = true;
  for (std::size_t i = 0; i < report.lower_bounds.size(); ++i)
    robust = robust && report.certified[i] && report.lower_bounds[i] > kMarginFloor;
  report.verdict = robust ? Verdict::CertifiedRobust : Verdict::NotCertified;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

OutputRange output_range(const Network& net, const InputSet& input, const SolverConfig& cfg) {
  net.validate();
  cfg.validate();
  input.validate();
  const std::int64_t n = net.output_dim();
  BoundsCache bounds = compute_bounds(net, input, cfg.bound_source, cfg);

  // Columns 0..n-1 minimize e_i^T x_l, columns n..2n-1 minimize -e_i^T x_l.
  LinearObjective obj;
  obj.c.resize(n, 2 * n);
  obj.c << Eigen::MatrixXd::Identity(n, n), -Eigen::MatrixXd::Identity(n, n);

  OutputRange range;
  range.certificate = solve(net, input, bounds, obj, cfg);
  Eigen::VectorXd lo(n), hi(n);
  range.certified.assign(static_cast<std::size_t>(n), false);
  const std::size_t ell = net.layers.size();
  for (std::int64_t i = 0; i < n; ++i) {
    const bool lo_ok = range.certificate.certified[static_cast<std::size_t>(i)];
    const bool hi_ok = range.certificate.certified[static_cast<std::size_t>(n + i)];
    lo[i] = lo_ok ? range.certificate.lower_bound[static_cast<std::size_t>(i)]
                  : bounds.lower[ell][i];
    hi[i] = hi_ok ? -range.certificate.lower_bound[static_cast<std::size_t>(n + i)]
                  : bounds.upper[ell][i];
    // Keep the certified interval inside the propagation box; both are sound.
    lo[i] = std::max(lo[i], bounds.lower[ell][i]);
    hi[i] = std::min(hi[i], bounds.upper[ell][i]);
    if (lo[i] > hi[i]) lo[i] = hi[i] = 0.5 * (lo[i] + hi[i]);  // numerical slack only
    range.certified[static_cast<std::size_t>(i)] = lo_ok && hi_ok;
  }
  const Shape out_shape = net.layers.back().shape_out;
  range.lower = tensor_with_shape(lo, out_shape);
  range.upper = tensor_with_shape(hi, out_shape);
  return range;
}

std::vector<ReachStep> reach_boxes(const ReachQuery& q) {
  q.dynamics.validate();
  q.cfg.validate();
  q.init_set.validate();
  if (q.dynamics.input_dim() != q.dynamics.output_dim())
    throw ShapeError("reachability dynamics must map state to state");
  if (q.horizon < 1) throw GeometryError("reach horizon must be positive");

  std::vector<ReachStep> steps;
  Network prefix;
  prefix.input_shape = q.dynamics.input_shape;
  for (int t = 1; t <= q.horizon; ++t) {
    for (const auto& layer : q.dynamics.layers) prefix.layers.push_back(layer);
    OutputRange range = output_range(prefix, q.init_set, q.cfg);
    ReachStep step;
    step.lower = range.lower;
    step.upper = range.upper;
    step.certified = true;
    for (bool c : range.certified) step.certified = step.certified && c;
    steps.push_back(std::move(step));
  }
  return steps;
}

namespace {

Eigen::VectorXd sample_input(const InputSet& set, std::mt19937_64& rng) {
  const std::int64_t n = set.dim();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (set.kind == InputKind::Box) {
    Eigen::VectorXd v(n);
    for (std::int64_t i = 0; i < n; ++i)
      v[i] = set.lower[i] + unit(rng) * (set.upper[i] - set.lower[i]);
    return v;
  }
  const Eigen::VectorXd center = set.center.vec();
  if (set.radius == 0.0) return center;
  if (std::isinf(set.p)) {
    Eigen::VectorXd v(n);
    for (std::int64_t i = 0; i < n; ++i)
      v[i] = center[i] + set.radius * (2.0 * unit(rng) - 1.0);
    return v;
  }
  if (set.p == 2.0) {
    // Gaussian direction, radius scaled by u^{1/n} for uniformity in the ball.
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd d(n);
    for (std::int64_t i = 0; i < n; ++i) d[i] = gauss(rng);
    double norm = d.norm();
    if (norm == 0.0) return center;
    double r = set.radius * std::pow(unit(rng), 1.0 / static_cast<double>(n));
    return center + d * (r / norm);
  }
  // l1 ball: exponential magnitudes normalized onto the simplex, random signs,
  // radius scaled by u^{1/n}.
  std::exponential_distribution<double> expo(1.0);
  Eigen::VectorXd d(n);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    d[i] = expo(rng);
    total += d[i];
  }
  if (total == 0.0) return center;
  double r = set.radius * std::pow(unit(rng), 1.0 / static_cast<double>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    d[i] = sign * d[i] / total;
  }
  return center + r * d;
}

Eigen::VectorXd clip_to_set(const InputSet& set, const Eigen::VectorXd& v) {
  if (set.kind == InputKind::Box) {
    Eigen::VectorXd out;
    project_box(v, set.lower.vec(), set.upper.vec(), out);
    return out;
  }
  return project_lp_ball(v, set.center.vec(), set.radius, set.p);
}

}  // namespace

double empirical_upper_bound(const Network& net, const InputSet& input,
                             const Eigen::VectorXd& c, std::int64_t samples,
                             std::uint64_t seed) {
  net.validate();
  input.validate();
  if (c.size() != net.output_dim()) throw ShapeError("objective dim mismatch");
  if (samples < 1) throw GeometryError("need at least one sample");

  std::mt19937_64 rng(seed);
  auto value_at = [&](const Eigen::VectorXd& x) { return c.dot(forward_output(net, x)); };

  Eigen::VectorXd best_x = input.center_point();
  double best = value_at(best_x);
  for (std::int64_t s = 1; s < samples; ++s) {
    Eigen::VectorXd x = sample_input(input, rng);
    double v = value_at(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }

  // Local coordinate-descent refinement from the best sample.
  Eigen::VectorXd lo, hi;
  input.bounding_box(lo, hi);
  double step = (hi - lo).lpNorm<Eigen::Infinity>() * 0.25;
  const std::int64_t n = net.input_dim();
  for (int pass = 0; pass < 40 && step > 1e-12; ++pass) {
    bool improved = false;
    for (std::int64_t i = 0; i < n; ++i) {
      for (double dir : {-1.0, 1.0}) {
        Eigen::VectorXd cand = best_x;
        cand[i] += dir * step;
        cand = clip_to_set(input, cand);
        double v = value_at(cand);
        if (v < best) {
          best = v;
          best_x = cand;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

}  // namespace splitcert
