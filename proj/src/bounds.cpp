#include "splitcert/bounds.hpp"

#include <fstream>

#include <json.hpp>

#include "splitcert/io_detail.hpp"
#include "splitcert/solver.hpp"

namespace splitcert {

InputSet InputSet::box(Tensor lower, Tensor upper) {
  InputSet s;
  s.kind = InputKind::Box;
  s.lower = std::move(lower);
  s.upper = std::move(upper);
  s.validate();
  return s;
}

InputSet InputSet::lp_ball(Tensor center, double radius, double p) {
  InputSet s;
  s.kind = InputKind::LpBall;
  s.center = std::move(center);
  s.radius = radius;
  s.p = p;
  s.validate();
  return s;
}

void InputSet::validate() const {
  if (kind == InputKind::Box) {
    lower.validate();
    upper.validate();
    if (lower.shape != upper.shape) throw ShapeError("box bounds shape mismatch");
    for (std::int64_t i = 0; i < lower.numel(); ++i)
      if (!(lower[i] <= upper[i])) throw ShapeError("box requires lower <= upper");
  } else {
    center.validate();
    if (!(radius > 0.0)) throw ShapeError("lp ball requires radius > 0");
    if (p != 1.0 && p != 2.0 && !std::isinf(p))
      throw ShapeError("lp ball supports p in {1, 2, inf}");
  }
}

void InputSet::bounding_box(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
  if (kind == InputKind::Box) {
    lo = lower.vec();
    hi = upper.vec();
  } else {
    // exact for p = inf; circumscribing box for p in {1, 2}
    lo = center.vec().array() - radius;
    hi = center.vec().array() + radius;
  }
}

Eigen::VectorXd InputSet::center_point() const {
  if (kind == InputKind::Box) return 0.5 * (lower.vec() + upper.vec());
  return center.vec();
}

bool InputSet::contains(const Eigen::VectorXd& v, double tol) const {
  if (kind == InputKind::Box)
    return (v.array() >= lower.vec().array() - tol).all() &&
           (v.array() <= upper.vec().array() + tol).all();
  Eigen::VectorXd w = v - center.vec();
  double norm = std::isinf(p) ? w.lpNorm<Eigen::Infinity>()
                              : (p == 1.0 ? w.lpNorm<1>() : w.norm());
  return norm <= radius + tol;
}

void BoundsCache::validate(const Network& net) const {
  auto dims = net.layer_dims();
  if (lower.size() != dims.size() || upper.size() != dims.size())
    throw ShapeError("bounds cache must cover x_0..x_l");
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (lower[k].numel() != dims[k] || upper[k].numel() != dims[k])
      throw ShapeError("bounds cache dim mismatch at layer " + std::to_string(k));
    for (std::int64_t i = 0; i < lower[k].numel(); ++i)
      if (!(lower[k][i] <= upper[k][i]))
        throw ShapeError("bounds cache requires lower <= upper");
  }
}

namespace {

Tensor tensor_with_shape(Eigen::VectorXd v, const Shape& shape) {
  Tensor t = Tensor::from_vector(v);
  t.shape = shape;
  return t;
}

}  // namespace

BoundsCache interval_propagate(const Network& net, const InputSet& input) {
  net.validate();
  BoundsCache cache;
  Eigen::VectorXd lo, hi;
  input.bounding_box(lo, hi);
  if (lo.size() != net.input_dim()) throw ShapeError("input set dim mismatch");
  cache.lower.push_back(tensor_with_shape(lo, net.input_shape));
  cache.upper.push_back(tensor_with_shape(hi, net.input_shape));
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const Layer& layer = net.layers[k];
    if (layer.kind == LayerKind::ReLU) {
      lo = lo.cwiseMax(0.0);
      hi = hi.cwiseMax(0.0);
    } else {
      Eigen::VectorXd mid = 0.5 * (lo + hi), rad = 0.5 * (hi - lo);
      Eigen::MatrixXd mid_out;
      layer.apply_linear(mid, mid_out);
      Eigen::VectorXd c = mid_out.col(0) + layer.constant_term();
      Eigen::VectorXd r = layer.apply_abs(rad);
      lo = c - r;
      hi = c + r;
    }
    cache.lower.push_back(tensor_with_shape(lo, layer.shape_out));
    cache.upper.push_back(tensor_with_shape(hi, layer.shape_out));
  }
  return cache;
}

namespace {

// Fixed-slope linear relaxation of one ReLU neuron on [l, u]: a lower line
// through the origin (slope 0 or 1, whichever keeps more area under the true
// function) and the chord as the upper line.
struct ReluLines {
  double lo_slope, lo_int, up_slope, up_int;
};

ReluLines relu_lines(double l, double u) {
  if (l >= 0.0) return {1.0, 0.0, 1.0, 0.0};
  if (u <= 0.0) return {0.0, 0.0, 0.0, 0.0};
  if (l == u) {
    double v = std::max(0.0, l);
    return {0.0, v, 0.0, v};
  }
  double y_l = std::max(0.0, l), y_u = std::max(0.0, u);
  double s = (y_u - y_l) / (u - l);
  double lo_slope = (u >= -l) ? 1.0 : 0.0;
  return {lo_slope, 0.0, s, y_l - s * l};
}

}  // namespace

BoundsCache linear_bound_propagate(const Network& net, const InputSet& input) {
  net.validate();
  Eigen::VectorXd in_lo, in_hi;
  input.bounding_box(in_lo, in_hi);
  if (in_lo.size() != net.input_dim()) throw ShapeError("input set dim mismatch");
  const Eigen::VectorXd in_mid = 0.5 * (in_lo + in_hi), in_rad = 0.5 * (in_hi - in_lo);

  BoundsCache cache;
  cache.lower.push_back(tensor_with_shape(in_lo, net.input_shape));
  cache.upper.push_back(tensor_with_shape(in_hi, net.input_shape));

  const std::size_t ell = net.layers.size();
  for (std::size_t j = 1; j <= ell; ++j) {
    const std::int64_t nj = net.layers[j - 1].dim_out();
    Eigen::MatrixXd A_lo = Eigen::MatrixXd::Identity(nj, nj), A_up = A_lo;
    Eigen::VectorXd d_lo = Eigen::VectorXd::Zero(nj), d_up = d_lo;
    for (std::size_t kk = j; kk-- > 0;) {
      const Layer& layer = net.layers[kk];
      if (layer.kind == LayerKind::ReLU) {
        const auto& l = cache.lower[kk];
        const auto& u = cache.upper[kk];
        for (Eigen::Index row = 0; row < nj; ++row) {
          for (std::int64_t i = 0; i < layer.dim_in(); ++i) {
            ReluLines lines = relu_lines(l[i], u[i]);
            double a_l = A_lo(row, i), a_u = A_up(row, i);
            // lower-bound function: keep the relaxation side that under-estimates
            if (a_l >= 0.0) {
              A_lo(row, i) = a_l * lines.lo_slope;
              d_lo[row] += a_l * lines.lo_int;
            } else {
              A_lo(row, i) = a_l * lines.up_slope;
              d_lo[row] += a_l * lines.up_int;
            }
            if (a_u >= 0.0) {
              A_up(row, i) = a_u * lines.up_slope;
              d_up[row] += a_u * lines.up_int;
            } else {
              A_up(row, i) = a_u * lines.lo_slope;
              d_up[row] += a_u * lines.lo_int;
            }
          }
        }
      } else {
        Eigen::VectorXd ct = layer.constant_term();
        d_lo += A_lo * ct;
        d_up += A_up * ct;
        if (layer.kind == LayerKind::Affine) {
          A_lo = A_lo * layer.W;
          A_up = A_up * layer.W;
        } else {
          Eigen::MatrixXd A_lo_new(nj, layer.dim_in()), A_up_new(nj, layer.dim_in());
          for (Eigen::Index row = 0; row < nj; ++row) {
            A_lo_new.row(row) = layer.apply_transpose(A_lo.row(row).transpose()).transpose();
            A_up_new.row(row) = layer.apply_transpose(A_up.row(row).transpose()).transpose();
          }
          A_lo.swap(A_lo_new);
          A_up.swap(A_up_new);
        }
      }
    }
    Eigen::VectorXd lo = A_lo * in_mid - A_lo.cwiseAbs() * in_rad + d_lo;
    Eigen::VectorXd hi = A_up * in_mid + A_up.cwiseAbs() * in_rad + d_up;
    cache.lower.push_back(tensor_with_shape(lo, net.layers[j - 1].shape_out));
    cache.upper.push_back(tensor_with_shape(hi, net.layers[j - 1].shape_out));
  }
  return cache;
}

BoundsCache tighten_bounds_admm(const Network& net, const InputSet& input,
                                const BoundsCache& seed_bounds, const SolverConfig& cfg,
                                std::vector<int>* fallback_layers) {
  net.validate();
  seed_bounds.validate(net);
  BoundsCache cache = seed_bounds;
  SolverConfig inner_cfg = cfg;
  inner_cfg.trace_path.clear();  // tracing belongs to the caller's final solve
  const std::size_t ell = net.layers.size();
  for (std::size_t k = 1; k <= ell; ++k) {
    Network prefix;
    prefix.input_shape = net.input_shape;
    prefix.layers.assign(net.layers.begin(), net.layers.begin() + static_cast<long>(k));
    BoundsCache prefix_bounds;
    prefix_bounds.lower.assign(cache.lower.begin(), cache.lower.begin() + static_cast<long>(k + 1));
    prefix_bounds.upper.assign(cache.upper.begin(), cache.upper.begin() + static_cast<long>(k + 1));

    const std::int64_t nk = prefix.output_dim();
    LinearObjective obj;
    obj.c.resize(nk, 2 * nk);
    obj.c << Eigen::MatrixXd::Identity(nk, nk), -Eigen::MatrixXd::Identity(nk, nk);

    Certificate cert = solve(prefix, input, prefix_bounds, obj, inner_cfg);
    bool fell_back = false;
    for (std::int64_t i = 0; i < nk; ++i) {
      double lo = cache.lower[k][i], hi = cache.upper[k][i];
      if (cert.certified[static_cast<std::size_t>(i)])
        lo = std::max(lo, cert.lower_bound[static_cast<std::size_t>(i)]);
      else
        fell_back = true;
      if (cert.certified[static_cast<std::size_t>(nk + i)])
        hi = std::min(hi, -cert.lower_bound[static_cast<std::size_t>(nk + i)]);
      else
        fell_back = true;
      if (lo > hi) lo = hi = 0.5 * (lo + hi);  // numerical slack only
      cache.lower[k].data[static_cast<std::size_t>(i)] = lo;
      cache.upper[k].data[static_cast<std::size_t>(i)] = hi;
    }
    if (fell_back && fallback_layers) fallback_layers->push_back(static_cast<int>(k));
  }
  return cache;
}

BoundsCache compute_bounds(const Network& net, const InputSet& input, BoundSource source,
                           const SolverConfig& cfg, std::vector<int>* fallback_layers) {
  switch (source) {
    case BoundSource::Interval:
      return interval_propagate(net, input);
    case BoundSource::Linear:
      return linear_bound_propagate(net, input);
    case BoundSource::Admm:
      return tighten_bounds_admm(net, input, linear_bound_propagate(net, input), cfg,
                                 fallback_layers);
  }
  throw ShapeError("unknown bound source");
}

void save_bounds(const BoundsCache& cache, const std::string& path) {
  nlohmann::json j;
  j["lower"] = nlohmann::json::array();
  j["upper"] = nlohmann::json::array();
  for (const auto& t : cache.lower) j["lower"].push_back(detail::tensor_to_json(t));
  for (const auto& t : cache.upper) j["upper"].push_back(detail::tensor_to_json(t));
  std::ofstream f(path);
  if (!f) throw IoError("cannot open file for writing: " + path);
  f << j.dump(2) << "\n";
}

BoundsCache load_bounds(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open bounds file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bounds file is not valid JSON: ") + e.what());
  }
  BoundsCache cache;
  for (const auto& t : j.at("lower")) cache.lower.push_back(detail::tensor_from_json(t));
  for (const auto& t : j.at("upper")) cache.upper.push_back(detail::tensor_from_json(t));
  return cache;
}

}  // namespace splitcert
