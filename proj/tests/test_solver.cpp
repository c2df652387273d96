#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "splitcert/driver.hpp"
#include "splitcert/solver.hpp"
#include "oracles.hpp"

using namespace splitcert;

namespace {

Tensor tensor1d(std::initializer_list<double> vals) {
  Tensor t;
  t.shape = {static_cast<std::int64_t>(vals.size())};
  t.data = vals;
  return t;
}

InputSet inf_ball(std::mt19937_64& rng, Eigen::Index n, double radius) {
  return InputSet::lp_ball(Tensor::from_vector(oracles::random_vector(rng, n)), radius,
                           std::numeric_limits<double>::infinity());
}

}  // namespace

TEST_CASE("single affine layer over a box reaches the analytic optimum") {
  Eigen::MatrixXd W(2, 2);
  W << 1, -1, 2, 0.5;
  Eigen::VectorXd b(2);
  b << 0.25, -0.5;
  Network net;
  net.input_shape = {2};
  net.layers.push_back(make_affine_layer(W, b));
  InputSet input = InputSet::box(tensor1d({-1, -2}), tensor1d({1, 2}));

  SolverConfig cfg;
  LinearObjective obj;
  obj.c = (Eigen::MatrixXd(2, 1) << 1.0, -1.0).finished();
  BoundsCache bounds = interval_propagate(net, input);
  Certificate cert = solve(net, input, bounds, obj, cfg);

  // min over the box of c^T (W x + b): g = W^T c = (-1, -1.5); pick upper corner
  double expect = obj.c.col(0).dot(b) + (-1.0) * 1.0 + (-1.5) * 2.0;
  REQUIRE(cert.status[0] == SolveStatus::Converged);
  CHECK(cert.lower_bound[0] == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("all-stable relu net is solved exactly") {
  std::mt19937_64 rng(91);
  for (int t = 0; t < 3; ++t) {
    Network net = oracles::random_relu_net(rng, {3, 4, 2});
    // push every relu firmly to the active side
    net.layers[0].b.array() += 20.0;
    InputSet input = inf_ball(rng, 3, 0.1);
    BoundsCache bounds = interval_propagate(net, input);
    // confirm stability of the hidden relu
    for (std::int64_t i = 0; i < 4; ++i) REQUIRE(bounds.lower[1][i] > 0.0);

    LinearObjective obj;
    obj.c = oracles::random_matrix(rng, 2, 1);
    SolverConfig cfg;
    cfg.eps_abs = 1e-9;  // objective error tracks the stopping tolerance
    cfg.eps_rel = 1e-8;
    Certificate cert = solve(net, input, bounds, obj, cfg);
    Eigen::VectorXd lo, hi;
    input.bounding_box(lo, hi);
    double expect = oracles::stable_box_optimum(net, lo, hi, obj.c.col(0));
    REQUIRE(cert.status[0] == SolveStatus::Converged);
    CHECK(std::abs(cert.lower_bound[0] - expect) < 1e-6);
  }
}

TEST_CASE("batched solve matches per-entry sequential solves") {
  std::mt19937_64 rng(97);
  Network net = oracles::random_relu_net(rng, {4, 5, 3});
  InputSet input = inf_ball(rng, 4, 0.15);
  BoundsCache bounds = linear_bound_propagate(net, input);

  LinearObjective all;
  all.c = oracles::random_matrix(rng, 3, 4);
  SolverConfig cfg;
  Certificate batched = solve(net, input, bounds, all, cfg);
  for (int j = 0; j < 4; ++j) {
    LinearObjective one;
    one.c = all.c.col(j);
    Certificate single = solve(net, input, bounds, one, cfg);
    CHECK(std::abs(batched.lower_bound[static_cast<std::size_t>(j)] -
                   single.lower_bound[0]) < 1e-8);
  }
}

TEST_CASE("identical runs are bitwise deterministic") {
  std::mt19937_64 rng(101);
  Network net = oracles::random_relu_net(rng, {3, 6, 2});
  InputSet input = inf_ball(rng, 3, 0.2);
  BoundsCache bounds = linear_bound_propagate(net, input);
  LinearObjective obj;
  obj.c = oracles::random_matrix(rng, 2, 2);
  Certificate a = solve(net, input, bounds, obj, SolverConfig{});
  Certificate b = solve(net, input, bounds, obj, SolverConfig{});
  REQUIRE(a.lower_bound.size() == b.lower_bound.size());
  for (std::size_t i = 0; i < a.lower_bound.size(); ++i) {
    CHECK(a.lower_bound[i] == b.lower_bound[i]);  // exact equality
    CHECK(a.final_residuals[i].r_p == b.final_residuals[i].r_p);
  }
  CHECK(a.iters == b.iters);
}

TEST_CASE("residuals match a direct recomputation") {
  std::mt19937_64 rng(103);
  Network net = oracles::random_relu_net(rng, {3, 4, 2});
  InputSet input = inf_ball(rng, 3, 0.1);
  BoundsCache bounds = linear_bound_propagate(net, input);
  ProjectionCaches caches = build_projection_caches(net, bounds);
  LinearObjective obj;
  obj.c = oracles::random_matrix(rng, 2, 1);
  SolverConfig cfg;
  SolverState st = init_state(net, input, cfg, 1);

  for (int it = 0; it < 25; ++it) {
    auto prev_y = st.y;
    auto prev_z = st.z;
    x_update(st, net, input, obj);
    yz_update(st, net, caches);
    dual_update(st, net);
    auto res = compute_residuals(st, net, prev_y, prev_z, cfg);

    const std::size_t ell = net.layers.size();
    double rp = 0.0;
    for (std::size_t k = 0; k < ell; ++k)
      rp += (st.y[k].col(0) - st.x[k].col(0)).squaredNorm() +
            (st.x[k + 1].col(0) - st.z[k].col(0)).squaredNorm();
    double rd = (st.y[0].col(0) - prev_y[0].col(0)).squaredNorm() +
                (st.z[ell - 1].col(0) - prev_z[ell - 1].col(0)).squaredNorm();
    for (std::size_t k = 1; k < ell; ++k)
      rd += ((st.y[k].col(0) - prev_y[k].col(0)) + (st.z[k - 1].col(0) - prev_z[k - 1].col(0)))
                .squaredNorm();
    rd *= st.rho[0];
    CHECK(res[0].r_p == doctest::Approx(rp).epsilon(1e-14));
    CHECK(res[0].r_d == doctest::Approx(rd).epsilon(1e-14));
    CHECK(res[0].eps_p > 0.0);
    CHECK(res[0].eps_d > 0.0);
  }
}

TEST_CASE("residual balancing rescales duals to keep multipliers continuous") {
  std::mt19937_64 rng(107);
  Network net = oracles::random_relu_net(rng, {2, 3, 2});
  InputSet input = inf_ball(rng, 2, 0.1);
  SolverConfig cfg;
  SolverState st = init_state(net, input, cfg, 1);
  for (auto& l : st.lam) l.setRandom();
  for (auto& m : st.mu) m.setRandom();
  Eigen::MatrixXd lam0 = st.lam[0];
  double rho0 = st.rho[0];

  Residuals res;
  res.r_p = 1e4;
  res.r_d = 1.0;  // primal residual dominates: rho goes up by tau
  balance_rho(st, 0, res, cfg);
  CHECK(st.rho[0] == doctest::Approx(rho0 * cfg.balancing.tau));
  // unscaled multiplier rho * lam is unchanged
  CHECK((st.rho[0] * st.lam[0] - rho0 * lam0).lpNorm<Eigen::Infinity>() < 1e-12);

  res.r_p = 1.0;
  res.r_d = 1e4;
  balance_rho(st, 0, res, cfg);
  CHECK(st.rho[0] == doctest::Approx(rho0));

  res.r_p = 1.0;
  res.r_d = 2.0;  // within the deadband: no change
  balance_rho(st, 0, res, cfg);
  CHECK(st.rho[0] == doctest::Approx(rho0));
}

TEST_CASE("balancing and fixed rho converge to the same objective") {
  std::mt19937_64 rng(109);
  Network net = oracles::random_relu_net(rng, {4, 5, 3});
  InputSet input = inf_ball(rng, 4, 0.15);
  BoundsCache bounds = linear_bound_propagate(net, input);
  LinearObjective obj;
  obj.c = oracles::random_matrix(rng, 3, 1);

  SolverConfig on;
  on.eps_abs = 1e-8;
  on.eps_rel = 1e-7;
  SolverConfig off = on;
  off.balancing.enabled = false;
  Certificate a = solve(net, input, bounds, obj, on);
  Certificate b = solve(net, input, bounds, obj, off);
  REQUIRE(a.status[0] == SolveStatus::Converged);
  REQUIRE(b.status[0] == SolveStatus::Converged);
  CHECK(std::abs(a.lower_bound[0] - b.lower_bound[0]) < 1e-5);
  CHECK(a.rho_trace[0].size() >= 1);
}

TEST_CASE("trace csv has the documented schema") {
  std::mt19937_64 rng(113);
  Network net = oracles::random_relu_net(rng, {3, 4, 2});
  InputSet input = inf_ball(rng, 3, 0.1);
  BoundsCache bounds = linear_bound_propagate(net, input);
  LinearObjective obj;
  obj.c = oracles::random_matrix(rng, 2, 1);
  SolverConfig cfg;
  cfg.trace_path = "/tmp/splitcert_test_trace.csv";
  solve(net, input, bounds, obj, cfg);

  std::ifstream f(cfg.trace_path);
  REQUIRE(f.good());
  std::string header;
  std::getline(f, header);
  CHECK(header == "iter,r_p,r_d,eps_p,eps_d,rho,objective");
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string field;
    int fields = 0;
    while (std::getline(ss, field, ',')) {
      CHECK(!field.empty());
      ++fields;
    }
    CHECK(fields == 7);
  }
  CHECK(rows >= 1);
  std::remove(cfg.trace_path.c_str());
}

TEST_CASE("dual certificate lower-bounds the converged primal value") {
  std::mt19937_64 rng(127);
  for (int t = 0; t < 5; ++t) {
    Network net = oracles::random_relu_net(rng, {3, 5, 4, 2});
    InputSet input = inf_ball(rng, 3, 0.1);
    BoundsCache bounds = linear_bound_propagate(net, input);
    ProjectionCaches caches = build_projection_caches(net, bounds);
    LinearObjective obj;
    obj.c = oracles::random_matrix(rng, 2, 1);

    SolverConfig cfg;
    SolverState st = init_state(net, input, cfg, 1);
    double primal = 0.0;
    bool converged = false;
    int balance_gap = cfg.balancing.period, next_balance = cfg.balancing.period;
    for (int it = 1; it <= cfg.max_iter && !converged; ++it) {
      auto prev_y = st.y;
      auto prev_z = st.z;
      x_update(st, net, input, obj);
      yz_update(st, net, caches);
      dual_update(st, net);
      if (it % cfg.check_every) continue;
      auto res = compute_residuals(st, net, prev_y, prev_z, cfg);
      primal = obj.c.col(0).dot(st.x.back().col(0));
      converged =
          std::sqrt(res[0].r_p) <= res[0].eps_p && std::sqrt(res[0].r_d) <= res[0].eps_d;
      if (!converged && cfg.balancing.enabled && it >= next_balance) {
        double before = st.rho[0];
        balance_rho(st, 0, res[0], cfg);
        if (st.rho[0] != before) balance_gap *= 2;
        next_balance = it + balance_gap;
      }
    }
    REQUIRE(converged);
    Eigen::VectorXd g = dual_certificate(st, net, input, caches, obj, cfg);
    CHECK(std::isfinite(g[0]));
    // sound against the true optimum (primal itself carries tolerance error)
    double ub = empirical_upper_bound(net, input, obj.c.col(0), 2000, 11);
    CHECK(g[0] <= ub + 1e-9);
    CHECK(std::abs(g[0] - primal) < 1e-4 * (1.0 + std::abs(primal)));
  }
}

TEST_CASE("early stop still produces a sound certified bound") {
  std::mt19937_64 rng(131);
  Network net = oracles::random_relu_net(rng, {3, 6, 2});
  InputSet input = inf_ball(rng, 3, 0.2);
  BoundsCache bounds = linear_bound_propagate(net, input);
  LinearObjective obj;
  obj.c = oracles::random_matrix(rng, 2, 1);

  SolverConfig cfg;
  cfg.max_iter = 30;  // far too few to converge
  Certificate cert = solve(net, input, bounds, obj, cfg);
  REQUIRE(cert.status[0] == SolveStatus::CertifiedEarlyStop);
  CHECK(cert.certified[0]);
  double ub = empirical_upper_bound(net, input, obj.c.col(0), 2000, 7);
  CHECK(cert.lower_bound[0] <= ub + 1e-9);

  cfg.certify_early_stop = false;
  Certificate loose = solve(net, input, bounds, obj, cfg);
  CHECK(loose.status[0] == SolveStatus::MaxIter);
  CHECK(!loose.certified[0]);
}

TEST_CASE("config validation") {
  SolverConfig cfg;
  cfg.rho0 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), SolverError);
  cfg = SolverConfig{};
  cfg.balancing.tau = 0.5;
  CHECK_THROWS_AS(cfg.validate(), SolverError);
  cfg = SolverConfig{};
  cfg.max_iter = 0;
  CHECK_THROWS_AS(cfg.validate(), SolverError);
  LinearObjective obj;
  obj.c = Eigen::MatrixXd::Constant(2, 1, std::numeric_limits<double>::quiet_NaN());
  std::mt19937_64 rng(1);
  Network net = oracles::random_relu_net(rng, {2, 3, 2});
  InputSet input = inf_ball(rng, 2, 0.1);
  BoundsCache bounds = interval_propagate(net, input);
  CHECK_THROWS_AS(solve(net, input, bounds, obj, SolverConfig{}), SolverError);
}
