#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "splitcert/proj.hpp"
#include "oracles.hpp"

using namespace splitcert;

TEST_CASE("relu hull projection matches Dykstra's algorithm") {
  struct Config {
    double l, u;
  };
  const Config configs[] = {{-1.0, 2.0}, {-2.0, 0.5}, {0.3, 1.7}, {-1.5, -0.2}, {0.7, 0.7}};
  for (const auto& cfg : configs) {
    ReluHullParams hull = ReluHullParams::from_interval(cfg.l, cfg.u);
    const int n = 21;
    for (int ia = 0; ia < n; ++ia)
      for (int ic = 0; ic < n; ++ic) {
        double a = cfg.l - 2.0 + (cfg.u - cfg.l + 4.0) * ia / (n - 1);
        double c = -2.0 + (std::max(0.0, cfg.u) + 4.0) * ic / (n - 1);
        double x, y;
        project_relu_hull(a, c, hull, x, y);
        Eigen::Vector2d want = oracles::relu_hull_project(a, c, cfg.l, cfg.u);
        CHECK(std::abs(x - want[0]) < 1e-6);
        CHECK(std::abs(y - want[1]) < 1e-6);
      }
  }
}

TEST_CASE("relu hull projection is idempotent and fixes interior points") {
  ReluHullParams hull = ReluHullParams::from_interval(-1.0, 2.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-4.0, 4.0);
  for (int t = 0; t < 200; ++t) {
    double a = unif(rng), c = unif(rng);
    double x1, y1, x2, y2;
    project_relu_hull(a, c, hull, x1, y1);
    project_relu_hull(x1, y1, hull, x2, y2);
    CHECK(std::abs(x2 - x1) < 1e-12);
    CHECK(std::abs(y2 - y1) < 1e-12);
  }
  // interior point of the triangle
  double x, y;
  project_relu_hull(0.5, 0.6, hull, x, y);
  CHECK(x == 0.5);
  CHECK(y == 0.6);
}

TEST_CASE("affine graph projection matches the dense KKT oracle") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 40; ++t) {
    Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 10);
    Eigen::Index m = 2 + static_cast<Eigen::Index>(rng() % 10);
    Eigen::MatrixXd W = oracles::random_matrix(rng, m, n);
    Eigen::VectorXd b = oracles::random_vector(rng, m);
    Layer layer = make_affine_layer(W, b);
    AffineProjCache cache(W);
    Eigen::MatrixXd a = oracles::random_matrix(rng, n, 2);
    Eigen::MatrixXd c = oracles::random_matrix(rng, m, 2);
    Eigen::MatrixXd y, z;
    project_affine_graph(a, c, layer, cache, y, z);
    for (int col = 0; col < 2; ++col) {
      Eigen::VectorXd yo, zo;
      oracles::affine_graph_kkt(a.col(col), c.col(col), W, b, yo, zo);
      CHECK((y.col(col) - yo).lpNorm<Eigen::Infinity>() < 1e-10);
      CHECK((z.col(col) - zo).lpNorm<Eigen::Infinity>() < 1e-10);
    }
    // the result lies exactly on the graph
    CHECK((z - ((W * y).colwise() + b)).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("affine graph projection uses the low-rank path for wide layers") {
  std::mt19937_64 rng(7);
  Eigen::MatrixXd W = oracles::random_matrix(rng, 3, 40);  // expanding: m < n
  Eigen::VectorXd b = oracles::random_vector(rng, 3);
  Layer layer = make_affine_layer(W, b);
  AffineProjCache cache(W);
  Eigen::VectorXd a = oracles::random_vector(rng, 40);
  Eigen::VectorXd c = oracles::random_vector(rng, 3);
  Eigen::MatrixXd y, z;
  project_affine_graph(a, c, layer, cache, y, z);
  Eigen::VectorXd yo, zo;
  oracles::affine_graph_kkt(a, c, W, b, yo, zo);
  CHECK((y.col(0) - yo).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((z.col(0) - zo).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("box projection clamps componentwise") {
  Eigen::VectorXd v(3), lo(3), hi(3), out;
  v << -2, 0.5, 9;
  lo << -1, 0, 1;
  hi << 1, 1, 2;
  project_box(v, lo, hi, out);
  CHECK(out[0] == -1.0);
  CHECK(out[1] == 0.5);
  CHECK(out[2] == 2.0);
}

TEST_CASE("lp ball projections") {
  std::mt19937_64 rng(9);
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd center = oracles::random_vector(rng, 12);

  SUBCASE("points inside are fixed") {
    for (double p : {1.0, 2.0, inf}) {
      Eigen::VectorXd v = center;
      v[0] += 0.01;
      Eigen::VectorXd got = project_lp_ball(v, center, 0.5, p);
      CHECK((got - v).lpNorm<Eigen::Infinity>() < 1e-15);
    }
  }
  SUBCASE("l2 is radial") {
    Eigen::VectorXd v = center;
    v[3] += 5.0;
    Eigen::VectorXd got = project_lp_ball(v, center, 0.25, 2.0);
    CHECK((got - v).norm() == doctest::Approx(5.0 - 0.25).epsilon(1e-12));
    CHECK((got - center).norm() == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("linf clamps") {
    Eigen::VectorXd v = center.array() + 3.0;
    Eigen::VectorXd got = project_lp_ball(v, center, 1.0, inf);
    CHECK((got - center).lpNorm<Eigen::Infinity>() == doctest::Approx(1.0));
  }
  SUBCASE("l1 matches the full-sort oracle") {
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd v = oracles::random_vector(rng, 12, 2.0);
      double r = 0.1 + 2.0 * std::uniform_real_distribution<double>(0, 1)(rng);
      Eigen::VectorXd got = project_lp_ball(v, center, r, 1.0);
      Eigen::VectorXd want = center + oracles::l1_project_sorted(v - center, r);
      CHECK((got - want).lpNorm<Eigen::Infinity>() < 1e-10);
      CHECK((got - center).lpNorm<1>() <= r + 1e-10);
    }
  }
  SUBCASE("unsupported norms are rejected") {
    CHECK_THROWS_AS(project_lp_ball(center, center, 1.0, 3.0), ShapeError);
  }
}

TEST_CASE("selection graph projection agrees with the KKT oracle") {
  std::mt19937_64 rng(15);
  std::vector<Layer> layers;
  layers.push_back(make_pad_layer({1, 2, 2}, {0, 1, 1, 0}));
  layers.push_back(make_downsample_layer({1, 4, 4}, {2, 2}));
  layers.push_back(make_bias_layer(oracles::random_vector(rng, 6), {6}));
  layers.push_back(make_crop_layer({6}, {3}, {5, 1, 3}, oracles::random_vector(rng, 3)));
  for (const auto& layer : layers) {
    // materialize the selection matrix column by column
    Eigen::MatrixXd S(layer.dim_out(), layer.dim_in());
    for (std::int64_t i = 0; i < layer.dim_in(); ++i) {
      Eigen::MatrixXd e;
      layer.apply_linear(Eigen::VectorXd::Unit(layer.dim_in(), i), e);
      S.col(i) = e.col(0);
    }
    Eigen::VectorXd bias = layer.constant_term();
    Eigen::VectorXd a = oracles::random_vector(rng, layer.dim_in());
    Eigen::VectorXd c = oracles::random_vector(rng, layer.dim_out());
    Eigen::MatrixXd y, z;
    project_selection_graph(a, c, layer, y, z);
    Eigen::VectorXd yo, zo;
    oracles::affine_graph_kkt(a, c, S, bias, yo, zo);
    CHECK((y.col(0) - yo).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((z.col(0) - zo).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("degenerate hull parameters") {
  CHECK_THROWS_AS(ReluHullParams::from_interval(1.0, 0.0), ShapeError);
  ReluHullParams point = ReluHullParams::from_interval(-0.5, -0.5);
  double x, y;
  project_relu_hull(3.0, 3.0, point, x, y);
  CHECK(x == -0.5);
  CHECK(y == 0.0);
}
