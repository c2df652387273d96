// Command-line front end: certify | bounds | reach.
//
// Exit codes: 0 = certified, 1 = not certified, 2 = usage or I/O error,
// 3 = solver failure.

#include <fstream>
#include <iostream>
#include <string>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "splitcert/driver.hpp"
#include "splitcert/io_detail.hpp"

namespace {

using nlohmann::json;
using namespace splitcert;

struct RunConfig {
  std::string net_path;
  std::string input_path;
  int true_class = 0;
  std::string norm = "inf";
  double epsilon = 0.0;
  int horizon = 1;
  bool layerwise = false;

  double rho0 = 1.0;
  double eps_abs = 1e-6;
  double eps_rel = 1e-5;
  int max_iter = 20000;
  std::string balancing = "on";
  double tau = 2.0;
  double mu_rb = 10.0;
  std::string bound_source = "linear";

  std::string trace_path;
  std::string out_path;
  std::uint64_t seed = 0;
  int jobs = 0;
};

void add_common_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--net", rc.net_path, "network JSON file")->required();
  cmd->add_option("--rho0", rc.rho0, "initial penalty parameter");
  cmd->add_option("--eps-abs", rc.eps_abs, "absolute stopping tolerance");
  cmd->add_option("--eps-rel", rc.eps_rel, "relative stopping tolerance");
  cmd->add_option("--max-iter", rc.max_iter, "iteration cap");
  cmd->add_option("--balancing", rc.balancing, "residual balancing {on,off}")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--tau", rc.tau, "balancing scale factor");
  cmd->add_option("--mu-rb", rc.mu_rb, "balancing residual ratio threshold");
  cmd->add_option("--bound-source", rc.bound_source,
                  "pre-activation bound method {interval,linear,admm}")
      ->check(CLI::IsMember({"interval", "linear", "admm"}));
  cmd->add_option("--trace", rc.trace_path, "write per-check residual CSV here");
  cmd->add_option("--out", rc.out_path, "write the report JSON here (default stdout)");
  cmd->add_option("--seed", rc.seed, "seed for any sampling checks");
  cmd->add_option("--jobs", rc.jobs, "worker thread cap (0 = library default)");
}

void add_input_set_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--input", rc.input_path, "nominal input tensor JSON file")->required();
  cmd->add_option("--norm", rc.norm, "perturbation norm {1,2,inf}")
      ->check(CLI::IsMember({"1", "2", "inf"}));
  cmd->add_option("--epsilon", rc.epsilon, "perturbation radius")
      ->required()
      ->check(CLI::NonNegativeNumber);
}

SolverConfig solver_config(const RunConfig& rc) {
  SolverConfig cfg;
  cfg.rho0 = rc.rho0;
  cfg.eps_abs = rc.eps_abs;
  cfg.eps_rel = rc.eps_rel;
  cfg.max_iter = rc.max_iter;
  cfg.balancing.enabled = rc.balancing == "on";
  cfg.balancing.tau = rc.tau;
  cfg.balancing.mu = rc.mu_rb;
  if (rc.bound_source == "interval") cfg.bound_source = BoundSource::Interval;
  else if (rc.bound_source == "admm") cfg.bound_source = BoundSource::Admm;
  else cfg.bound_source = BoundSource::Linear;
  cfg.trace_path = rc.trace_path;
  cfg.validate();
  return cfg;
}

json config_json(const RunConfig& rc) {
  return json{{"net", rc.net_path},
              {"rho0", rc.rho0},
              {"eps_abs", rc.eps_abs},
              {"eps_rel", rc.eps_rel},
              {"max_iter", rc.max_iter},
              {"balancing", rc.balancing},
              {"tau", rc.tau},
              {"mu_rb", rc.mu_rb},
              {"bound_source", rc.bound_source},
              {"seed", rc.seed},
              {"jobs", rc.jobs}};
}

Tensor load_tensor(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open tensor file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError("invalid JSON in " + path + ": " + e.what());
  }
  return detail::tensor_from_json(j);
}

InputSet build_input_set(const RunConfig& rc, const Tensor& x_star) {
  if (rc.epsilon == 0.0) return InputSet::box(x_star, x_star);  // degenerate point set
  double p = rc.norm == "1" ? 1.0
                            : (rc.norm == "2" ? 2.0 : std::numeric_limits<double>::infinity());
  return InputSet::lp_ball(x_star, rc.epsilon, p);
}

void emit(const json& report, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << report.dump(2) << "\n";
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw IoError("cannot open output file: " + out_path);
  f << report.dump(2) << "\n";
}

json residuals_json(const Certificate& cert) {
  json r = {{"r_p", json::array()},
            {"r_d", json::array()},
            {"eps_p", json::array()},
            {"eps_d", json::array()}};
  for (const auto& res : cert.final_residuals) {
    r["r_p"].push_back(res.r_p);
    r["r_d"].push_back(res.r_d);
    r["eps_p"].push_back(res.eps_p);
    r["eps_d"].push_back(res.eps_d);
  }
  return r;
}

json rho_trace_json(const Certificate& cert) {
  json out = json::array();
  for (const auto& trace : cert.rho_trace) {
    json entry = json::array();
    for (const auto& [iter, rho] : trace) entry.push_back({{"iter", iter}, {"rho", rho}});
    out.push_back(entry);
  }
  return out;
}

int cmd_certify(const RunConfig& rc) {
  RobustnessQuery q;
  q.net = load_network(rc.net_path);
  q.x_star = load_tensor(rc.input_path);
  q.true_class = rc.true_class;
  q.input = build_input_set(rc, q.x_star);
  q.cfg = solver_config(rc);

  VerdictReport report = certify_robustness(q);

  json out;
  out["verdict"] =
      report.verdict == Verdict::CertifiedRobust ? "certified_robust" : "not_certified";
  out["bounds"] = report.lower_bounds;
  out["target_classes"] = report.target_classes;
  out["certified"] = report.certified;
  out["iters"] = report.certificate.iters;
  out["residuals"] = residuals_json(report.certificate);
  out["rho_trace"] = rho_trace_json(report.certificate);
  out["bound_source"] = report.bound_source;
  out["bound_fallback_layers"] = report.bound_fallback_layers;
  out["wall_seconds"] = report.wall_seconds;
  out["config"] = config_json(rc);
  emit(out, rc.out_path);
  return report.verdict == Verdict::CertifiedRobust ? 0 : 1;
}

int cmd_bounds(const RunConfig& rc) {
  Network net = load_network(rc.net_path);
  Tensor x_star = load_tensor(rc.input_path);
  InputSet input = build_input_set(rc, x_star);
  SolverConfig cfg = solver_config(rc);

  OutputRange range = output_range(net, input, cfg);

  json out;
  out["verdict"] = "bounds";
  out["bounds"] = {{"lower", detail::tensor_to_json(range.lower)},
                   {"upper", detail::tensor_to_json(range.upper)}};
  out["certified"] = range.certified;
  out["iters"] = range.certificate.iters;
  out["residuals"] = residuals_json(range.certificate);
  out["rho_trace"] = rho_trace_json(range.certificate);
  out["config"] = config_json(rc);

  if (rc.layerwise) {
    BoundsCache cache = compute_bounds(net, input, cfg.bound_source, cfg);
    json layers = {{"lower", json::array()}, {"upper", json::array()}};
    for (const auto& t : cache.lower) layers["lower"].push_back(detail::tensor_to_json(t));
    for (const auto& t : cache.upper) layers["upper"].push_back(detail::tensor_to_json(t));
    out["layerwise"] = layers;
  }
  emit(out, rc.out_path);
  for (bool c : range.certified)
    if (!c) return 1;
  return 0;
}

int cmd_reach(const RunConfig& rc) {
  ReachQuery q;
  q.dynamics = load_network(rc.net_path);
  Tensor x_star = load_tensor(rc.input_path);
  q.init_set = build_input_set(rc, x_star);
  q.horizon = rc.horizon;
  q.cfg = solver_config(rc);
  if (q.horizon < 1) throw ParseError("horizon must be positive");

  std::vector<ReachStep> steps = reach_boxes(q);

  json out;
  out["verdict"] = "reach";
  out["steps"] = json::array();
  bool all_certified = true;
  for (const auto& step : steps) {
    out["steps"].push_back({{"lower", detail::tensor_to_json(step.lower)},
                            {"upper", detail::tensor_to_json(step.upper)},
                            {"certified", step.certified}});
    all_certified = all_certified && step.certified;
  }
  out["config"] = config_json(rc);
  out["config"]["horizon"] = rc.horizon;
  emit(out, rc.out_path);
  return all_certified ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LP-relaxation certification of feed-forward ReLU networks"};
  app.require_subcommand(1);
  RunConfig rc;

  CLI::App* certify = app.add_subcommand("certify", "certify local robustness");
  add_common_flags(certify, rc);
  add_input_set_flags(certify, rc);
  certify->add_option("--true-class", rc.true_class, "label to certify")->required();

  CLI::App* bounds = app.add_subcommand("bounds", "certified output enclosure");
  add_common_flags(bounds, rc);
  add_input_set_flags(bounds, rc);
  bounds->add_flag("--layerwise", rc.layerwise, "include per-layer intervals");

  CLI::App* reach = app.add_subcommand("reach", "reachable boxes of a dynamical system");
  add_common_flags(reach, rc);
  add_input_set_flags(reach, rc);
  reach->add_option("--horizon", rc.horizon, "number of composition steps")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // --help exits cleanly
  }

  if (rc.jobs > 0) omp_set_num_threads(rc.jobs);

  try {
    if (certify->parsed()) return cmd_certify(rc);
    if (bounds->parsed()) return cmd_bounds(rc);
    return cmd_reach(rc);
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
