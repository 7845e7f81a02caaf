// Command-line surface: simulate trajectories, verify momentum candidates,
// verify first integrals and tensor conditions, and report adapted-frame
// diagnostics. Reports are machine-first JSON on stdout; human summaries go
// to stderr. Identical inputs (including the seed) produce byte-identical
// outputs.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "nhmech/conservation.hpp"
#include "nhmech/dynamics.hpp"
#include "nhmech/scenario.hpp"

using nlohmann::json;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitVerdictFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct CommonFlags {
  std::string builtin_name;
  std::string scenario_path;
  double t_end = -1.0; // negative: use the scenario default
  double step = -1.0;
  int samples = 256;
  unsigned seed = 42;
  bool seed_given = false;
  double tol = 1e-9;
  bool project_drift = false;
  std::string output;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  auto* b = cmd->add_option("--builtin", flags.builtin_name, "built-in scenario name");
  auto* s = cmd->add_option("--scenario", flags.scenario_path, "scenario JSON path");
  b->excludes(s);
  s->excludes(b);
  cmd->add_option("--t-end", flags.t_end, "integration end time");
  cmd->add_option("--step", flags.step, "integration step");
  cmd->add_option("--samples", flags.samples, "sample count")->default_val(256);
  cmd->add_option("--seed", flags.seed, "sample seed")
      ->default_val(42)
      ->each([&flags](const std::string&) { flags.seed_given = true; });
  cmd->add_option("--tol", flags.tol, "residual tolerance")->default_val(1e-9);
  cmd->add_flag("--project-drift", flags.project_drift, "re-project velocities each step");
  cmd->add_option("--output", flags.output, "output path");
  cmd->add_option("--format", flags.format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
}

nhmech::Scenario load(const CommonFlags& flags) {
  if (!flags.builtin_name.empty()) return nhmech::builtin(flags.builtin_name);
  if (!flags.scenario_path.empty()) return nhmech::load_scenario(flags.scenario_path);
  throw nhmech::Error(nhmech::ErrorClass::Usage, "one of --builtin or --scenario is required");
}

struct RunSettings {
  double t_end;
  double step;
  unsigned seed;
  double tol;
};

RunSettings settings_for(const nhmech::Scenario& scenario, const CommonFlags& flags) {
  RunSettings rs;
  rs.t_end = flags.t_end >= 0.0 ? flags.t_end : scenario.defaults.t_end;
  rs.step = flags.step >= 0.0 ? flags.step : scenario.defaults.step;
  rs.seed = flags.seed_given ? flags.seed : scenario.defaults.seed;
  rs.tol = flags.tol;
  if (!(rs.step > 0.0))
    throw nhmech::Error(nhmech::ErrorClass::Usage, "step must be positive");
  return rs;
}

nhmech::TangentState initial_state(const nhmech::Scenario& scenario, unsigned seed) {
  return nhmech::sample_states_on_c(scenario.system, nhmech::SampleSpec{1, seed}).front();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trajectory_csv(const nhmech::Scenario& scenario, const nhmech::Trajectory& traj) {
  int n = scenario.n;
  int m = scenario.system.m();
  std::string out = "t";
  for (int i = 1; i <= n; ++i) out += ",q_" + std::to_string(i);
  for (int i = 1; i <= n; ++i) out += ",u_" + std::to_string(i);
  for (int i = 1; i <= n; ++i) out += ",v_" + std::to_string(i);
  out += ",E";
  for (int i = 1; i <= n - m; ++i) out += ",lambda_" + std::to_string(i);
  for (const auto& name : traj.monitor_names) out += "," + name;
  out += "\n";
  for (const auto& s : traj.samples) {
    out += format_double(s.t);
    for (int i = 0; i < n; ++i) out += "," + format_double(s.q[i]);
    for (int i = 0; i < n; ++i) out += "," + format_double(s.u[i]);
    for (int i = 0; i < n; ++i) out += "," + format_double(s.v[i]);
    out += "," + format_double(s.energy);
    for (int i = 0; i < n - m; ++i) out += "," + format_double(s.lambda[i]);
    for (double v : s.monitors) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

json trajectory_json(const nhmech::Scenario& scenario, const nhmech::Trajectory& traj) {
  int n = scenario.n;
  int m = scenario.system.m();
  json header = json::array();
  header.push_back("t");
  for (int i = 1; i <= n; ++i) header.push_back("q_" + std::to_string(i));
  for (int i = 1; i <= n; ++i) header.push_back("u_" + std::to_string(i));
  for (int i = 1; i <= n; ++i) header.push_back("v_" + std::to_string(i));
  header.push_back("E");
  for (int i = 1; i <= n - m; ++i) header.push_back("lambda_" + std::to_string(i));
  for (const auto& name : traj.monitor_names) header.push_back(name);
  json rows = json::array();
  for (const auto& s : traj.samples) {
    json row = json::array();
    row.push_back(s.t);
    for (int i = 0; i < n; ++i) row.push_back(s.q[i]);
    for (int i = 0; i < n; ++i) row.push_back(s.u[i]);
    for (int i = 0; i < n; ++i) row.push_back(s.v[i]);
    row.push_back(s.energy);
    for (int i = 0; i < n - m; ++i) row.push_back(s.lambda[i]);
    for (double v : s.monitors) row.push_back(v);
    rows.push_back(std::move(row));
  }
  return json{{"header", header}, {"rows", rows}};
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw nhmech::Error(nhmech::ErrorClass::Input, "cannot write '" + path + "'");
  out << content;
}

nhmech::Trajectory run_default_trajectory(const nhmech::Scenario& scenario,
                                          const RunSettings& rs, bool project_drift) {
  nhmech::IntegrateOptions opts;
  opts.project_drift = project_drift;
  opts.monitors = scenario.monitors();
  return nhmech::integrate(scenario.system, initial_state(scenario, rs.seed), rs.t_end, rs.step,
                           opts);
}

int cmd_simulate(const CommonFlags& flags) {
  nhmech::Scenario scenario = load(flags);
  RunSettings rs = settings_for(scenario, flags);
  nhmech::Trajectory traj = run_default_trajectory(scenario, rs, flags.project_drift);

  json summary;
  summary["command"] = "simulate";
  summary["scenario"] = scenario.name;
  summary["t_end"] = rs.t_end;
  summary["step"] = rs.step;
  summary["seed"] = rs.seed;
  summary["samples"] = static_cast<long>(traj.samples.size());
  summary["energy_drift"] = traj.energy_drift();
  summary["constraint_drift"] = traj.constraint_drift(scenario.system.m());
  json monitor_drift = json::object();
  for (std::size_t i = 0; i < traj.monitor_names.size(); ++i)
    monitor_drift[traj.monitor_names[i]] = traj.monitor_drift(static_cast<int>(i));
  summary["monitor_drift"] = monitor_drift;
  summary["project_drift"] = flags.project_drift;

  std::string body = flags.format == "json" ? trajectory_json(scenario, traj).dump(2) + "\n"
                                            : trajectory_csv(scenario, traj);
  if (!flags.output.empty()) {
    write_file(flags.output, body);
    summary["output"] = flags.output;
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cout << body;
    std::cerr << summary.dump(2) << "\n";
  }
  std::cerr << "simulate " << scenario.name << ": energy drift " << traj.energy_drift()
            << ", constraint drift " << traj.constraint_drift(scenario.system.m()) << "\n";
  return kExitPass;
}

void emit_report(const json& j, const CommonFlags& flags) {
  std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!flags.output.empty()) write_file(flags.output, text);
}

int cmd_noether(const CommonFlags& flags, const std::string& field_name) {
  nhmech::Scenario scenario = load(flags);
  RunSettings rs = settings_for(scenario, flags);
  auto it = scenario.fields.find(field_name);
  if (it == scenario.fields.end())
    throw nhmech::Error(nhmech::ErrorClass::Usage,
                        "unknown field '" + field_name + "' in scenario " + scenario.name);

  nhmech::CheckOptions opts;
  opts.samples = {flags.samples, rs.seed};
  opts.tol = rs.tol;
  opts.scenario = scenario.name;

  nhmech::Trajectory traj = run_default_trajectory(scenario, rs, flags.project_drift);
  nhmech::ConservationReport triple =
      nhmech::noether_triple(scenario.system, it->second, opts, &traj);
  nhmech::ConservationReport annihilator =
      nhmech::reaction_annihilator_test(scenario.system, it->second, opts);

  json j;
  j["command"] = "noether";
  j["scenario"] = scenario.name;
  j["field"] = field_name;
  j["noether_triple"] = triple.to_json();
  j["reaction_annihilator"] = annihilator.to_json();
  j["verdict"] = triple.pass() ? "pass" : "fail";
  emit_report(j, flags);
  std::cerr << "noether " << field_name << ": " << (triple.pass() ? "pass" : "fail") << "\n";
  return triple.pass() ? kExitPass : kExitVerdictFail;
}

int cmd_integral(const CommonFlags& flags, const std::string& name) {
  nhmech::Scenario scenario = load(flags);
  RunSettings rs = settings_for(scenario, flags);

  nhmech::CheckOptions opts;
  opts.samples = {flags.samples, rs.seed};
  opts.tol = rs.tol;
  opts.scenario = scenario.name;

  std::optional<nhmech::ConservationReport> report;
  if (auto it = scenario.integrals.find(name); it != scenario.integrals.end()) {
    report = nhmech::thm_int_check(scenario.system, it->second, name, opts);
  } else if (auto ct = scenario.ctensors.find(name); ct != scenario.ctensors.end()) {
    nhmech::Trajectory traj = run_default_trajectory(scenario, rs, flags.project_drift);
    report = ct->second.degree() == 2
                 ? nhmech::quadratic_integral_check(scenario.system, ct->second, opts, &traj)
                 : nhmech::higher_degree_check(scenario.system, ct->second, opts, &traj);
  } else if (auto qt = scenario.qtensors.find(name); qt != scenario.qtensors.end()) {
    nhmech::Trajectory traj = run_default_trajectory(scenario, rs, flags.project_drift);
    report = nhmech::restricted_tensor_check(scenario.system, qt->second, opts, &traj);
  } else {
    throw nhmech::Error(nhmech::ErrorClass::Usage,
                        "unknown integral or tensor '" + name + "' in scenario " + scenario.name);
  }

  json j;
  j["command"] = "integral";
  j["scenario"] = scenario.name;
  j["name"] = name;
  j["report"] = report->to_json();
  j["verdict"] = report->pass() ? "pass" : "fail";
  emit_report(j, flags);
  std::cerr << "integral " << name << ": " << (report->pass() ? "pass" : "fail") << "\n";
  return report->pass() ? kExitPass : kExitVerdictFail;
}

int cmd_frame(const CommonFlags& flags) {
  nhmech::Scenario scenario = load(flags);
  RunSettings rs = settings_for(scenario, flags);
  const nhmech::ConstrainedSystem& system = scenario.system;
  int n = system.n();
  int m = system.m();

  nhmech::ReportBuilder rb("adapted_frame", scenario.name, scenario.name, flags.samples, rs.seed);
  int kernel_min = n + 1, kernel_max = -1;
  bool kernel_identity = true;

  auto states = nhmech::sample_states_on_c(system, {flags.samples, rs.seed});
  for (const auto& s : states) {
    nhmech::AdaptedFrame f = nhmech::adapted_frame(system, s);
    double scale = 1.0 + f.omega.cwiseAbs().maxCoeff();

    Eigen::MatrixXd w_dd = f.x_d.transpose() * f.omega * f.x_d;
    rb.residual("omega_dd", w_dd.cwiseAbs().maxCoeff() / scale, 1e-10);
    if (m < n) {
      Eigen::MatrixXd w_cd = f.x_c.transpose() * f.omega * f.x_d;
      rb.residual("omega_cd", w_cd.cwiseAbs().maxCoeff() / scale, 1e-10);
    }

    Eigen::MatrixXd frame(2 * n, 2 * n);
    frame.leftCols(m) = f.x_d;
    frame.middleCols(m, n - m) = f.x_c;
    frame.middleCols(n, m) = f.y_d;
    frame.rightCols(n - m) = f.y_c;
    Eigen::MatrixXd pairing = f.coframe * frame;
    double dual_scale = 1.0 + frame.cwiseAbs().maxCoeff();
    rb.residual("coframe_duality",
                (pairing - Eigen::MatrixXd::Identity(2 * n, 2 * n)).cwiseAbs().maxCoeff() /
                    dual_scale,
                1e-10);

    nhmech::PullbackBlocks blocks = nhmech::pullback_omega(f);
    rb.residual("pullback_reconstruction", blocks.reconstruction_residual / scale, 1e-10);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(f.g_dd);
    double cond = svd.singularValues()(0) / svd.singularValues()(svd.singularValues().size() - 1);
    rb.residual("dtilde_condition", cond, 1e8);

    Eigen::MatrixXd kernel = nhmech::characteristic_kernel(f);
    int dim = static_cast<int>(kernel.cols());
    kernel_min = std::min(kernel_min, dim);
    kernel_max = std::max(kernel_max, dim);
    if (dim != (n - m) - nhmech::numerical_rank(f.omega_cc)) kernel_identity = false;
  }

  auto flag = nhmech::derived_flag(system.distribution(), system.box().center(), 8);

  nhmech::ConservationReport report = rb.finish();
  report.notes["kernel_rank_identity"] = kernel_identity ? "holds" : "violated";

  json j;
  j["command"] = "frame";
  j["scenario"] = scenario.name;
  j["report"] = report.to_json();
  j["derived_flag"] = flag;
  j["kernel_dimension"] = {{"min", kernel_min}, {"max", kernel_max}};
  j["verdict"] = (report.pass() && kernel_identity) ? "pass" : "fail";
  emit_report(j, flags);
  std::cerr << "frame " << scenario.name << ": " << j["verdict"].get<std::string>() << "\n";
  return (report.pass() && kernel_identity) ? kExitPass : kExitVerdictFail;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained Lagrangian dynamics and conservation-law verification"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string field_name;
  std::string integral_name;

  CLI::App* simulate = app.add_subcommand("simulate", "integrate the constrained flow");
  add_common(simulate, flags);

  CLI::App* noether = app.add_subcommand("noether", "momentum conservation triple for a field");
  noether->add_option("field", field_name, "candidate field name")->required();
  add_common(noether, flags);

  CLI::App* integral =
      app.add_subcommand("integral", "first-integral / tensor conservation checks");
  integral->add_option("name", integral_name, "integral or tensor name")->required();
  add_common(integral, flags);

  CLI::App* frame = app.add_subcommand("frame", "adapted-frame and rank diagnostics");
  add_common(frame, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(flags);
    if (noether->parsed()) return cmd_noether(flags, field_name);
    if (integral->parsed()) return cmd_integral(flags, integral_name);
    if (frame->parsed()) return cmd_frame(flags);
    return kExitUsage;
  } catch (const nhmech::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.error_class()) {
      case nhmech::ErrorClass::Usage: return kExitUsage;
      case nhmech::ErrorClass::Input: return kExitIo;
      case nhmech::ErrorClass::Numeric: return kExitNumeric;
    }
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
