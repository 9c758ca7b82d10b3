#include "mse/cli.hpp"

#include "mse/evolution.hpp"
#include "mse/gradient.hpp"
#include "mse/integrate.hpp"
#include "mse/optimizer.hpp"
#include "mse/problem.hpp"
#include "mse/structure.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace mse {

namespace {

namespace fs = std::filesystem;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ProblemChoice {
  BenchmarkId id;
  ProblemDef prob;
  double x3max = 0.0;
};

ProblemChoice resolve_problem(const std::string& name,
                              const std::map<std::string, std::string>& extras, double rho) {
  ProblemChoice out;
  if (name == "lq") {
    out.id = BenchmarkId::LQ;
    out.prob = make_benchmark(out.id);
  } else if (name == "fermentation") {
    out.id = BenchmarkId::Fermentation;
    out.prob = make_benchmark(out.id);
  } else if (name == "pendulum") {
    out.id = BenchmarkId::PendulumCart;
    out.x3max = 0.75;
    auto it = extras.find("x3max");
    if (it != extras.end()) out.x3max = std::stod(it->second);
    out.prob = make_pendulum(out.x3max, rho);
  } else {
    throw CLI::ValidationError("problem", "unknown problem: " + name +
                                              " (try list-problems)");
  }
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string plot_script() {
  return "set datafile separator ','\n"
         "set key autotitle columnhead\n"
         "set terminal pngcairo size 1100,700\n"
         "set output 'trajectory.png'\n"
         "set xlabel 't'\n"
         "plot 'trajectory.csv' using 1:2 with lines lw 2 title 'u'\n"
         "set output 'sigma.png'\n"
         "set xlabel 'iteration'\n"
         "set logscale y 10\n"
         "unset logscale y\n"
         "plot 'sigma.csv' using 1:3 with linespoints title 'sigma'\n";
}

std::string state_text(const ProblemChoice& pc, double rho, double h, const SolveReport& rep) {
  std::string out = "mse-state 1\n";
  out += "problem " + pc.prob.name + "\n";
  if (pc.prob.penalty) {
    out += "x3max " + g17(pc.x3max) + "\n";
    out += "rho " + g17(rho) + "\n";
  }
  out += "h_max " + g17(h) + "\n";
  out += "begin structure\n";
  out += serialize_structure(rep.structure);
  if (out.back() != '\n') out += '\n';
  out += "end structure\n";
  out += "begin sigma.csv\n";
  out += sigma_csv(rep);
  out += "end sigma.csv\n";
  out += "begin events.csv\n";
  out += events_csv(rep);
  out += "end events.csv\n";
  return out;
}

int cmd_solve(const std::string& problem, const std::string& config_path,
              const std::vector<std::string>& overrides, const std::string& out_dir) {
  SolverConfig cfg;
  if (problem == "lq") {
    cfg.enable_insertion = true;
    cfg.extend_last_arc = true;
  } else if (problem == "pendulum") {
    cfg.enable_insertion = true;
  }
  std::map<std::string, std::string> extras;
  if (!config_path.empty()) {
    std::string text = read_file(config_path);
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      std::size_t a = line.find_first_not_of(" \t\r");
      if (a == std::string::npos || line[a] == '#') continue;
      std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: expected key = value: " + line);
      auto trim = [](std::string s) {
        std::size_t x = s.find_first_not_of(" \t\r");
        if (x == std::string::npos) return std::string();
        std::size_t y = s.find_last_not_of(" \t\r");
        return s.substr(x, y - x + 1);
      };
      apply_config_override(cfg, extras, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  for (const std::string& kv : overrides) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--set expects key=value, got " + kv);
    apply_config_override(cfg, extras, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();

  ProblemChoice pc = resolve_problem(problem, extras, cfg.rho0);
  ControlStructure initial = make_initial_structure(pc.prob, pc.id);
  SolveReport rep = pc.prob.penalty ? penalty_loop(pc.prob, initial, cfg)
                                    : mse_solve(pc.prob, initial, cfg);

  double h = cfg.h_max > 0 ? cfg.h_max : pc.prob.T / 2000.0;
  double rho_final = rep.stages.empty() ? 0.0 : rep.stages.back().rho;
  ProblemDef final_prob = pc.prob.penalty ? rebind_rho(pc.prob, rho_final) : pc.prob;

  fs::path dir(out_dir.empty() ? "." : out_dir);
  fs::create_directories(dir);
  write_file(dir / "report.txt", report_text(final_prob, rep));
  write_file(dir / "sigma.csv", sigma_csv(rep));
  write_file(dir / "events.csv", events_csv(rep));
  write_file(dir / "trajectory.csv", trajectory_csv(final_prob, rep.final_trajectory));
  write_file(dir / "state.txt", state_text(pc, rho_final, h, rep));
  write_file(dir / "plot.gp", plot_script());

  std::cout << report_text(final_prob, rep);
  return rep.termination == "optimal" ? 0 : 1;
}

int cmd_trace(const std::string& state_path, const std::string& out_dir) {
  std::string text = read_file(state_path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "mse-state 1")
    throw std::runtime_error("trace: not a state file: " + state_path);

  std::string problem;
  double x3max = 0.0, rho = 0.0, h = 0.0;
  std::string structure_text, sigma_text, events_text;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "problem") {
      ls >> problem;
    } else if (key == "x3max") {
      ls >> x3max;
    } else if (key == "rho") {
      ls >> rho;
    } else if (key == "h_max") {
      ls >> h;
    } else if (line == "begin structure") {
      while (std::getline(in, line) && line != "end structure") structure_text += line + "\n";
    } else if (line == "begin sigma.csv") {
      while (std::getline(in, line) && line != "end sigma.csv") sigma_text += line + "\n";
    } else if (line == "begin events.csv") {
      while (std::getline(in, line) && line != "end events.csv") events_text += line + "\n";
    }
  }
  if (problem.empty() || structure_text.empty() || h <= 0)
    throw std::runtime_error("trace: incomplete state file");

  ProblemDef prob;
  if (problem == "lq") {
    prob = make_benchmark(BenchmarkId::LQ);
  } else if (problem == "fermentation") {
    prob = make_benchmark(BenchmarkId::Fermentation);
  } else if (problem == "pendulum") {
    prob = make_pendulum(x3max, rho);
  } else {
    throw std::runtime_error("trace: unknown problem in state file: " + problem);
  }

  ControlStructure s = deserialize_structure(structure_text, prob);
  Mesh mesh = build_mesh(s, h);
  Trajectory traj = forward(prob, s, mesh);
  backward(prob, s, traj);

  fs::path dir(out_dir.empty() ? "." : out_dir);
  fs::create_directories(dir);
  write_file(dir / "sigma.csv", sigma_text);
  write_file(dir / "events.csv", events_text);
  write_file(dir / "trajectory.csv", trajectory_csv(prob, traj));
  std::cout << "trace: wrote sigma.csv, events.csv, trajectory.csv to " << dir.string() << "\n";
  return 0;
}

// --- random feasible structures for gradient checking ---

double jitter(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void fill_hermite(ArcProcedure& a, std::mt19937_64& rng, double vmax, double smax) {
  a.p = Vec::Zero(4);
  a.p(0) = jitter(rng, -vmax, vmax);
  a.p(1) = jitter(rng, -smax, smax);
  a.p(2) = jitter(rng, -vmax, vmax);
  a.p(3) = jitter(rng, -smax, smax);
}

std::vector<double> random_nodes(std::mt19937_64& rng, const std::vector<double>& base, double T,
                                 double amp, double min_gap) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<double> n = base;
    for (std::size_t i = 1; i + 1 < n.size(); ++i) n[i] += jitter(rng, -amp, amp);
    bool ok = n.front() == 0.0 && n.back() == T;
    for (std::size_t i = 0; i + 1 < n.size(); ++i)
      if (n[i + 1] - n[i] < min_gap) ok = false;
    if (ok) return n;
  }
  throw std::runtime_error("grad-check: node sampling failed");
}

ControlStructure random_structure(const ProblemDef& prob, BenchmarkId id, std::mt19937_64& rng) {
  ControlStructure s;
  s.T = prob.T;
  s.u_lower = prob.lower(0);
  s.u_upper = prob.upper(0);
  if (id == BenchmarkId::LQ) {
    s.nodes = random_nodes(rng, {0.0, 3.5, 7.0, 11.0, prob.T}, prob.T, 1.0, 1.2);
    ArcProcedure a0;
    a0.kind = ArcKind::HermiteInterior;
    fill_hermite(a0, rng, 0.55, 0.12);
    ArcProcedure a1;
    a1.kind = ArcKind::HermiteInterior;
    fill_hermite(a1, rng, 0.55, 0.12);
    a1.link_value_left = a1.link_slope_left = true;
    a1.p(0) = a0.p(2);
    a1.p(1) = a0.p(3);
    ArcProcedure a2 = make_boundary_arc(ArcKind::BoundaryLower, prob);
    ArcProcedure a3;
    a3.kind = ArcKind::CanonicalInterior;
    a3.alpha = prob.canonical_alpha;
    a3.beta = prob.canonical_beta;
    a3.p = Vec::Zero(8);
    a3.p(0) = prob.lower(0);
    a3.pin_left = true;
    a3.p(1) = jitter(rng, -0.08, 0.08);
    a3.p(2) = jitter(rng, -0.35, 0.35);
    a3.p(3) = jitter(rng, -0.08, 0.08);
    for (int k = 4; k < 8; ++k) a3.p(k) = jitter(rng, -0.01, 0.01);
    s.arcs = {std::move(a0), std::move(a1), std::move(a2), std::move(a3)};
  } else if (id == BenchmarkId::Fermentation) {
    s.nodes = random_nodes(rng, {0.0, 1.2, 2.6, 4.2, prob.T}, prob.T, 0.4, 0.6);
    ArcProcedure a0 = make_boundary_arc(ArcKind::BoundaryLower, prob);
    ArcProcedure a1;
    a1.kind = ArcKind::HermiteInterior;
    a1.p = Vec::Zero(4);
    a1.p(0) = jitter(rng, 0.3, 0.7);
    a1.p(1) = jitter(rng, -0.08, 0.08);
    a1.p(2) = jitter(rng, 0.3, 0.7);
    a1.p(3) = jitter(rng, -0.08, 0.08);
    ArcProcedure a2 = make_feedback_arc(ArcKind::SingularFeedback, prob);
    ArcProcedure a3 = make_boundary_arc(ArcKind::BoundaryUpper, prob);
    s.arcs = {std::move(a0), std::move(a1), std::move(a2), std::move(a3)};
  } else {
    s.nodes = random_nodes(rng, {0.0, 0.9, 1.9, 3.0, prob.T}, prob.T, 0.3, 0.5);
    ArcProcedure a0;
    a0.kind = ArcKind::TimePolynomial;
    fill_hermite(a0, rng, 0.55, 0.18);
    ArcProcedure a1 = make_boundary_arc(ArcKind::BoundaryUpper, prob);
    ArcProcedure a2;
    a2.kind = ArcKind::TimePolynomial;
    fill_hermite(a2, rng, 0.55, 0.18);
    ArcProcedure a3 = make_feedback_arc(ArcKind::ConstrainedFeedback, prob);
    s.arcs = {std::move(a0), std::move(a1), std::move(a2), std::move(a3)};
  }
  s.validate();
  return s;
}

bool expansion_in_box(const ControlStructure& s, const Mesh& mesh) {
  Trajectory probe;
  probe.mesh = mesh;
  return saturation_check(ProblemDef{}, probe, s).empty();
}

struct GradCheckRow {
  int sample;
  int entry;
  std::string desc;
  double analytic;
  double fd;
  double abs_err;
  double rel_err;
  bool pass;
};

int cmd_grad_check(const std::string& problem, std::uint64_t seed, int samples,
                   const std::vector<std::string>& overrides, const std::string& out_dir) {
  SolverConfig cfg;
  std::map<std::string, std::string> extras;
  for (const std::string& kv : overrides) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--set expects key=value, got " + kv);
    apply_config_override(cfg, extras, kv.substr(0, eq), kv.substr(eq + 1));
  }
  ProblemChoice pc = resolve_problem(problem, extras, 100.0);
  double h = cfg.h_max > 0 ? cfg.h_max : pc.prob.T / 1000.0;

  std::mt19937_64 rng(seed);
  std::vector<GradCheckRow> rows;
  bool all_pass = true;

  for (int sample = 0; sample < samples; ++sample) {
    ControlStructure s;
    Mesh mesh;
    Trajectory traj;
    bool built = false;
    for (int attempt = 0; attempt < 200 && !built; ++attempt) {
      try {
        s = random_structure(pc.prob, pc.id, rng);
        mesh = build_mesh(s, h);
        if (!expansion_in_box(s, mesh)) continue;
        traj = forward(pc.prob, s, mesh);
        built = true;
      } catch (const std::exception&) {
      }
    }
    if (!built) throw std::runtime_error("grad-check: could not build a feasible sample");
    backward(pc.prob, s, traj);
    DecisionVector d = pack(s);
    GradientReport grad = assemble_gradient(pc.prob, traj, s, d);
    std::vector<int> counts = mesh.arc_steps;

    for (int k = 0; k < d.dim(); ++k) {
      double step = 1e-5 * (1.0 + std::abs(d.values(k)));
      DecisionVector dp = d, dm = d;
      dp.values(k) += step;
      dm.values(k) -= step;
      ControlStructure s_p = unpack(s, dp);
      ControlStructure s_m = unpack(s, dm);
      double sp = forward(pc.prob, s_p, build_mesh_with_counts(s_p, counts)).sigma;
      double sm = forward(pc.prob, s_m, build_mesh_with_counts(s_m, counts)).sigma;
      double fd = (sp - sm) / (2.0 * step);
      double an = grad.g(k);
      double abs_err = std::abs(an - fd);
      double denom = std::max(std::abs(an), std::abs(fd));
      double rel_err = denom > 0 ? abs_err / denom : 0.0;
      bool pass = abs_err <= 1e-8 || rel_err <= 1e-4;
      all_pass = all_pass && pass;

      const auto& e = d.layout.entries[k];
      char desc[48];
      if (e.what == DecisionLayout::What::Node)
        std::snprintf(desc, sizeof desc, "node %d", e.node);
      else
        std::snprintf(desc, sizeof desc, "arc %d slot %d", e.arc, e.slot);
      rows.push_back({sample, k, desc, an, fd, abs_err, rel_err, pass});
    }
  }

  std::printf("%-7s %-6s %-16s %-24s %-24s %-12s %-12s %s\n", "sample", "entry", "kind",
              "analytic", "finite-diff", "abs-err", "rel-err", "status");
  for (const auto& r : rows)
    std::printf("%-7d %-6d %-16s %-24.16g %-24.16g %-12.4g %-12.4g %s\n", r.sample, r.entry,
                r.desc.c_str(), r.analytic, r.fd, r.abs_err, r.rel_err,
                r.pass ? "PASS" : "FAIL");
  std::printf("grad-check %s: %zu entries, %s\n", problem.c_str(), rows.size(),
              all_pass ? "all PASS" : "FAILURES present");

  if (!out_dir.empty()) {
    fs::path dir(out_dir);
    fs::create_directories(dir);
    std::string csv = "sample,entry,kind,analytic,fd,abs_err,rel_err,status\n";
    for (const auto& r : rows) {
      csv += std::to_string(r.sample) + "," + std::to_string(r.entry) + "," + r.desc + "," +
             g17(r.analytic) + "," + g17(r.fd) + "," + g17(r.abs_err) + "," + g17(r.rel_err) +
             "," + (r.pass ? "PASS" : "FAIL") + "\n";
    }
    write_file(dir / "gradcheck.csv", csv);
  }
  return all_pass ? 0 : 1;
}

int cmd_list_problems() {
  std::cout << "lq            linear-quadratic regulator on [0, 15], |u| <= 1\n";
  std::cout << "fermentation  fed-batch reactor on [0, 6], u in [0, 1], singular feedback\n";
  std::cout << "pendulum      cart-pendulum swing-up on [0, 4], |u| <= 1, state constraint via "
               "penalty\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"monotone structural evolution solver"};
  app.require_subcommand(1);

  std::string problem, config_path, out_dir, state_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 12345;
  int samples = 20;

  const std::vector<std::string> known = {"lq", "fermentation", "pendulum"};

  CLI::App* solve = app.add_subcommand("solve", "run the solver on a problem");
  solve->add_option("problem", problem, "problem name (see list-problems)")
      ->required()
      ->check(CLI::IsMember(known));
  solve->add_option("--config", config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  solve->add_option("--set", overrides, "override a config key (key=value)");
  solve->add_option("--out", out_dir, "output directory");

  CLI::App* gc = app.add_subcommand("grad-check", "compare analytic and finite-difference "
                                                  "gradients on random decision vectors");
  gc->add_option("problem", problem, "problem name")->required()->check(CLI::IsMember(known));
  gc->add_option("--seed", seed, "random seed");
  gc->add_option("--samples", samples, "number of random decision vectors")
      ->check(CLI::PositiveNumber);
  gc->add_option("--set", overrides, "override a config key (key=value)");
  gc->add_option("--out", out_dir, "directory for gradcheck.csv");

  CLI::App* trace = app.add_subcommand("trace", "re-emit CSV outputs from a saved state file");
  trace->add_option("state", state_path, "path to state.txt from a solve run")
      ->required()
      ->check(CLI::ExistingFile);
  trace->add_option("--out", out_dir, "output directory");

  app.add_subcommand("list-problems", "list available problems");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("solve")) return cmd_solve(problem, config_path, overrides, out_dir);
    if (app.got_subcommand("grad-check"))
      return cmd_grad_check(problem, seed, samples, overrides, out_dir);
    if (app.got_subcommand("trace")) return cmd_trace(state_path, out_dir);
    return cmd_list_problems();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace mse
