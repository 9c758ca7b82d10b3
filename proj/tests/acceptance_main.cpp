// Acceptance checks, one per numbered criterion. Usage: mse_acceptance <1..8>.
// Each run prints one PASS/FAIL line for its criterion and exits 0 or 1.

#include "mse/evolution.hpp"
#include "mse/gradient.hpp"
#include "mse/integrate.hpp"
#include "mse/optimizer.hpp"
#include "mse/problem.hpp"
#include "mse/structure.hpp"

#include "random_structures.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <string>
#include <vector>

using namespace mse;

namespace {

int g_failures = 0;

void expect(bool ok, const char* fmt, ...) {
  if (ok) return;
  ++g_failures;
  std::va_list ap;
  va_start(ap, fmt);
  std::printf("  check failed: ");
  std::vprintf(fmt, ap);
  std::printf("\n");
  va_end(ap);
}

Trajectory run_trajectory(const ProblemDef& prob, const ControlStructure& s, double h) {
  Trajectory traj = forward(prob, s, build_mesh(s, h));
  backward(prob, s, traj);
  return traj;
}

bool expansion_in_box(const ControlStructure& s, const Mesh& mesh) {
  Trajectory probe;
  probe.mesh = mesh;
  return saturation_check(ProblemDef{}, probe, s).empty();
}

double arc_kind_length(const ControlStructure& s, ArcKind kind) {
  double total = 0.0;
  for (int i = 0; i < s.arc_count(); ++i)
    if (s.arcs[i].kind == kind) total += s.arc_length(i);
  return total;
}

// ---------------------------------------------------------------------------
// 1. Analytic gradients against central finite differences on random feasible
//    decision vectors, all benchmarks.

bool feasible_sample(const ProblemDef& prob, std::mt19937_64& rng, double h,
                     ControlStructure& s_out, Trajectory& traj_out) {
  for (int attempt = 0; attempt < 500; ++attempt) {
    try {
      ControlStructure s = random_structure(prob, rng);
      double min_gap = prob.T;
      for (std::size_t i = 1; i < s.nodes.size(); ++i)
        min_gap = std::min(min_gap, s.nodes[i] - s.nodes[i - 1]);
      if (min_gap < 1e-3) continue;
      // a node between two copies of the same procedure has a derivative of
      // exactly zero, which a finite difference can only see as mesh noise
      bool mergeable = false;
      for (int i = 0; i + 1 < s.arc_count(); ++i)
        if (s.arcs[i].kind == s.arcs[i + 1].kind && !arc_is_explicit(s.arcs[i].kind))
          mergeable = true;
      if (mergeable) continue;
      Mesh mesh = build_mesh(s, h);
      if (!expansion_in_box(s, mesh)) continue;
      Trajectory traj = forward(prob, s, mesh);
      bool margin_ok = true;
      for (int i = 0; i < s.arc_count() && margin_ok; ++i) {
        if (!arc_is_explicit(s.arcs[i].kind)) continue;
        for (int k = mesh.node_sample[i]; k <= mesh.node_sample[i + 1]; ++k)
          if (traj.u[k] - s.u_lower < 1e-3 || s.u_upper - traj.u[k] < 1e-3) {
            margin_ok = false;
            break;
          }
      }
      if (!margin_ok) continue;
      s_out = std::move(s);
      traj_out = std::move(traj);
      return true;
    } catch (const std::exception&) {
    }
  }
  return false;
}

bool criterion1() {
  auto t0 = std::chrono::steady_clock::now();
  for (BenchmarkId id : {BenchmarkId::LQ, BenchmarkId::Fermentation, BenchmarkId::PendulumCart}) {
    ProblemDef prob = make_benchmark(id);
    double h = prob.T / 1000.0;
    std::mt19937_64 rng(1001 + static_cast<int>(id));
    int worst_entry = -1;
    double worst_rel = 0.0;
    for (int sample = 0; sample < 20; ++sample) {
      ControlStructure s;
      Trajectory traj;
      if (!feasible_sample(prob, rng, h, s, traj)) {
        expect(false, "%s: no feasible random structure for sample %d", prob.name.c_str(),
               sample);
        return g_failures == 0;
      }
      backward(prob, s, traj);
      DecisionVector d = pack(s);
      GradientReport grad = assemble_gradient(prob, traj, s, d);
      std::vector<int> counts = traj.mesh.arc_steps;
      for (int k = 0; k < d.dim(); ++k) {
        double step = 1e-5 * (1.0 + std::abs(d.values(k)));
        DecisionVector dp = d, dm = d;
        dp.values(k) += step;
        dm.values(k) -= step;
        ControlStructure sp = unpack(s, dp);
        ControlStructure sm = unpack(s, dm);
        double fp = forward(prob, sp, build_mesh_with_counts(sp, counts)).sigma;
        double fm = forward(prob, sm, build_mesh_with_counts(sm, counts)).sigma;
        double fd = (fp - fm) / (2.0 * step);
        double an = grad.g(k);
        double abs_err = std::abs(an - fd);
        double denom = std::max(std::abs(an), std::abs(fd));
        double rel_err = denom > 0 ? abs_err / denom : 0.0;
        if (abs_err > 1e-8 && rel_err > worst_rel) {
          worst_rel = rel_err;
          worst_entry = k;
        }
        expect(abs_err <= 1e-8 || rel_err <= 1e-4,
               "%s sample %d entry %d: analytic %.10g vs fd %.10g (rel %.3g)",
               prob.name.c_str(), sample, k, an, fd, rel_err);
      }
    }
    std::printf("  %s: 20 samples, worst unfloored rel err %.3g (entry %d)\n",
                prob.name.c_str(), worst_rel, worst_entry);
  }
  double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("  elapsed %.1f s\n", elapsed);
  expect(elapsed < 120.0, "runtime %.1f s exceeds the 2 minute budget", elapsed);
  return g_failures == 0;
}

// ---------------------------------------------------------------------------
// 2. Full solves: cost history never increases within a penalty stage, and
//    every structural event leaves the cost unchanged on its own mesh.

void check_report_monotone(const char* label, const SolveReport& rep) {
  // "stage" rows raise the penalty weight and "event" rows re-measure on a
  // refined grid, so both re-base the comparison; descent across an event is
  // certified separately by its same-grid before/after pair below
  bool have_prev = false;
  double prev = 0.0;
  for (const SigmaRecord& rec : rep.sigma_history) {
    if (rec.kind == "stage" || rec.kind == "event") {
      prev = rec.sigma;
      have_prev = true;
      continue;
    }
    if (have_prev)
      expect(rec.sigma <= prev + 1e-9 * (1.0 + std::abs(prev)),
             "%s: cost rose from %.12g to %.12g at iteration %d", label, prev, rec.sigma,
             rec.iteration);
    prev = rec.sigma;
    have_prev = true;
  }
  for (const EventRecord& ev : rep.events) {
    double rel = std::abs(ev.sigma_after - ev.sigma_before) / (1.0 + std::abs(ev.sigma_before));
    expect(rel < 1e-10, "%s: %s event at iteration %d moved cost by %.3g relative", label,
           ev.kind.c_str(), ev.iteration, rel);
  }
}

bool criterion2() {
  {
    ProblemDef prob = make_benchmark(BenchmarkId::LQ);
    SolverConfig cfg;
    cfg.h_max = prob.T / 1000.0;
    cfg.enable_insertion = true;
    cfg.extend_last_arc = true;
    cfg.max_inner_iters = 300;
    cfg.max_structural_changes = 80;
    SolveReport rep = penalty_loop(prob, make_initial_structure(prob, BenchmarkId::LQ), cfg);
    std::printf("  lq: sigma %.6f, %zu history records, %zu events, %s\n", rep.sigma,
                rep.sigma_history.size(), rep.events.size(), rep.termination.c_str());
    check_report_monotone("lq", rep);
    expect(!rep.events.empty(), "lq: no structural events recorded");
  }
  {
    ProblemDef prob = make_benchmark(BenchmarkId::Fermentation);
    SolverConfig cfg;
    cfg.h_max = prob.T / 1000.0;
    cfg.max_inner_iters = 300;
    cfg.max_structural_changes = 60;
    SolveReport rep =
        penalty_loop(prob, make_initial_structure(prob, BenchmarkId::Fermentation), cfg);
    std::printf("  fermentation: sigma %.6f, %zu history records, %zu events, %s\n", rep.sigma,
                rep.sigma_history.size(), rep.events.size(), rep.termination.c_str());
    check_report_monotone("fermentation", rep);
    expect(!rep.events.empty(), "fermentation: no structural events recorded");
  }
  {
    ProblemDef prob = make_benchmark(BenchmarkId::PendulumCart);
    SolverConfig cfg;
    cfg.h_max = prob.T / 800.0;
    cfg.eps_mp = 2e-3;
    cfg.enable_insertion = true;
    cfg.max_inner_iters = 150;
    cfg.max_structural_changes = 40;
    cfg.rho_max = 1e5;
    SolveReport rep =
        penalty_loop(prob, make_initial_structure(prob, BenchmarkId::PendulumCart), cfg);
    std::printf("  pendulum: sigma %.6f, %zu history records, %zu events, %zu stages, %s\n",
                rep.sigma, rep.sigma_history.size(), rep.events.size(), rep.stages.size(),
                rep.termination.c_str());
    check_report_monotone("pendulum", rep);
    expect(!rep.events.empty(), "pendulum: no structural events recorded");
  }
  return g_failures == 0;
}

// ---------------------------------------------------------------------------
// 3. Double integrator stages: bound arcs sit exactly where the second adjoint
//    leaves the unit band, then node insertion drives the residual under 1e-3,
//    and the mode-extended run stays small while its cubic tail flattens.

bool criterion3() {
  ProblemDef prob = make_benchmark(BenchmarkId::LQ);
  double h = prob.T / 1000.0;

  // zero control, split over uniform arcs so each cubic spans a window it can
  // actually represent; the control itself still starts identically zero
  ControlStructure s0;
  s0.T = prob.T;
  s0.u_lower = prob.lower(0);
  s0.u_upper = prob.upper(0);
  const int n0 = 8;
  for (int i = 0; i <= n0; ++i) s0.nodes.push_back(prob.T * i / n0);
  for (int i = 0; i < n0; ++i) {
    ArcProcedure a;
    a.kind = ArcKind::HermiteInterior;
    a.p = Vec::Zero(4);
    s0.arcs.push_back(a);
  }
  s0.validate();

  SolverConfig cfg_a;
  cfg_a.h_max = h;
  cfg_a.eps_mp = 1e-6;
  cfg_a.enable_spikes = false;
  cfg_a.enable_insertion = false;
  cfg_a.max_inner_iters = 800;
  cfg_a.max_structural_changes = 150;
  SolveReport rep_a = mse_solve(prob, s0, cfg_a);
  std::printf("  saturation stage: sigma %.6f, dim %d, %d arcs, %s\n", rep_a.sigma,
              rep_a.decision.dim(), rep_a.structure.arc_count(), rep_a.termination.c_str());

  Trajectory traj = run_trajectory(prob, rep_a.structure, h);
  const ControlStructure& sa = rep_a.structure;
  int n_boundary = 0;
  for (int i = 0; i < sa.arc_count(); ++i) {
    ArcKind kind = sa.arcs[i].kind;
    double a = sa.nodes[i], b = sa.nodes[i + 1];
    for (int k = traj.mesh.node_sample[i]; k <= traj.mesh.node_sample[i + 1]; ++k) {
      double t = traj.mesh.t[k];
      if (t - a < 0.05 || b - t < 0.05) continue;
      double psi2 = traj.psi[k](1);
      if (kind == ArcKind::BoundaryUpper)
        expect(psi2 > 1.0 - 1e-3, "upper bound arc %d at t=%.4f has psi2=%.6f", i, t, psi2);
      else if (kind == ArcKind::BoundaryLower)
        expect(psi2 < -1.0 + 1e-3, "lower bound arc %d at t=%.4f has psi2=%.6f", i, t, psi2);
      else
        expect(std::abs(psi2) < 1.05, "interior arc %d at t=%.4f has |psi2|=%.6f", i, t,
               std::abs(psi2));
    }
    if (arc_is_boundary(kind)) ++n_boundary;
  }
  expect(n_boundary >= 1, "saturation stage produced no bound arcs");
  expect(rep_a.mp_boundary <= 1e-6, "bound arcs still carry residual %.3g", rep_a.mp_boundary);
  expect(rep_a.mp_nodes <= 1e-3, "node jumps still carry residual %.3g", rep_a.mp_nodes);
  expect(rep_a.mp_residual == rep_a.mp_interior,
         "residual %.3g is not dominated by the interior part %.3g", rep_a.mp_residual,
         rep_a.mp_interior);

  SolverConfig cfg_b = cfg_a;
  cfg_b.eps_mp = 1e-3;
  cfg_b.enable_insertion = true;
  cfg_b.max_inner_iters = 500;
  cfg_b.max_structural_changes = 250;
  SolveReport rep_b = mse_solve(prob, rep_a.structure, cfg_b);
  std::printf("  insertion stage: sigma %.6f, dim %d, residual %.3g, %s\n", rep_b.sigma,
              rep_b.decision.dim(), rep_b.mp_residual, rep_b.termination.c_str());
  expect(rep_b.mp_residual < 1e-3, "insertion stage residual %.3g not under 1e-3",
         rep_b.mp_residual);

  // the low-dimensional run leans on the mode tail instead of subdivision:
  // the extended last arc grows left over each misfit cubic neighbour until
  // reductions delete it, so insertion stays off to keep that the only
  // refinement channel
  ControlStructure s0c;
  s0c.T = prob.T;
  s0c.u_lower = prob.lower(0);
  s0c.u_upper = prob.upper(0);
  s0c.nodes = {0.0, prob.T / 2.0, prob.T};
  for (int i = 0; i < 2; ++i) {
    ArcProcedure a;
    a.kind = ArcKind::HermiteInterior;
    a.p = Vec::Zero(4);
    s0c.arcs.push_back(a);
  }
  s0c.validate();

  SolverConfig cfg_c;
  cfg_c.h_max = h;
  cfg_c.eps_mp = 1e-3;
  cfg_c.extend_last_arc = true;
  cfg_c.enable_insertion = false;
  cfg_c.max_inner_iters = 800;
  cfg_c.max_structural_changes = 100;
  SolveReport rep_c = mse_solve(prob, s0c, cfg_c);
  std::printf("  extension stage: sigma %.6f, dim %d, %zu nodes, residual %.3g, %s\n",
              rep_c.sigma, rep_c.decision.dim(), rep_c.structure.nodes.size(),
              rep_c.mp_residual, rep_c.termination.c_str());
  expect(rep_c.termination == "optimal", "extension stage ended with %s",
         rep_c.termination.c_str());
  expect(rep_c.decision.dim() <= 20, "extension stage dimension %d exceeds 20",
         rep_c.decision.dim());
  expect(rep_c.structure.nodes.size() <= 8, "extension stage has %zu nodes",
         rep_c.structure.nodes.size());
  // the first cubic coefficient is the control value at the left node, which
  // continuity pins to the neighbouring arc; the mode part carries the arc
  // when the remaining cubic coefficients vanish
  const ArcProcedure& last = rep_c.structure.arcs.back();
  expect(last.kind == ArcKind::CanonicalInterior, "last arc was never extended");
  double max_cubic = 0.0;
  for (int k = 1; k < 4 && k < last.p.size(); ++k)
    max_cubic = std::max(max_cubic, std::abs(last.p(k)));
  expect(max_cubic < 1e-2, "last arc cubic corrections reach %.4g", max_cubic);
  return g_failures == 0;
}

// ---------------------------------------------------------------------------
// 4. Fed-batch reactor: a singular feedback arc emerges from the bang-bang
//    start, the switching function vanishes on it, node jumps vanish, and the
//    event log shows at least one spike and two reductions.

bool criterion4() {
  ProblemDef prob = make_benchmark(BenchmarkId::Fermentation);
  SolverConfig cfg;
  cfg.h_max = prob.T / 1000.0;
  cfg.max_inner_iters = 300;
  cfg.max_structural_changes = 60;
  SolveReport rep = mse_solve(prob, make_initial_structure(prob, BenchmarkId::Fermentation), cfg);
  std::printf("  sigma %.8f, residual %.3g, %d arcs, %s\n", rep.sigma, rep.mp_residual,
              rep.structure.arc_count(), rep.termination.c_str());

  Trajectory traj = run_trajectory(prob, rep.structure, cfg.h_max);
  double scale = 1.0;
  for (double hv : traj.H) scale = std::max(scale, 1.0 + std::abs(hv));

  const ControlStructure& s = rep.structure;
  bool found_singular = false;
  for (int i = 0; i < s.arc_count(); ++i) {
    if (s.arcs[i].kind != ArcKind::SingularFeedback) continue;
    if (s.arc_length(i) < 0.01 * prob.T) continue;
    double sup_sw = 0.0;
    for (int k = traj.mesh.node_sample[i]; k <= traj.mesh.node_sample[i + 1]; ++k)
      sup_sw = std::max(sup_sw, std::abs(traj.sw[k]));
    std::printf("  singular arc %d on [%.4f, %.4f], sup |sw| = %.3g (scale %.3g)\n", i,
                s.nodes[i], s.nodes[i + 1], sup_sw, scale);
    if (sup_sw < 1e-3 * scale) found_singular = true;
  }
  expect(found_singular, "no singular arc with a vanishing switching function");

  MpResidual mp = mp_residual(prob, traj, s);
  expect(mp.nodes < 1e-3, "largest node jump %.3g (relative) not under 1e-3", mp.nodes);

  int spikes = 0, reductions = 0;
  for (const EventRecord& ev : rep.events) {
    if (ev.kind == "spike") ++spikes;
    if (ev.kind == "reduce-zero" || ev.kind == "reduce-merge") ++reductions;
  }
  std::printf("  events: %d spikes, %d reductions\n", spikes, reductions);
  expect(spikes >= 1, "expected at least one spike generation, saw %d", spikes);
  expect(reductions >= 2, "expected at least two reductions, saw %d", reductions);
  return g_failures == 0;
}

// ---------------------------------------------------------------------------
// 5. Cart-pendulum sweep over the velocity bound with the penalty driven to
//    1e7: tight bounds grow the constrained arc and drop the singular arc,
//    and the unpenalized terminal cost improves as the bound relaxes.

struct PendulumRun {
  double violation = 0.0;
  double cf_length = 0.0;
  double tp_length = 0.0;
  double max_x3 = 0.0;
  double terminal_cost = 0.0;
  std::string termination;
};

PendulumRun run_pendulum(double x3max) {
  ProblemDef prob = make_pendulum(x3max);
  SolverConfig cfg;
  cfg.h_max = prob.T / 800.0;
  cfg.eps_mp = 2e-3;
  cfg.enable_insertion = true;
  cfg.max_inner_iters = 200;
  cfg.max_structural_changes = 50;
  SolveReport rep = penalty_loop(prob, make_initial_structure(prob, BenchmarkId::PendulumCart),
                                 cfg);
  PendulumRun out;
  out.termination = rep.termination;
  if (rep.stages.empty() || rep.stages.back().rho != 1e7) {
    std::printf("  x3max=%.2f: penalty ladder did not reach 1e7\n", x3max);
    ++g_failures;
    return out;
  }
  out.violation = rep.stages.back().violation;
  out.cf_length = arc_kind_length(rep.structure, ArcKind::ConstrainedFeedback);
  out.tp_length = arc_kind_length(rep.structure, ArcKind::TimePolynomial);
  int cs = prob.penalty->constrained_state;
  for (const Vec& x : rep.final_trajectory.x) out.max_x3 = std::max(out.max_x3, x(cs));
  double x5T = rep.final_trajectory.x.back()(prob.penalty->state_index);
  out.terminal_cost = rep.sigma - rep.stages.back().rho * x5T;
  std::printf(
      "  x3max=%.2f: violation %.3g, constrained length %.4f, singular length %.4f, "
      "peak x3 %.4f, cost %.8f, %s\n",
      x3max, out.violation, out.cf_length, out.tp_length, out.max_x3, out.terminal_cost,
      rep.termination.c_str());
  return out;
}

bool criterion5() {
  double T = 4.0;
  PendulumRun a = run_pendulum(0.75);
  PendulumRun b = run_pendulum(0.5);
  PendulumRun c = run_pendulum(0.25);
  if (g_failures) return false;

  expect(a.violation < 1e-3, "x3max=0.75 violation %.3g not under 1e-3", a.violation);
  expect(a.cf_length < 0.05 * T, "x3max=0.75 constrained length %.4f too long", a.cf_length);
  expect(a.max_x3 > 0.75 - 1e-2, "x3max=0.75 peak x3 %.4f never touches the bound", a.max_x3);

  expect(b.cf_length > 0.05 * T, "x3max=0.5 constrained length %.4f too short", b.cf_length);
  expect(b.tp_length > 0.02 * T, "x3max=0.5 singular length %.4f too short", b.tp_length);

  expect(c.cf_length > b.cf_length,
         "constrained length did not grow: %.4f at 0.25 vs %.4f at 0.5", c.cf_length,
         b.cf_length);
  expect(c.tp_length < 0.02 * T, "x3max=0.25 singular length %.4f not negligible", c.tp_length);

  double slack_ab = 1e-6 * (1.0 + std::abs(b.terminal_cost));
  double slack_bc = 1e-6 * (1.0 + std::abs(c.terminal_cost));
  expect(b.terminal_cost + slack_ab >= a.terminal_cost,
         "cost %.8f at x3max=0.5 beats %.8f at x3max=0.75", b.terminal_cost, a.terminal_cost);
  expect(c.terminal_cost + slack_bc >= b.terminal_cost,
         "cost %.8f at x3max=0.25 beats %.8f at x3max=0.5", c.terminal_cost, b.terminal_cost);
  return g_failures == 0;
}

// ---------------------------------------------------------------------------
// 6. Integrator order on the zero-control double integrator, where the state
//    is known in closed form.

bool criterion6() {
  ProblemDef prob = make_benchmark(BenchmarkId::LQ);
  ControlStructure s = make_initial_structure(prob, BenchmarkId::LQ);

  auto sup_error = [&](double h) {
    Trajectory traj = forward(prob, s, build_mesh(s, h));
    double worst = 0.0;
    for (int k = 0; k < traj.mesh.samples(); ++k) {
      double t = traj.mesh.t[k];
      double x1 = 4.0 * std::cos(t) - 4.0 * std::sin(t);
      double x2 = -4.0 * std::sin(t) - 4.0 * std::cos(t);
      double x3 = 16.0 * t;
      worst = std::max(worst, std::abs(traj.x[k](0) - x1));
      worst = std::max(worst, std::abs(traj.x[k](1) - x2));
      worst = std::max(worst, std::abs(traj.x[k](2) - x3));
    }
    return worst;
  };

  double e1 = sup_error(prob.T / 400.0);
  double e2 = sup_error(prob.T / 800.0);
  double ratio = e1 / e2;
  std::printf("  error %.3e at h=T/400, %.3e at h=T/800, ratio %.2f\n", e1, e2, ratio);
  expect(e2 > 1e-13, "fine-grid error %.3e is at roundoff, cannot measure order", e2);
  expect(ratio >= 10.0 && ratio <= 24.0, "error ratio %.2f outside [10, 24]", ratio);
  return g_failures == 0;
}

// ---------------------------------------------------------------------------
// 7. Shape function identities on random intervals: the cubic basis reproduces
//    cubics, and the extra modes vanish at both interval ends.

bool criterion7() {
  std::mt19937_64 rng(7001);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    double a = -5.0 + 10.0 * u01(rng);
    double len = 0.05 + 5.95 * u01(rng);
    double b = a + len;
    double t = a + len * u01(rng);
    double alpha = 0.2 + u01(rng);
    double beta = 0.3 + 1.7 * u01(rng);

    std::array<double, 4> w = hermite_basis(t, a, b);
    for (int deg = 0; deg <= 3; ++deg) {
      auto mono = [&](double z) { return std::pow(z, deg); };
      auto dmono = [&](double z) { return deg == 0 ? 0.0 : deg * std::pow(z, deg - 1); };
      double terms[4] = {w[0] * mono(a), w[1] * dmono(a), w[2] * mono(b), w[3] * dmono(b)};
      double rec = terms[0] + terms[1] + terms[2] + terms[3];
      double want = mono(t);
      double mag = 1.0 + std::abs(want);
      for (double v : terms) mag += std::abs(v);
      expect(std::abs(rec - want) <= 1e-12 * mag,
             "degree %d reproduction off by %.3g on [%.3f, %.3f] at t=%.3f", deg,
             std::abs(rec - want), a, b, t);
    }

    std::array<double, 4> at_a = hermite_basis(a, a, b);
    std::array<double, 4> at_b = hermite_basis(b, a, b);
    expect(at_a[0] == 1.0 && at_a[1] == 0.0 && at_a[2] == 0.0 && at_a[3] == 0.0,
           "left endpoint weights not interpolatory on [%.3f, %.3f]", a, b);
    expect(at_b[0] == 0.0 && at_b[1] == 0.0 && at_b[2] == 1.0 && at_b[3] == 0.0,
           "right endpoint weights not interpolatory on [%.3f, %.3f]", a, b);

    std::array<double, 8> ext = extended_basis(t, a, b, alpha, beta);
    for (int k = 0; k < 4; ++k)
      expect(ext[k] == w[k], "extended basis cubic part differs in slot %d", k);

    for (double tend : {a, b}) {
      std::array<double, 8> e = extended_basis(tend, a, b, alpha, beta);
      std::array<double, 4> ma = canonical_modes(tend, a, alpha, beta);
      std::array<double, 4> mb = canonical_modes(b, a, alpha, beta);
      double mag = 1.0;
      for (int k = 0; k < 4; ++k) mag += std::abs(ma[k]) + std::abs(mb[k]);
      for (int k = 4; k < 8; ++k)
        expect(std::abs(e[k]) <= 1e-12 * mag,
               "mode %d is %.3g at an interval end on [%.3f, %.3f]", k - 4, e[k], a, b);
    }
  }
  return g_failures == 0;
}

// ---------------------------------------------------------------------------
// 8. Reductions keep the realized control: remove zero-length arcs and merge
//    duplicate neighbours on random structures, then compare on a dense grid.

bool criterion8() {
  ProblemDef prob = make_benchmark(BenchmarkId::Fermentation);
  std::mt19937_64 rng(8001);
  Vec x(3);
  x << 3.0, 40.0, 5.0;

  for (int trial = 0; trial < 100; ++trial) {
    ControlStructure s = random_structure(prob, rng);
    DecisionVector d = pack(s);
    GradientReport grad;
    grad.g = Vec::Zero(d.dim());
    ReduceResult red = reduce(prob, s, d, grad);

    int removed = 0;
    for (const ReductionEvent& ev : red.events) removed += ev.removed_entries;
    expect(red.decision.dim() == d.dim() - removed,
           "trial %d: dimension fell from %d to %d but events removed %d", trial, d.dim(),
           red.decision.dim(), removed);
    for (int i = 0; i < red.structure.arc_count(); ++i)
      expect(!red.structure.arc_zero_length(i), "trial %d: zero-length arc %d survived", trial,
             i);

    double worst = 0.0;
    for (int k = 0; k <= 1000; ++k) {
      double t = prob.T * k / 1000.0;
      for (Side side : {Side::Left, Side::Right}) {
        double u_old = eval_control_clipped(s, t, s.u_lower, s.u_upper, &x, side);
        double u_new =
            eval_control_clipped(red.structure, t, s.u_lower, s.u_upper, &x, side);
        worst = std::max(worst, std::abs(u_old - u_new));
      }
    }
    expect(worst <= 1e-12, "trial %d: control moved by %.3g after reduction", trial, worst);
  }
  return g_failures == 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <criterion 1..8>\n", argv[0]);
    return 2;
  }
  int n = std::atoi(argv[1]);
  bool ok = false;
  switch (n) {
    case 1: ok = criterion1(); break;
    case 2: ok = criterion2(); break;
    case 3: ok = criterion3(); break;
    case 4: ok = criterion4(); break;
    case 5: ok = criterion5(); break;
    case 6: ok = criterion6(); break;
    case 7: ok = criterion7(); break;
    case 8: ok = criterion8(); break;
    default:
      std::fprintf(stderr, "usage: %s <criterion 1..8>\n", argv[0]);
      return 2;
  }
  std::printf("acceptance criterion %d: %s\n", n, ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}
