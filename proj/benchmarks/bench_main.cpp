#include "mse/evolution.hpp"
#include "mse/gradient.hpp"
#include "mse/integrate.hpp"
#include "mse/optimizer.hpp"
#include "mse/problem.hpp"

#include <benchmark/benchmark.h>

using namespace mse;

namespace {

ControlStructure lq_two_arc() {
  ProblemDef prob = make_benchmark(BenchmarkId::LQ);
  ControlStructure s;
  s.T = prob.T;
  s.u_lower = prob.lower(0);
  s.u_upper = prob.upper(0);
  s.nodes = {0.0, 5.0, prob.T};
  ArcProcedure a0 = make_boundary_arc(ArcKind::BoundaryLower, prob);
  ArcProcedure a1;
  a1.kind = ArcKind::HermiteInterior;
  a1.p = Vec::Zero(4);
  a1.p << -0.8, 0.2, 0.1, 0.0;
  s.arcs = {std::move(a0), std::move(a1)};
  s.validate();
  return s;
}

void bench_forward(benchmark::State& state, BenchmarkId id) {
  ProblemDef prob = make_benchmark(id);
  ControlStructure s = make_initial_structure(prob, id);
  Mesh mesh = build_mesh(s, prob.T / 2000.0);
  for (auto _ : state) {
    Trajectory traj = forward(prob, s, mesh);
    benchmark::DoNotOptimize(traj.sigma);
  }
}

void bench_forward_backward_lq(benchmark::State& state) {
  ProblemDef prob = make_benchmark(BenchmarkId::LQ);
  ControlStructure s = lq_two_arc();
  Mesh mesh = build_mesh(s, prob.T / 2000.0);
  for (auto _ : state) {
    Trajectory traj = forward(prob, s, mesh);
    backward(prob, s, traj);
    benchmark::DoNotOptimize(traj.psi[0](0));
  }
}

void bench_gradient_assembly(benchmark::State& state) {
  ProblemDef prob = make_benchmark(BenchmarkId::LQ);
  ControlStructure s = lq_two_arc();
  Trajectory traj = forward(prob, s, build_mesh(s, prob.T / 2000.0));
  backward(prob, s, traj);
  DecisionVector d = pack(s);
  for (auto _ : state) {
    GradientReport grad = assemble_gradient(prob, traj, s, d);
    benchmark::DoNotOptimize(grad.norm);
  }
}

void bench_projection(benchmark::State& state) {
  ProblemDef prob = make_benchmark(BenchmarkId::LQ);
  ControlStructure s = lq_two_arc();
  DecisionVector d = pack(s);
  Vec g = Vec::LinSpaced(d.dim(), -1.0, 1.0);
  for (auto _ : state) {
    Vec p = projected_antigradient(g, s, d);
    benchmark::DoNotOptimize(p(0));
  }
}

void bench_mp_residual(benchmark::State& state) {
  ProblemDef prob = make_benchmark(BenchmarkId::Fermentation);
  ControlStructure s = make_initial_structure(prob, BenchmarkId::Fermentation);
  Trajectory traj = forward(prob, s, build_mesh(s, prob.T / 2000.0));
  backward(prob, s, traj);
  for (auto _ : state) {
    MpResidual mp = mp_residual(prob, traj, s);
    benchmark::DoNotOptimize(mp.total);
  }
}

void bench_solve_lq_coarse(benchmark::State& state) {
  ProblemDef prob = make_benchmark(BenchmarkId::LQ);
  ControlStructure s0 = make_initial_structure(prob, BenchmarkId::LQ);
  SolverConfig cfg;
  cfg.h_max = prob.T / 200.0;
  cfg.eps_mp = 1e-2;
  cfg.max_inner_iters = 100;
  cfg.max_structural_changes = 30;
  cfg.enable_insertion = true;
  for (auto _ : state) {
    SolveReport rep = mse_solve(prob, s0, cfg);
    benchmark::DoNotOptimize(rep.sigma);
  }
}

}  // namespace

BENCHMARK_CAPTURE(bench_forward, lq, BenchmarkId::LQ);
BENCHMARK_CAPTURE(bench_forward, fermentation, BenchmarkId::Fermentation);
BENCHMARK_CAPTURE(bench_forward, pendulum, BenchmarkId::PendulumCart);
BENCHMARK(bench_forward_backward_lq);
BENCHMARK(bench_gradient_assembly);
BENCHMARK(bench_projection);
BENCHMARK(bench_mp_residual);
BENCHMARK(bench_solve_lq_coarse)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
