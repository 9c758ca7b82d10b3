#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mse/integrate.hpp"
#include "mse/problem.hpp"
#include "mse/structure.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

using namespace mse;

namespace {

ArcProcedure hermite(double v0, double s0, double v1, double s1) {
  ArcProcedure a;
  a.kind = ArcKind::HermiteInterior;
  a.p = Vec::Zero(4);
  a.p << v0, s0, v1, s1;
  return a;
}

ControlStructure single_arc(const ProblemDef& prob, ArcProcedure arc) {
  ControlStructure s;
  s.T = prob.T;
  s.u_lower = prob.lower(0);
  s.u_upper = prob.upper(0);
  s.nodes = {0.0, prob.T};
  s.arcs = {std::move(arc)};
  s.validate();
  return s;
}

// x' = u, scalar, terminal cost w * x(T)
ProblemDef chain_problem(double T, double w) {
  ProblemDef p;
  p.name = "chain";
  p.T = T;
  p.n = 1;
  p.m = 1;
  p.x0 = Vec::Zero(1);
  p.lower = Vec::Constant(1, -10.0);
  p.upper = Vec::Constant(1, 10.0);
  p.f = [](const Vec&, const Vec& u) { return Vec::Constant(1, u(0)); };
  p.fx = [](const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  p.fu = [](const Vec&, const Vec&) { return Mat::Constant(1, 1, 1.0); };
  p.phi = [w](const Vec& x) { return w * x(0); };
  p.dphi = [w](const Vec&) { return Vec::Constant(1, w); };
  return p;
}

// x' = x^2 from x0 = 1 escapes at t = 1
ProblemDef blowup_problem() {
  ProblemDef p;
  p.name = "blowup";
  p.T = 2.0;
  p.n = 1;
  p.m = 1;
  p.x0 = Vec::Constant(1, 1.0);
  p.lower = Vec::Constant(1, -1.0);
  p.upper = Vec::Constant(1, 1.0);
  p.f = [](const Vec& x, const Vec&) { return Vec::Constant(1, x(0) * x(0)); };
  p.fx = [](const Vec& x, const Vec&) { return Mat::Constant(1, 1, 2 * x(0)); };
  p.fu = [](const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  p.phi = [](const Vec& x) { return x(0); };
  p.dphi = [](const Vec&) { return Vec::Constant(1, 1.0); };
  return p;
}

// x1' = -x2, x2' = x1: counterclockwise rotation
ProblemDef rotation_problem() {
  ProblemDef p;
  p.name = "rotation";
  p.T = 2.0;
  p.n = 2;
  p.m = 1;
  p.x0 = Vec::Zero(2);
  p.x0 << 1.0, 0.0;
  p.lower = Vec::Constant(1, -1.0);
  p.upper = Vec::Constant(1, 1.0);
  p.f = [](const Vec& x, const Vec&) {
    Vec dx(2);
    dx << -x(1), x(0);
    return dx;
  };
  p.fx = [](const Vec&, const Vec&) {
    Mat J = Mat::Zero(2, 2);
    J(0, 1) = -1.0;
    J(1, 0) = 1.0;
    return J;
  };
  p.fu = [](const Vec&, const Vec&) { return Mat::Zero(2, 1); };
  p.phi = [](const Vec& x) { return x(0); };
  p.dphi = [](const Vec&) {
    Vec g = Vec::Zero(2);
    g(0) = 1.0;
    return g;
  };
  return p;
}

ControlStructure zero_structure(const ProblemDef& prob) {
  return single_arc(prob, hermite(0, 0, 0, 0));
}

}  // namespace

TEST_CASE("mesh splits every interval no coarser than the cap") {
  ControlStructure s;
  s.T = 4.0;
  s.u_lower = -1;
  s.u_upper = 1;
  s.nodes = {0.0, 2.5, 4.0};
  s.arcs = {hermite(0, 0, 0, 0), hermite(0, 0, 0, 0)};
  s.validate();

  Mesh m = build_mesh(s, 2.0);
  REQUIRE(m.samples() == 4);
  CHECK(m.t[0] == 0.0);
  CHECK(m.t[1] == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(m.t[2] == 2.5);
  CHECK(m.t[3] == 4.0);
  CHECK(m.node_sample[0] == 0);
  CHECK(m.node_sample[1] == 2);
  CHECK(m.node_sample[2] == 3);
  CHECK(m.arc_steps[0] == 2);
  CHECK(m.arc_steps[1] == 1);
  CHECK(m.sample_node[0] == 0);
  CHECK(m.sample_node[1] == -1);
  CHECK(m.sample_node[2] == 1);
  CHECK(m.sample_node[3] == 2);

  Mesh fine = build_mesh(s, 1.0);
  CHECK(fine.arc_steps[0] == 3);
  CHECK(fine.arc_steps[1] == 2);
  for (int k = 0; k + 1 < fine.samples(); ++k) CHECK(fine.t[k + 1] - fine.t[k] <= 1.0 + 1e-12);
}

TEST_CASE("zero length arcs share one sample") {
  ProblemDef prob = make_benchmark(BenchmarkId::LQ);
  ControlStructure s;
  s.T = 4.0;
  s.u_lower = -1;
  s.u_upper = 1;
  s.nodes = {0.0, 2.0, 2.0, 4.0};
  s.arcs = {hermite(0.1, 0, 0.5, 0), make_boundary_arc(ArcKind::BoundaryLower, prob),
            hermite(-0.3, 0, -0.6, 0)};
  s.validate();

  Mesh m = build_mesh(s, 1.0);
  CHECK(m.arc_steps[1] == 0);
  CHECK(m.node_sample[1] == m.node_sample[2]);
  CHECK(m.t[m.node_sample[1]] == 2.0);
  for (int k = 0; k + 1 < m.samples(); ++k) CHECK(m.t[k + 1] > m.t[k]);
}

TEST_CASE("mesh reconstruction from stored step counts") {
  ProblemDef prob = make_benchmark(BenchmarkId::Fermentation);
  ControlStructure s;
  s.T = prob.T;
  s.u_lower = 0;
  s.u_upper = 1;
  s.nodes = {0.0, 3.0, prob.T};
  s.arcs = {make_boundary_arc(ArcKind::BoundaryLower, prob),
            make_boundary_arc(ArcKind::BoundaryUpper, prob)};
  s.validate();

  Mesh m = build_mesh(s, 0.37);
  Mesh r = build_mesh_with_counts(s, m.arc_steps);
  REQUIRE(r.samples() == m.samples());
  for (int k = 0; k < m.samples(); ++k) CHECK(r.t[k] == m.t[k]);
  for (std::size_t j = 0; j < m.node_sample.size(); ++j)
    CHECK(r.node_sample[j] == m.node_sample[j]);
}

TEST_CASE("refinement keeps old samples and covers new nodes") {
  ProblemDef prob = make_benchmark(BenchmarkId::LQ);
  ControlStructure s = zero_structure(prob);
  Mesh m = build_mesh(s, 1.0);

  ControlStructure split = s;
  split.nodes = {0.0, 7.31, prob.T};
  ArcProcedure left = restrict_arc(s.arcs[0], 0.0, prob.T, 0.0, 7.31);
  ArcProcedure right = restrict_arc(s.arcs[0], 0.0, prob.T, 7.31, prob.T);
  split.arcs = {left, right};
  split.validate();

  Mesh r = refine_mesh(m, split);
  CHECK(r.samples() == m.samples() + 1);
  std::size_t j = 0;
  bool saw_new = false;
  for (int k = 0; k < r.samples(); ++k) {
    if (j < m.t.size() && r.t[k] == m.t[j]) {
      ++j;
    } else {
      CHECK(r.t[k] == 7.31);
      saw_new = true;
    }
  }
  CHECK(j == m.t.size());
  CHECK(saw_new);
  CHECK(r.t[r.node_sample[1]] == 7.31);

  Mesh again = refine_mesh(r, split);
  CHECK(again.samples() == r.samples());
}

TEST_CASE("constant dynamics integrate exactly") {
  ProblemDef p = chain_problem(3.0, 1.0);
  ControlStructure s = single_arc(p, hermite(0.75, 0, 0.75, 0));
  Trajectory traj = forward(p, s, build_mesh(s, 0.5));
  CHECK(traj.x.back()(0) == doctest::Approx(2.25).epsilon(1e-14));
  CHECK(traj.sigma == doctest::Approx(2.25).epsilon(1e-14));
  for (double u : traj.u) CHECK(u == doctest::Approx(0.75).epsilon(1e-14));
  for (const Vec& f : traj.f) CHECK(f(0) == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("integration error falls like the fourth power of the step") {
  ProblemDef prob = make_benchmark(BenchmarkId::LQ);
  ControlStructure s = zero_structure(prob);

  auto err_at = [&](double h) {
    Trajectory traj = forward(prob, s, build_mesh(s, h));
    double worst = 0.0;
    for (int k = 0; k < traj.mesh.samples(); ++k) {
      double t = traj.mesh.t[k];
      double e1 = traj.x[k](0) - (4 * std::cos(t) - 4 * std::sin(t));
      double e2 = traj.x[k](1) - (-4 * std::cos(t) - 4 * std::sin(t));
      worst = std::max({worst, std::abs(e1), std::abs(e2)});
    }
    return worst;
  };

  double coarse = err_at(prob.T / 500);
  double fine = err_at(prob.T / 1000);
  CHECK(coarse < 5e-6);
  double factor = coarse / fine;
  CHECK(factor > 10.0);
  CHECK(factor < 24.0);

  // the running cost rides on the integrated states, so it inherits their
  // fourth order error rather than hitting quadrature exactness
  Trajectory traj = forward(prob, s, build_mesh(s, prob.T / 1000));
  CHECK(traj.x.back()(2) == doctest::Approx(16.0 * prob.T).epsilon(1e-7));
  CHECK(traj.sigma == doctest::Approx(16.0 * prob.T).epsilon(1e-7));
}

TEST_CASE("finite escape reports divergence") {
  ProblemDef p = blowup_problem();
  ControlStructure s = single_arc(p, hermite(0, 0, 0, 0));
  CHECK_THROWS_AS(forward(p, s, build_mesh(s, 0.01)), std::runtime_error);
}

TEST_CASE("terminal adjoint carries the negative cost slope") {
  ProblemDef prob = make_benchmark(BenchmarkId::LQ);
  ControlStructure s = zero_structure(prob);
  Trajectory traj = forward(prob, s, build_mesh(s, prob.T / 200));
  backward(prob, s, traj);
  REQUIRE(traj.has_adjoint);

  Vec dphi = prob.dphi(traj.x.back());
  for (int i = 0; i < 3; ++i) CHECK(traj.psi.back()(i) == -dphi(i));

  // third adjoint component is constant for this cost
  for (const Vec& psi : traj.psi) CHECK(psi(2) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("flat cost surface gives an identically zero adjoint") {
  ProblemDef p = chain_problem(2.0, 0.0);
  ControlStructure s = single_arc(p, hermite(0.3, 0.1, -0.2, 0.4));
  Trajectory traj = forward(p, s, build_mesh(s, 0.25));
  backward(p, s, traj);
  for (const Vec& psi : traj.psi) CHECK(psi(0) == 0.0);
  for (double g : traj.gradUH) CHECK(g == 0.0);
  for (double h : traj.H) CHECK(h == 0.0);
}

TEST_CASE("adjoint of a rotation follows the transposed flow") {
  ProblemDef p = rotation_problem();
  ControlStructure s = single_arc(p, hermite(0, 0, 0, 0));
  Trajectory traj = forward(p, s, build_mesh(s, p.T / 400));
  backward(p, s, traj);

  // psi' = -fx^T psi shares the generator of the state flow here, so
  // psi(t) rotates the terminal value (-1, 0) backwards by T - t.
  for (int k = 0; k < traj.mesh.samples(); ++k) {
    double dt = p.T - traj.mesh.t[k];
    CHECK(traj.psi[k](0) == doctest::Approx(-std::cos(dt)).epsilon(1e-9));
    CHECK(traj.psi[k](1) == doctest::Approx(std::sin(dt)).epsilon(1e-9));
  }
}

TEST_CASE("hamiltonian stays flat inside constant arcs") {
  ProblemDef prob = make_benchmark(BenchmarkId::Fermentation);
  ControlStructure s;
  s.T = prob.T;
  s.u_lower = 0;
  s.u_upper = 1;
  s.nodes = {0.0, 3.0, prob.T};
  s.arcs = {make_boundary_arc(ArcKind::BoundaryLower, prob),
            make_boundary_arc(ArcKind::BoundaryUpper, prob)};
  s.validate();
  Trajectory traj = forward(prob, s, build_mesh(s, prob.T / 800));
  backward(prob, s, traj);

  double scale = 0.0;
  for (double h : traj.H) scale = std::max(scale, std::abs(h));
  for (int arc = 0; arc < 2; ++arc) {
    int k0 = traj.mesh.node_sample[arc];
    int k1 = traj.mesh.node_sample[arc + 1];
    double ref = traj.H[k0];
    // the sample at the right node carries the next arc's value, so the
    // one-sided array holds this arc's end value
    double hold = traj.H_left[arc + 1];
    CHECK(std::abs(hold - ref) <= 1e-6 * (1 + scale));
    for (int k = k0; k < k1; ++k) CHECK(std::abs(traj.H[k] - ref) <= 1e-6 * (1 + scale));
  }
}

TEST_CASE("switching function samples match their definition") {
  ProblemDef ferm = make_benchmark(BenchmarkId::Fermentation);
  ControlStructure s;
  s.T = ferm.T;
  s.u_lower = 0;
  s.u_upper = 1;
  s.nodes = {0.0, 3.0, ferm.T};
  s.arcs = {make_boundary_arc(ArcKind::BoundaryLower, ferm),
            make_boundary_arc(ArcKind::BoundaryUpper, ferm)};
  s.validate();
  Trajectory traj = forward(ferm, s, build_mesh(s, 0.05));
  backward(ferm, s, traj);
  REQUIRE(traj.sw.size() == traj.x.size());
  for (int k = 0; k < traj.mesh.samples(); k += 7) {
    double want = ferm.sw(traj.x[k], traj.psi[k]);
    CHECK(traj.sw[k] == doctest::Approx(want).epsilon(1e-13));
  }

  ProblemDef pend = make_benchmark(BenchmarkId::PendulumCart);
  ControlStructure sp;
  sp.T = pend.T;
  sp.u_lower = -1;
  sp.u_upper = 1;
  sp.nodes = {0.0, pend.T};
  ArcProcedure tp;
  tp.kind = ArcKind::TimePolynomial;
  tp.p = Vec::Zero(4);
  tp.p << 0.4, 0.0, 0.4, 0.0;
  sp.arcs = {tp};
  sp.validate();
  Trajectory tj = forward(pend, sp, build_mesh(sp, 0.02));
  backward(pend, sp, tj);
  REQUIRE(tj.sw.size() == tj.x.size());
  for (int k = 0; k < tj.mesh.samples(); k += 11) {
    double want = -std::cos(tj.x[k](0)) * tj.psi[k](1) + tj.psi[k](3);
    CHECK(tj.sw[k] == doctest::Approx(want).epsilon(1e-13));
  }

  ProblemDef lq = make_benchmark(BenchmarkId::LQ);
  ControlStructure sl = zero_structure(lq);
  Trajectory tl = forward(lq, sl, build_mesh(sl, 1.0));
  backward(lq, sl, tl);
  CHECK(tl.sw.empty());
}

TEST_CASE("feedback arc realizes its own law along the flow") {
  ProblemDef prob = make_benchmark(BenchmarkId::Fermentation);
  ControlStructure s;
  s.T = prob.T;
  s.u_lower = 0;
  s.u_upper = 1;
  s.nodes = {0.0, 2.0, prob.T};
  s.arcs = {make_boundary_arc(ArcKind::BoundaryUpper, prob),
            make_feedback_arc(ArcKind::SingularFeedback, prob)};
  s.validate();
  Trajectory traj = forward(prob, s, build_mesh(s, prob.T / 400));
  backward(prob, s, traj);

  int k1 = traj.mesh.node_sample[1];
  for (int k = k1; k < traj.mesh.samples(); k += 13) {
    double want = prob.u_int(traj.x[k]);
    CHECK(traj.u[k] == doctest::Approx(want).epsilon(1e-12));
    CHECK(traj.gradUH[k] == doctest::Approx(traj.sw[k]).epsilon(1e-13));
  }
}

TEST_CASE("node bookkeeping keeps both one sided values") {
  ProblemDef prob = make_benchmark(BenchmarkId::Fermentation);
  ControlStructure s;
  s.T = prob.T;
  s.u_lower = 0;
  s.u_upper = 1;
  s.nodes = {0.0, 3.0, prob.T};
  s.arcs = {make_boundary_arc(ArcKind::BoundaryLower, prob),
            make_boundary_arc(ArcKind::BoundaryUpper, prob)};
  s.validate();
  Trajectory traj = forward(prob, s, build_mesh(s, 0.1));
  backward(prob, s, traj);

  int ks = traj.mesh.node_sample[1];
  CHECK(traj.u_left[1] == 0.0);
  CHECK(traj.u[ks] == 1.0);
  double h_right = traj.H[ks];
  double h_left = traj.H_left[1];
  double want_jump = prob.sw(traj.x[ks], traj.psi[ks]);  // jump 0 -> 1, H affine in u
  CHECK(h_right - h_left == doctest::Approx(want_jump).epsilon(1e-12));

  // endpoints mirror the one sided arrays
  CHECK(traj.u_left[0] == traj.u[0]);
  CHECK(traj.u_left[2] == traj.u.back());
  CHECK(traj.H_left[2] == traj.H.back());
  CHECK(traj.f_left[1](2) == 0.0);  // x3' = u, left control 0
  CHECK(traj.f[ks](2) == 1.0);
}

TEST_CASE("interpolation reproduces samples and beats linear accuracy") {
  ProblemDef p = rotation_problem();
  ControlStructure s = single_arc(p, hermite(0, 0, 0, 0));
  Trajectory traj = forward(p, s, build_mesh(s, 0.1));
  backward(p, s, traj);

  Vec a0 = interp_state(traj, 3, traj.mesh.t[3]);
  Vec a1 = interp_state(traj, 3, traj.mesh.t[4]);
  CHECK((a0 - traj.x[3]).norm() == 0.0);
  CHECK((a1 - traj.x[4]).norm() == 0.0);

  double tm = 0.5 * (traj.mesh.t[3] + traj.mesh.t[4]);
  Vec mid = interp_state(traj, 3, tm);
  CHECK(mid(0) == doctest::Approx(std::cos(tm)).epsilon(5e-7));
  CHECK(mid(1) == doctest::Approx(std::sin(tm)).epsilon(5e-7));

  // the adjoint rides on interpolated states, so its constant is larger
  Vec pm = interp_adjoint(traj, 3, tm);
  double dt = p.T - tm;
  CHECK(pm(0) == doctest::Approx(-std::cos(dt)).epsilon(5e-6));
  CHECK(pm(1) == doctest::Approx(std::sin(dt)).epsilon(5e-6));
}

TEST_CASE("trajectory table round trips through text") {
  ProblemDef prob = make_benchmark(BenchmarkId::Fermentation);
  ControlStructure s;
  s.T = prob.T;
  s.u_lower = 0;
  s.u_upper = 1;
  s.nodes = {0.0, 3.0, prob.T};
  s.arcs = {make_boundary_arc(ArcKind::BoundaryLower, prob),
            make_boundary_arc(ArcKind::BoundaryUpper, prob)};
  s.validate();
  Trajectory traj = forward(prob, s, build_mesh(s, 0.5));
  backward(prob, s, traj);

  std::string csv = trajectory_csv(prob, traj);
  std::istringstream is(csv);
  std::string header;
  std::getline(is, header);
  CHECK(header.find("t,u,") == 0);
  CHECK(header.find("x1") != std::string::npos);
  CHECK(header.find("psi1") != std::string::npos);

  int rows = 0;
  std::string line;
  double worst = 0.0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    double t = std::stod(cell);
    std::getline(ls, cell, ',');
    double u = std::stod(cell);
    worst = std::max(worst, std::abs(u - traj.u[rows]));
    worst = std::max(worst, std::abs(t - traj.mesh.t[rows]));
    ++rows;
  }
  CHECK(rows == traj.mesh.samples());
  CHECK(worst == 0.0);
}
