#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>

namespace mse {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Quadratic exterior penalty attached to one augmented state component:
// the component integrates 1/2 max(0, x[constrained_state] - bound)^2 and
// enters the terminal cost with weight rho.
struct PenaltySpec {
  int state_index = -1;       // index of the accumulator component
  int constrained_state = -1; // index of the bounded state
  double bound = 0.0;
  double rho = 0.0;
};

// A fixed-horizon problem in Mayer form: minimize phi(x(T)) subject to
// xdot = f(x,u), x(0) = x0, and per-component box bounds on u.
// Running costs are expected to be folded into an augmented state.
struct ProblemDef {
  std::string name;
  int n = 0;
  int m = 1;
  double T = 0.0;
  Vec x0;

  std::function<Vec(const Vec&, const Vec&)> f;
  std::function<Mat(const Vec&, const Vec&)> fx;
  std::function<Mat(const Vec&, const Vec&)> fu;
  std::function<double(const Vec&)> phi;
  std::function<Vec(const Vec&)> dphi;

  Vec lower;
  Vec upper;

  // Optional feedback laws for arcs that compute control from the state,
  // with their state jacobians (needed by the adjoint total derivative).
  std::function<double(const Vec&)> u_int;
  std::function<Vec(const Vec&)> u_int_dx;
  std::function<double(const Vec&)> u_con;
  std::function<Vec(const Vec&)> u_con_dx;

  // Switching function sw(x, psi) for control-affine problems.
  std::function<double(const Vec&, const Vec&)> sw;

  std::optional<PenaltySpec> penalty;

  // Mode constants for the exponential-trigonometric basis extension.
  double canonical_alpha = 0.0;
  double canonical_beta = 0.0;
  bool has_canonical_modes = false;
};

enum class BenchmarkId { LQ, Fermentation, PendulumCart };

double hamiltonian(const Vec& psi, const Vec& x, const Vec& u, const ProblemDef& prob);
Vec grad_u_hamiltonian(const Vec& psi, const Vec& x, const Vec& u, const ProblemDef& prob);

ProblemDef make_benchmark(BenchmarkId id);
ProblemDef make_pendulum(double x3max, double rho = 0.0);

// Fresh copy of a penalty problem with a new multiplier.
ProblemDef rebind_rho(const ProblemDef& prob, double rho);

double singular_feedback_fermentation(const Vec& x);
double constrained_feedback_pendulum(const Vec& x);

}  // namespace mse
