#include "mse/problem.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

namespace mse {

double hamiltonian(const Vec& psi, const Vec& x, const Vec& u, const ProblemDef& prob) {
  if (psi.size() != prob.n || x.size() != prob.n || u.size() != prob.m)
    throw std::invalid_argument("hamiltonian: dimension mismatch");
  return psi.dot(prob.f(x, u));
}

Vec grad_u_hamiltonian(const Vec& psi, const Vec& x, const Vec& u, const ProblemDef& prob) {
  if (psi.size() != prob.n || x.size() != prob.n || u.size() != prob.m)
    throw std::invalid_argument("grad_u_hamiltonian: dimension mismatch");
  return prob.fu(x, u).transpose() * psi;
}

// ---------------------------------------------------------------------------
// LQ: double integrator-like oscillator with quadratic running cost folded
// into x3. Mode constants are the positive-real-part eigenvalue pair of the
// interior-arc closed-loop system (roots of z^4 + z^2 + 2).

namespace {

constexpr double kLQAlpha = 0.67609672472697834;
constexpr double kLQBeta = 0.97831834347851596;

ProblemDef make_lq() {
  ProblemDef p;
  p.name = "lq";
  p.n = 3;
  p.m = 1;
  p.T = 15.0;
  p.x0 = Vec::Zero(3);
  p.x0 << 4.0, -4.0, 0.0;
  p.f = [](const Vec& x, const Vec& u) {
    Vec dx(3);
    dx << x(1), -x(0) + u(0), 0.5 * (x(0) * x(0) + x(1) * x(1) + u(0) * u(0));
    return dx;
  };
  p.fx = [](const Vec& x, const Vec&) {
    Mat J = Mat::Zero(3, 3);
    J(0, 1) = 1.0;
    J(1, 0) = -1.0;
    J(2, 0) = x(0);
    J(2, 1) = x(1);
    return J;
  };
  p.fu = [](const Vec&, const Vec& u) {
    Mat J = Mat::Zero(3, 1);
    J(1, 0) = 1.0;
    J(2, 0) = u(0);
    return J;
  };
  p.phi = [](const Vec& xT) { return xT(2); };
  p.dphi = [](const Vec&) {
    Vec g = Vec::Zero(3);
    g(2) = 1.0;
    return g;
  };
  p.lower = Vec::Constant(1, -1.0);
  p.upper = Vec::Constant(1, 1.0);
  p.canonical_alpha = kLQAlpha;
  p.canonical_beta = kLQBeta;
  p.has_canonical_modes = true;
  return p;
}

// ---------------------------------------------------------------------------
// Fed-batch fermentation. Control-affine: f = f0 + f1 u.

constexpr double kFa1 = 0.2, kFa2 = 0.5;
constexpr double kFb1 = 0.2, kFb2 = 0.001, kFb3 = 0.1, kFb4 = 0.0004;
constexpr double kFc1 = 0.25, kFc2 = 0.00125;

// Interior control on a second-order singular arc, obtained by driving the
// switching function and its first two time derivatives to zero; the adjoint
// dependence cancels. Grouped in powers of (x2 - 200).
template <typename S>
S fermentation_interior(S x1, S x2, S x3) {
  S B1 = 1.0 + kFb1 * x2 + kFb2 * x2 * x2;
  S R = 1.0 / x3 + kFc1 + kFc2 * x2;
  S W = kFa1 * x2 / B1;
  S dB1 = kFb1 + 2.0 * kFb2 * x2;
  S W1 = kFa1 * (1.0 - kFb2 * x2 * x2) / (B1 * B1);
  S W2 = kFa1 * (-2.0 * kFb2 * x2 * B1 - 2.0 * (1.0 - kFb2 * x2 * x2) * dB1) / (B1 * B1 * B1);

  S pval = W * R;
  S px2 = W1 * R + W * kFc2;
  S px3 = -W / (x3 * x3);
  S px2x2 = W2 * R + 2.0 * W1 * kFc2;
  S px2x3 = -W1 / (x3 * x3);
  S px3x3 = 2.0 * W / (x3 * x3 * x3);

  S B2 = 1.0 + kFb3 * x2 + kFb4 * x2 * x2;
  S qval = kFa2 * x2 / B2;
  S qx2 = kFa2 * (1.0 - kFb4 * x2 * x2) / (B2 * B2);
  S qx2x2 =
      kFa2 * (-2.0 * kFb4 * x2 * B2 - 2.0 * (1.0 - kFb4 * x2 * x2) * (kFb3 + 2.0 * kFb4 * x2)) /
      (B2 * B2 * B2);

  S mm = x2 - 200.0;
  S num = qval * x3 * x3 * x3 * px3 * px3 - 2.0 * qval * x3 * x3 * mm * px2 * px3 +
          qval * x3 * mm * mm * px2 * px2 + pval * qx2 * x3 * x3 * mm * px3 -
          pval * qx2 * x3 * mm * mm * px2 +
          x1 * x3 *
              (qval * mm * mm * (px2 * qx2x2 - px2x2 * qx2) + qval * qx2 * x3 * mm * px2x3 +
               x3 * mm * px3 * (qx2 * qx2 - qval * qx2x2) - qval * qx2 * x3 * px3);
  S den = mm * mm * mm * (px2x2 * qx2 - px2 * qx2x2) - 2.0 * qx2 * x3 * mm * mm * px2x3 +
          qx2x2 * x3 * mm * mm * px3 + 2.0 * qx2 * x3 * mm * px3 + qx2 * x3 * x3 * mm * px3x3;
  return num / den;
}

Vec fermentation_interior_dx(const Vec& x) {
  using C = std::complex<double>;
  const double h = 1e-100;
  Vec g(3);
  for (int j = 0; j < 3; ++j) {
    C x1(x(0), j == 0 ? h : 0.0);
    C x2(x(1), j == 1 ? h : 0.0);
    C x3(x(2), j == 2 ? h : 0.0);
    g(j) = fermentation_interior<C>(x1, x2, x3).imag() / h;
  }
  return g;
}

ProblemDef make_fermentation() {
  ProblemDef p;
  p.name = "fermentation";
  p.n = 3;
  p.m = 1;
  p.T = 6.0;
  p.x0 = Vec::Zero(3);
  p.x0 << 3.0, 40.0, 5.0;
  p.f = [](const Vec& x, const Vec& u) {
    double B1 = 1.0 + kFb1 * x(1) + kFb2 * x(1) * x(1);
    double B2 = 1.0 + kFb3 * x(1) + kFb4 * x(1) * x(1);
    double R = 1.0 / x(2) + kFc1 + kFc2 * x(1);
    Vec dx(3);
    dx(0) = kFa1 * x(0) * x(1) / B1 * R - x(0) / x(2) * u(0);
    dx(1) = -kFa2 * x(0) * x(1) / B2 + (200.0 - x(1)) / x(2) * u(0);
    dx(2) = u(0);
    return dx;
  };
  p.fx = [](const Vec& x, const Vec& u) {
    double B1 = 1.0 + kFb1 * x(1) + kFb2 * x(1) * x(1);
    double B2 = 1.0 + kFb3 * x(1) + kFb4 * x(1) * x(1);
    double R = 1.0 / x(2) + kFc1 + kFc2 * x(1);
    double W = kFa1 * x(1) / B1;
    double W1 = kFa1 * (1.0 - kFb2 * x(1) * x(1)) / (B1 * B1);
    double qx2 = kFa2 * (1.0 - kFb4 * x(1) * x(1)) / (B2 * B2);
    Mat J = Mat::Zero(3, 3);
    J(0, 0) = W * R - u(0) / x(2);
    J(0, 1) = x(0) * (W1 * R + W * kFc2);
    J(0, 2) = x(0) * (u(0) - W) / (x(2) * x(2));
    J(1, 0) = -kFa2 * x(1) / B2;
    J(1, 1) = -x(0) * qx2 - u(0) / x(2);
    J(1, 2) = -(200.0 - x(1)) * u(0) / (x(2) * x(2));
    return J;
  };
  p.fu = [](const Vec& x, const Vec&) {
    Mat J = Mat::Zero(3, 1);
    J(0, 0) = -x(0) / x(2);
    J(1, 0) = (200.0 - x(1)) / x(2);
    J(2, 0) = 1.0;
    return J;
  };
  p.phi = [](const Vec& xT) { return (xT(1) - 50.0) * xT(2); };
  p.dphi = [](const Vec& xT) {
    Vec g = Vec::Zero(3);
    g(1) = xT(2);
    g(2) = xT(1) - 50.0;
    return g;
  };
  p.lower = Vec::Constant(1, 0.0);
  p.upper = Vec::Constant(1, 1.0);
  p.u_int = [](const Vec& x) { return singular_feedback_fermentation(x); };
  p.u_int_dx = [](const Vec& x) { return fermentation_interior_dx(x); };
  p.sw = [](const Vec& x, const Vec& psi) {
    return -psi(0) * x(0) / x(2) + psi(1) * (200.0 - x(1)) / x(2) + psi(2);
  };
  return p;
}

// ---------------------------------------------------------------------------
// Pendulum on a cart, swing-up, with a cart-position bound handled by an
// exterior penalty accumulated in x5.

constexpr double kEps = 0.5;

}  // namespace

double singular_feedback_fermentation(const Vec& x) {
  if (x.size() != 3 || x(2) <= 0.0)
    throw std::invalid_argument("singular feedback: state must be length 3 with x3 > 0");
  double u = fermentation_interior<double>(x(0), x(1), x(2));
  if (!std::isfinite(u))
    throw std::domain_error("singular feedback: expression degenerates at this state");
  return u;
}

double constrained_feedback_pendulum(const Vec& x) {
  double s = std::sin(x(0)), c = std::cos(x(0));
  return -kEps * s * (x(1) * x(1) + c);
}

ProblemDef make_pendulum(double x3max, double rho) {
  ProblemDef p;
  p.name = "pendulum";
  p.n = 5;
  p.m = 1;
  p.T = 4.0;
  p.x0 = Vec::Zero(5);
  p.f = [x3max](const Vec& x, const Vec& u) {
    double s = std::sin(x(0)), c = std::cos(x(0));
    double D = 1.0 - kEps * c * c;
    double v = std::max(0.0, x(2) - x3max);
    Vec dx(5);
    dx(0) = x(1);
    dx(1) = -(kEps * x(1) * x(1) * s * c + s + c * u(0)) / D;
    dx(2) = x(3);
    dx(3) = (kEps * s * (x(1) * x(1) + c) + u(0)) / D;
    dx(4) = 0.5 * v * v;
    return dx;
  };
  p.fx = [x3max](const Vec& x, const Vec& u) {
    double s = std::sin(x(0)), c = std::cos(x(0));
    double D = 1.0 - kEps * c * c;
    double Dx1 = 2.0 * kEps * c * s;
    double N2 = kEps * x(1) * x(1) * s * c + s + c * u(0);
    double N2x1 = kEps * x(1) * x(1) * (c * c - s * s) + c - s * u(0);
    double N4 = kEps * s * (x(1) * x(1) + c) + u(0);
    double N4x1 = kEps * (c * (x(1) * x(1) + c) - s * s);
    Mat J = Mat::Zero(5, 5);
    J(0, 1) = 1.0;
    J(1, 0) = -N2x1 / D + N2 * Dx1 / (D * D);
    J(1, 1) = -2.0 * kEps * x(1) * s * c / D;
    J(2, 3) = 1.0;
    J(3, 0) = N4x1 / D - N4 * Dx1 / (D * D);
    J(3, 1) = 2.0 * kEps * s * x(1) / D;
    J(4, 2) = std::max(0.0, x(2) - x3max);
    return J;
  };
  p.fu = [](const Vec& x, const Vec&) {
    double s = std::sin(x(0)), c = std::cos(x(0));
    double D = 1.0 - kEps * c * c;
    Mat J = Mat::Zero(5, 1);
    J(1, 0) = -c / D;
    J(3, 0) = 1.0 / D;
    (void)s;
    return J;
  };
  p.phi = [rho](const Vec& xT) {
    double pi = std::acos(-1.0);
    return 0.5 * ((xT(0) - pi) * (xT(0) - pi) + xT(1) * xT(1) + xT(2) * xT(2) + xT(3) * xT(3)) +
           rho * xT(4);
  };
  p.dphi = [rho](const Vec& xT) {
    double pi = std::acos(-1.0);
    Vec g(5);
    g << xT(0) - pi, xT(1), xT(2), xT(3), rho;
    return g;
  };
  p.lower = Vec::Constant(1, -1.0);
  p.upper = Vec::Constant(1, 1.0);
  p.u_con = [](const Vec& x) { return constrained_feedback_pendulum(x); };
  p.u_con_dx = [](const Vec& x) {
    double s = std::sin(x(0)), c = std::cos(x(0));
    Vec g = Vec::Zero(x.size());
    g(0) = -kEps * (c * (x(1) * x(1) + c) - s * s);
    g(1) = -2.0 * kEps * s * x(1);
    return g;
  };
  p.sw = [](const Vec& x, const Vec& psi) { return -std::cos(x(0)) * psi(1) + psi(3); };
  p.penalty = PenaltySpec{4, 2, x3max, rho};
  return p;
}

ProblemDef make_benchmark(BenchmarkId id) {
  switch (id) {
    case BenchmarkId::LQ:
      return make_lq();
    case BenchmarkId::Fermentation:
      return make_fermentation();
    case BenchmarkId::PendulumCart:
      return make_pendulum(0.75, 0.0);
  }
  throw std::invalid_argument("make_benchmark: unknown id");
}

ProblemDef rebind_rho(const ProblemDef& prob, double rho) {
  if (!prob.penalty) throw std::invalid_argument("rebind_rho: problem has no penalty state");
  return make_pendulum(prob.penalty->bound, rho);
}

}  // namespace mse
