#include "mse/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mse {

namespace {

void fill_sample_nodes(Mesh& m) {
  m.sample_node.assign(m.t.size(), -1);
  for (int j = static_cast<int>(m.node_sample.size()) - 1; j >= 0; --j)
    m.sample_node[m.node_sample[j]] = j;
}

Mesh mesh_from_counts(const ControlStructure& s, const std::vector<int>& counts, double h_max) {
  if (counts.size() != s.arcs.size())
    throw std::invalid_argument("mesh: one step count per arc required");
  Mesh m;
  m.h_max = h_max;
  m.t.push_back(s.nodes[0]);
  m.node_sample.push_back(0);
  for (int i = 0; i < s.arc_count(); ++i) {
    double a = s.nodes[i], b = s.nodes[i + 1];
    int n = counts[i];
    if (s.arc_zero_length(i)) {
      if (n != 0) throw std::invalid_argument("mesh: zero-length arc with steps");
      m.arc_steps.push_back(0);
      m.node_sample.push_back(static_cast<int>(m.t.size()) - 1);
      continue;
    }
    if (n < 1) throw std::invalid_argument("mesh: positive-length arc needs steps");
    double L = b - a;
    for (int k = 1; k < n; ++k) m.t.push_back(a + L * (static_cast<double>(k) / n));
    m.t.push_back(b);
    m.arc_steps.push_back(n);
    m.node_sample.push_back(static_cast<int>(m.t.size()) - 1);
  }
  fill_sample_nodes(m);
  return m;
}

std::vector<int> per_step_arc(const Mesh& mesh) {
  std::vector<int> sa;
  sa.reserve(mesh.t.size());
  for (std::size_t i = 0; i < mesh.arc_steps.size(); ++i)
    for (int k = 0; k < mesh.arc_steps[i]; ++k) sa.push_back(static_cast<int>(i));
  return sa;
}

Vec interp_cubic(double t, double t0, double t1, const Vec& y0, const Vec& d0, const Vec& y1,
                 const Vec& d1) {
  std::array<double, 4> w = hermite_basis(t, t0, t1);
  return w[0] * y0 + w[1] * d0 + w[2] * y1 + w[3] * d1;
}

}  // namespace

Mesh build_mesh(const ControlStructure& s, double h_max) {
  if (!(h_max > 0.0)) throw std::invalid_argument("build_mesh: h_max must be positive");
  s.validate();
  std::vector<int> counts(s.arcs.size(), 0);
  for (int i = 0; i < s.arc_count(); ++i) {
    if (s.arc_zero_length(i)) continue;
    double L = s.arc_length(i);
    counts[i] = std::max(1, static_cast<int>(std::ceil(L / h_max - 1e-12)));
  }
  return mesh_from_counts(s, counts, h_max);
}

Mesh build_mesh_with_counts(const ControlStructure& s, const std::vector<int>& counts) {
  return mesh_from_counts(s, counts, 0.0);
}

Mesh refine_mesh(const Mesh& mesh, const ControlStructure& s_new) {
  double tol = 1e-12 * std::max(1.0, s_new.T);
  std::vector<double> t = mesh.t;
  for (double tau : s_new.nodes) {
    auto it = std::lower_bound(t.begin(), t.end(), tau);
    bool present = (it != t.end() && *it - tau <= tol) || (it != t.begin() && tau - *(it - 1) <= tol);
    if (!present) t.insert(it, tau);
  }
  Mesh m;
  m.h_max = mesh.h_max;
  m.t = std::move(t);

  m.node_sample.resize(s_new.nodes.size());
  std::size_t pos = 0;
  for (std::size_t j = 0; j < s_new.nodes.size(); ++j) {
    while (pos + 1 < m.t.size() && m.t[pos] < s_new.nodes[j] - tol) ++pos;
    if (std::abs(m.t[pos] - s_new.nodes[j]) > tol)
      throw std::logic_error("refine_mesh: node missing from refined grid");
    m.node_sample[j] = static_cast<int>(pos);
  }
  m.arc_steps.resize(s_new.arcs.size());
  for (std::size_t i = 0; i < s_new.arcs.size(); ++i)
    m.arc_steps[i] = m.node_sample[i + 1] - m.node_sample[i];
  fill_sample_nodes(m);
  return m;
}

Trajectory forward(const ProblemDef& prob, const ControlStructure& s, const Mesh& mesh) {
  Trajectory traj;
  traj.mesh = mesh;
  int ns = mesh.samples();
  std::vector<int> sa = per_step_arc(mesh);

  traj.x.resize(ns);
  traj.f.resize(ns);
  traj.u.resize(ns);
  traj.x[0] = prob.x0;

  Vec uv(1);
  auto rhs = [&](int arc, double t, const Vec& x) {
    uv(0) = arc_control_clipped(s, arc, t, x);
    return prob.f(x, uv);
  };

  for (int k = 0; k + 1 < ns; ++k) {
    int arc = sa[k];
    double t0 = mesh.t[k], h = mesh.t[k + 1] - mesh.t[k];
    const Vec& x0 = traj.x[k];
    Vec k1 = rhs(arc, t0, x0);
    Vec k2 = rhs(arc, t0 + 0.5 * h, x0 + 0.5 * h * k1);
    Vec k3 = rhs(arc, t0 + 0.5 * h, x0 + 0.5 * h * k2);
    Vec k4 = rhs(arc, t0 + h, x0 + h * k3);
    traj.x[k + 1] = x0 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!traj.x[k + 1].allFinite()) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "forward: non-finite state at t=%.6g", mesh.t[k + 1]);
      throw std::runtime_error(buf);
    }
  }

  for (int k = 0; k < ns; ++k) {
    traj.u[k] = eval_control_clipped(s, mesh.t[k], s.u_lower, s.u_upper, &traj.x[k], Side::Right);
    uv(0) = traj.u[k];
    traj.f[k] = prob.f(traj.x[k], uv);
  }

  std::size_t nn = s.nodes.size();
  traj.u_left.resize(nn);
  traj.f_left.resize(nn);
  for (std::size_t j = 0; j < nn; ++j) {
    const Vec& xj = traj.x[mesh.node_sample[j]];
    traj.u_left[j] =
        eval_control_clipped(s, s.nodes[j], s.u_lower, s.u_upper, &xj, Side::Left);
    uv(0) = traj.u_left[j];
    traj.f_left[j] = prob.f(xj, uv);
  }
  traj.sigma = prob.phi(traj.x.back());
  return traj;
}

void backward(const ProblemDef& prob, const ControlStructure& s, Trajectory& traj) {
  const Mesh& mesh = traj.mesh;
  int ns = mesh.samples();
  if (static_cast<int>(traj.x.size()) != ns) throw std::invalid_argument("backward: run forward first");
  std::vector<int> sa = per_step_arc(mesh);

  traj.psi.resize(ns);
  traj.psidot.resize(ns);
  traj.gradUH.resize(ns);
  traj.H.resize(ns);
  if (prob.sw) traj.sw.resize(ns);

  Vec uv(1);
  // right-hand side of the adjoint system; feedback arcs differentiate
  // through the control law
  auto rhs = [&](int arc, double t, const Vec& x, const Vec& psi) -> Vec {
    const ArcProcedure& a = s.arcs[arc];
    uv(0) = arc_control_clipped(s, arc, t, x);
    Mat J = prob.fx(x, uv);
    if (arc_is_feedback(a.kind) && a.feedback_dx) {
      Vec ux = a.feedback_dx(x);
      J += prob.fu(x, uv) * ux.transpose();
    }
    return Vec(-J.transpose() * psi);
  };

  traj.psi[ns - 1] = -prob.dphi(traj.x[ns - 1]);
  for (int k = ns - 1; k > 0; --k) {
    int arc = sa[k - 1];
    double t1 = mesh.t[k], h = mesh.t[k] - mesh.t[k - 1];
    double tm = t1 - 0.5 * h;
    Vec xm = interp_state(traj, k - 1, tm);
    const Vec& p1 = traj.psi[k];
    Vec k1 = rhs(arc, t1, traj.x[k], p1);
    Vec k2 = rhs(arc, tm, xm, p1 - 0.5 * h * k1);
    Vec k3 = rhs(arc, tm, xm, p1 - 0.5 * h * k2);
    Vec k4 = rhs(arc, t1 - h, traj.x[k - 1], p1 - h * k3);
    traj.psi[k - 1] = p1 - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!traj.psi[k - 1].allFinite()) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "backward: non-finite adjoint at t=%.6g", mesh.t[k - 1]);
      throw std::runtime_error(buf);
    }
  }

  for (int k = 0; k < ns; ++k) {
    int arc = (k < ns - 1) ? sa[k] : sa.back();
    uv(0) = traj.u[k];
    Mat J = prob.fx(traj.x[k], uv);
    const ArcProcedure& a = s.arcs[arc];
    if (arc_is_feedback(a.kind) && a.feedback_dx)
      J += prob.fu(traj.x[k], uv) * a.feedback_dx(traj.x[k]).transpose();
    traj.psidot[k] = -J.transpose() * traj.psi[k];
    traj.H[k] = traj.psi[k].dot(traj.f[k]);
    traj.gradUH[k] = (prob.fu(traj.x[k], uv).transpose() * traj.psi[k])(0);
    if (prob.sw) traj.sw[k] = prob.sw(traj.x[k], traj.psi[k]);
  }

  std::size_t nn = s.nodes.size();
  traj.gradUH_left.resize(nn);
  traj.H_left.resize(nn);
  traj.psidot_left.resize(nn);
  for (std::size_t j = 0; j < nn; ++j) {
    int k = mesh.node_sample[j];
    uv(0) = traj.u_left[j];
    traj.H_left[j] = traj.psi[k].dot(traj.f_left[j]);
    traj.gradUH_left[j] = (prob.fu(traj.x[k], uv).transpose() * traj.psi[k])(0);
    int arcl = 0;
    if (j > 0) {
      arcl = static_cast<int>(j) - 1;
      while (arcl > 0 && s.arc_zero_length(arcl)) --arcl;
    }
    Mat J = prob.fx(traj.x[k], uv);
    const ArcProcedure& a = s.arcs[arcl];
    if (arc_is_feedback(a.kind) && a.feedback_dx)
      J += prob.fu(traj.x[k], uv) * a.feedback_dx(traj.x[k]).transpose();
    traj.psidot_left[j] = -J.transpose() * traj.psi[k];
  }
  traj.has_adjoint = true;
}

Vec interp_state(const Trajectory& traj, int step, double t) {
  const Mesh& m = traj.mesh;
  int j = m.sample_node[step + 1];
  const Vec& fr = (j >= 0) ? traj.f_left[j] : traj.f[step + 1];
  return interp_cubic(t, m.t[step], m.t[step + 1], traj.x[step], traj.f[step], traj.x[step + 1],
                      fr);
}

Vec interp_adjoint(const Trajectory& traj, int step, double t) {
  const Mesh& m = traj.mesh;
  int j = m.sample_node[step + 1];
  const Vec& dr = (j >= 0) ? traj.psidot_left[j] : traj.psidot[step + 1];
  return interp_cubic(t, m.t[step], m.t[step + 1], traj.psi[step], traj.psidot[step],
                      traj.psi[step + 1], dr);
}

std::string trajectory_csv(const ProblemDef& prob, const Trajectory& traj) {
  std::ostringstream os;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  os << "t,u";
  for (int i = 1; i <= prob.n; ++i) os << ",x" << i;
  for (int i = 1; i <= prob.n; ++i) os << ",psi" << i;
  os << ",gradUH,sw\n";
  for (int k = 0; k < traj.mesh.samples(); ++k) {
    num(traj.mesh.t[k]);
    os << ',';
    num(traj.u[k]);
    for (int i = 0; i < prob.n; ++i) {
      os << ',';
      num(traj.x[k](i));
    }
    for (int i = 0; i < prob.n; ++i) {
      os << ',';
      if (traj.has_adjoint) num(traj.psi[k](i));
    }
    os << ',';
    if (traj.has_adjoint) num(traj.gradUH[k]);
    os << ',';
    if (!traj.sw.empty()) num(traj.sw[k]);
    os << '\n';
  }
  return os.str();
}

}  // namespace mse
