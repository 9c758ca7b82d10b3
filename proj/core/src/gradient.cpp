#include "mse/gradient.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace mse {

namespace {

// gradUH at a sample, one-sided toward the given arc.
double grad_uh_at(const Trajectory& traj, int arc, int sample) {
  if (traj.mesh.node_sample[arc + 1] == sample) return traj.gradUH_left[arc + 1];
  return traj.gradUH[sample];
}

// Simpson integral of gradUH(t) * shape(t) over one arc, the midpoint state
// and adjoint interpolated cubically.
double arc_shape_integral(const ProblemDef& prob, const Trajectory& traj,
                          const ControlStructure& s, int arc,
                          const std::function<double(double)>& shape) {
  const Mesh& mesh = traj.mesh;
  int k0 = mesh.node_sample[arc], k1 = mesh.node_sample[arc + 1];
  if (k0 >= k1) return 0.0;
  if (!traj.has_adjoint) throw std::invalid_argument("gradient: adjoint pass missing");
  Vec uv(1);
  double total = 0.0;
  for (int k = k0; k < k1; ++k) {
    double t0 = mesh.t[k], t1 = mesh.t[k + 1];
    double h = t1 - t0, tm = 0.5 * (t0 + t1);
    Vec xm = interp_state(traj, k, tm);
    Vec pm = interp_adjoint(traj, k, tm);
    uv(0) = arc_control_clipped(s, arc, tm, xm);
    double gm = (prob.fu(xm, uv).transpose() * pm)(0);
    double g0 = grad_uh_at(traj, arc, k);
    double g1 = grad_uh_at(traj, arc, k + 1);
    total += (h / 6.0) * (g0 * shape(t0) + 4.0 * gm * shape(tm) + g1 * shape(t1));
  }
  return total;
}

double slot_integral(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s,
                     int arc, int slot) {
  const ArcProcedure& a = s.arcs[arc];
  double lo = s.nodes[arc], hi = s.nodes[arc + 1];
  return arc_shape_integral(prob, traj, s, arc,
                            [&](double t) { return basis_eval(a, t, lo, hi).w[slot]; });
}

enum class EndSens { Left, Right };

// Integral of gradUH times the control's sensitivity to one interval
// endpoint, parameters held fixed.
double endpoint_integral(const ProblemDef& prob, const Trajectory& traj,
                         const ControlStructure& s, int arc, EndSens which) {
  const ArcProcedure& a = s.arcs[arc];
  if (!arc_is_explicit(a.kind)) return 0.0;
  if (s.arc_zero_length(arc)) return 0.0;
  double lo = s.nodes[arc], hi = s.nodes[arc + 1];
  return arc_shape_integral(prob, traj, s, arc, [&](double t) {
    BasisEval e = basis_eval(a, t, lo, hi);
    double v = 0.0;
    for (int k = 0; k < e.size; ++k)
      v += a.p(k) * (which == EndSens::Left ? e.wa[k] : e.wb[k]);
    return v;
  });
}

void require_interior_node(const ControlStructure& s, int node) {
  if (node <= 0 || node >= static_cast<int>(s.nodes.size()) - 1)
    throw std::invalid_argument("node gradient: interior node required");
}

}  // namespace

double grad_params_own(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s,
                       int arc, int slot) {
  const ArcProcedure& a = s.arcs[arc];
  if (!arc_is_explicit(a.kind))
    throw std::invalid_argument("grad_params: arc carries no parameters");
  if (slot < 0 || slot >= a.basis_size()) throw std::invalid_argument("grad_params: bad slot");
  if (s.arc_zero_length(arc)) return 0.0;
  return -slot_integral(prob, traj, s, arc, slot);
}

double grad_params(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s,
                   int arc, int slot) {
  double g = grad_params_own(prob, traj, s, arc, slot);
  int N = s.arc_count();
  if (slot == 2 && arc + 1 < N && s.arcs[arc + 1].link_value_left)
    g += grad_params_own(prob, traj, s, arc + 1, 0);
  if (slot == 3 && arc + 1 < N && s.arcs[arc + 1].link_slope_left)
    g += grad_params_own(prob, traj, s, arc + 1, 1);
  if (slot == 0 && s.arcs[arc].link_value_left && arc > 0)
    g += grad_params_own(prob, traj, s, arc - 1, 2);
  if (slot == 1 && s.arcs[arc].link_slope_left && arc > 0)
    g += grad_params_own(prob, traj, s, arc - 1, 3);
  return g;
}

double hamiltonian_jump(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s,
                        int node) {
  require_interior_node(s, node);
  int k = traj.mesh.node_sample[node];
  const Vec& x = traj.x[k];
  const Vec& psi = traj.psi[k];
  Vec uv(1);
  uv(0) = arc_endpoint_value(s, node, true, x);
  double hplus = hamiltonian(psi, x, uv, prob);
  uv(0) = arc_endpoint_value(s, node - 1, false, x);
  double hminus = hamiltonian(psi, x, uv, prob);
  return hplus - hminus;
}

double grad_node_jump(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s,
                      int node) {
  return hamiltonian_jump(prob, traj, s, node);
}

double grad_node_mixed(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s,
                       int node) {
  require_interior_node(s, node);
  double g = hamiltonian_jump(prob, traj, s, node);
  g -= endpoint_integral(prob, traj, s, node - 1, EndSens::Right);
  g -= endpoint_integral(prob, traj, s, node, EndSens::Left);
  return g;
}

double grad_node_interior_right(const ProblemDef& prob, const Trajectory& traj,
                                const ControlStructure& s, int node) {
  require_interior_node(s, node);
  int li = node - 1;
  const ArcProcedure& left = s.arcs[li];
  if (left.kind != ArcKind::HermiteInterior || s.arc_zero_length(li))
    throw std::invalid_argument("grad_node_interior_right: cubic left arc required");
  ArcPointEval l = eval_arc_derivatives(s, li, s.nodes[node]);
  double g = -l.du * grad_params(prob, traj, s, li, 2) -
             l.ddu * grad_params_own(prob, traj, s, li, 3);
  const ArcProcedure& right = s.arcs[node];
  if (right.kind == ArcKind::HermiteInterior && right.link_value_left && right.link_slope_left &&
      !s.arc_zero_length(node)) {
    ArcPointEval r = eval_arc_derivatives(s, node, s.nodes[node]);
    g -= r.ddu * grad_params_own(prob, traj, s, node, 1);
  }
  return g;
}

GradientReport assemble_gradient(const ProblemDef& prob, const Trajectory& traj,
                                 const ControlStructure& s, const DecisionVector& d) {
  if (!traj.has_adjoint) throw std::invalid_argument("assemble_gradient: adjoint pass missing");
  GradientReport rep;
  rep.g = Vec::Zero(d.dim());
  rep.delta_H.assign(s.nodes.size(), 0.0);
  for (int i = 1; i + 1 < static_cast<int>(s.nodes.size()); ++i)
    rep.delta_H[i] = hamiltonian_jump(prob, traj, s, i);

  for (int k = 0; k < d.dim(); ++k) {
    const DecisionLayout::Entry& e = d.layout.entries[k];
    double g;
    if (e.what == DecisionLayout::What::Param) {
      g = grad_params(prob, traj, s, e.arc, e.slot);
    } else {
      int i = e.node;
      const ArcProcedure& left = s.arcs[i - 1];
      const ArcProcedure& right = s.arcs[i];
      bool lex = arc_is_explicit(left.kind) && !s.arc_zero_length(i - 1);
      bool rex = arc_is_explicit(right.kind) && !s.arc_zero_length(i);
      if (!lex && !rex) {
        g = grad_node_jump(prob, traj, s, i);
      } else if (left.kind == ArcKind::HermiteInterior && lex &&
                 right.kind == ArcKind::HermiteInterior && rex && right.link_value_left &&
                 right.link_slope_left) {
        g = grad_node_interior_right(prob, traj, s, i);
      } else {
        g = grad_node_mixed(prob, traj, s, i);
      }
    }
    if (!std::isfinite(g)) throw std::runtime_error("assemble_gradient: non-finite entry");
    rep.g(k) = g;
  }
  rep.norm = rep.g.norm();
  return rep;
}

}  // namespace mse
