#include "mse/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mse {

namespace {

// Nondecreasing isotonic regression, pool-adjacent-violators.
void isotonic_nondecreasing(std::vector<double>& v) {
  std::size_t n = v.size();
  if (n < 2) return;
  std::vector<double> mean;
  std::vector<int> cnt;
  for (double x : v) {
    mean.push_back(x);
    cnt.push_back(1);
    while (mean.size() >= 2 && mean[mean.size() - 2] > mean.back()) {
      double m = (mean[mean.size() - 2] * cnt[cnt.size() - 2] + mean.back() * cnt.back()) /
                 (cnt[cnt.size() - 2] + cnt.back());
      cnt[cnt.size() - 2] += cnt.back();
      mean[mean.size() - 2] = m;
      mean.pop_back();
      cnt.pop_back();
    }
  }
  std::size_t k = 0;
  for (std::size_t b = 0; b < mean.size(); ++b)
    for (int j = 0; j < cnt[b]; ++j) v[k++] = mean[b];
}

struct NodeEntry {
  int entry;
  int node;
};

std::vector<NodeEntry> node_entries(const DecisionVector& d) {
  std::vector<NodeEntry> out;
  for (int k = 0; k < d.dim(); ++k)
    if (d.layout.entries[k].what == DecisionLayout::What::Node)
      out.push_back({k, d.layout.entries[k].node});
  return out;
}

double raw_arc_value(const ControlStructure& s, int arc, double t) {
  return eval_arc_derivatives(s, arc, t).u;
}

// Bisection to 1e-10*T followed by a safeguarded Newton polish.
double refine_crossing(const ControlStructure& s, int arc, double bound, double lo, double hi) {
  auto g = [&](double t) { return raw_arc_value(s, arc, t) - bound; };
  double glo = g(lo), ghi = g(hi);
  if (glo == 0.0) return lo;
  if (ghi == 0.0) return hi;
  if ((glo > 0) == (ghi > 0)) return 0.5 * (lo + hi);
  double tol = 1e-10 * std::max(1.0, s.T);
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi), gm = g(mid);
    if (gm == 0.0) return mid;
    if ((gm > 0) == (glo > 0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 4; ++it) {
    ArcPointEval e = eval_arc_derivatives(s, arc, t);
    if (e.du == 0.0) break;
    double step = (e.u - bound) / e.du;
    double tn = t - step;
    if (!(tn > lo && tn < hi)) break;
    t = tn;
    if (std::abs(step) < 1e-17 * std::max(1.0, s.T)) break;
  }
  return t;
}

ControlStructure structure_copy_bumped(const ControlStructure& s) {
  ControlStructure out = s;
  out.version = s.version + 1;
  return out;
}

// Trajectory rebased onto a control-preserving refinement of its structure:
// same samples, node bookkeeping rebuilt for s_new.
Trajectory retarget_trajectory(const ProblemDef& prob, const Trajectory& traj,
                               const ControlStructure& s_new) {
  Trajectory t2;
  t2.mesh = refine_mesh(traj.mesh, s_new);
  if (t2.mesh.samples() != traj.mesh.samples())
    throw std::logic_error("candidate scoring requires node times on the sample grid");
  t2.x = traj.x;
  t2.f = traj.f;
  t2.u = traj.u;
  t2.psi = traj.psi;
  t2.psidot = traj.psidot;
  t2.gradUH = traj.gradUH;
  t2.H = traj.H;
  t2.sw = traj.sw;
  t2.sigma = traj.sigma;
  t2.has_adjoint = traj.has_adjoint;

  std::size_t nn = s_new.nodes.size();
  t2.u_left.resize(nn);
  t2.f_left.resize(nn);
  t2.gradUH_left.resize(nn);
  t2.H_left.resize(nn);
  t2.psidot_left.resize(nn);
  Vec uv(1);
  for (std::size_t j = 0; j < nn; ++j) {
    int k = t2.mesh.node_sample[j];
    const Vec& x = t2.x[k];
    t2.u_left[j] = eval_control_clipped(s_new, s_new.nodes[j], s_new.u_lower, s_new.u_upper, &x,
                                        Side::Left);
    uv(0) = t2.u_left[j];
    t2.f_left[j] = prob.f(x, uv);
    t2.H_left[j] = t2.psi[k].dot(t2.f_left[j]);
    t2.gradUH_left[j] = (prob.fu(x, uv).transpose() * t2.psi[k])(0);
    int arcl = 0;
    if (j > 0) {
      arcl = static_cast<int>(j) - 1;
      while (arcl > 0 && s_new.arc_zero_length(arcl)) --arcl;
    }
    Mat J = prob.fx(x, uv);
    const ArcProcedure& a = s_new.arcs[arcl];
    if (arc_is_feedback(a.kind) && a.feedback_dx)
      J += prob.fu(x, uv) * a.feedback_dx(x).transpose();
    t2.psidot_left[j] = -J.transpose() * t2.psi[k];
  }
  return t2;
}

double projected_norm2(const GradientReport& grad, const ControlStructure& s,
                       const DecisionVector& d) {
  return projected_antigradient(grad.g, s, d).squaredNorm();
}

// ---------------------------------------------------------------------------
// Structure builders for each generation kind. All preserve the control.

ControlStructure build_saturation(const ControlStructure& s, const GenerationCandidate& cand) {
  int i = cand.arc;
  double a = s.nodes[i], b = s.nodes[i + 1];
  std::vector<double> cuts = cand.split_points;
  std::sort(cuts.begin(), cuts.end());
  const ArcProcedure& host = s.arcs[i];

  double dtol = 1e-13 * std::max(1.0, s.T);
  std::vector<double> ends;
  ends.push_back(a);
  for (double c : cuts)
    if (c > ends.back() + dtol && c < b - dtol) ends.push_back(c);
  ends.push_back(b);

  std::vector<ArcProcedure> segs;
  for (std::size_t k = 0; k + 1 < ends.size(); ++k) {
    double lo = ends[k], hi = ends[k + 1];
    double um = raw_arc_value(s, i, 0.5 * (lo + hi));
    ArcProcedure seg;
    if (um > s.u_upper) {
      seg.kind = ArcKind::BoundaryUpper;
      seg.boundary_value = s.u_upper;
    } else if (um < s.u_lower) {
      seg.kind = ArcKind::BoundaryLower;
      seg.boundary_value = s.u_lower;
    } else {
      seg = restrict_arc(host, a, b, lo, hi);
      seg.link_value_left = seg.link_slope_left = false;
      seg.pin_left = seg.pin_right = false;
    }
    segs.push_back(std::move(seg));
  }

  // junction bookkeeping: interior endpoints meeting a boundary segment are
  // pinned to the bound; the host's outer flags survive on the outer segments
  for (std::size_t k = 0; k < segs.size(); ++k) {
    if (!arc_is_explicit(segs[k].kind)) continue;
    if (k > 0 && arc_is_boundary(segs[k - 1].kind)) {
      segs[k].pin_left = true;
      segs[k].p(0) = segs[k - 1].boundary_value;
    }
    if (k + 1 < segs.size() && arc_is_boundary(segs[k + 1].kind)) {
      segs[k].pin_right = true;
      segs[k].p(2) = segs[k + 1].boundary_value;
    }
  }
  if (arc_is_explicit(segs.front().kind)) {
    segs.front().link_value_left = host.link_value_left;
    segs.front().link_slope_left = host.link_slope_left;
    segs.front().pin_left = host.pin_left || segs.front().pin_left;
  }
  if (arc_is_explicit(segs.back().kind))
    segs.back().pin_right = host.pin_right || segs.back().pin_right;

  ControlStructure out = structure_copy_bumped(s);
  out.arcs.erase(out.arcs.begin() + i);
  out.arcs.insert(out.arcs.begin() + i, segs.begin(), segs.end());
  out.nodes.insert(out.nodes.begin() + i + 1, ends.begin() + 1, ends.end() - 1);
  // a boundary segment at the back can no longer feed the right neighbour's
  // linked slots; the neighbour keeps its synced copies, so its control is
  // untouched (its own out-of-box stretch gets split on the next sweep)
  if (!arc_is_explicit(segs.back().kind) &&
      i + static_cast<int>(segs.size()) < out.arc_count()) {
    ArcProcedure& next = out.arcs[i + segs.size()];
    next.link_value_left = next.link_slope_left = false;
  }
  out.validate();
  return out;
}

ArcProcedure make_spike_arc(const ProblemDef& prob, const ControlStructure& s, ArcKind kind,
                            double value) {
  if (arc_is_boundary(kind)) {
    ArcProcedure a;
    a.kind = kind;
    a.boundary_value = kind == ArcKind::BoundaryUpper ? s.u_upper : s.u_lower;
    return a;
  }
  if (arc_is_feedback(kind)) return make_feedback_arc(kind, prob);
  ArcProcedure a;
  a.kind = kind;
  a.p = Vec::Zero(4);
  a.p(0) = a.p(2) = value;
  return a;
}

ControlStructure build_spike(const ProblemDef& prob, const ControlStructure& s,
                             const GenerationCandidate& cand) {
  ControlStructure out = structure_copy_bumped(s);
  int i = cand.arc;
  double tau = cand.tau;
  double ztol = zero_length_tolerance(s);
  ArcProcedure spike = make_spike_arc(prob, s, cand.spike_kind, cand.spike_value);

  if (tau <= s.nodes.front() + ztol) {
    out.nodes.insert(out.nodes.begin() + 1, s.nodes.front());
    out.arcs.insert(out.arcs.begin(), std::move(spike));
  } else if (tau >= s.nodes.back() - ztol) {
    out.nodes.insert(out.nodes.end() - 1, s.nodes.back());
    out.arcs.push_back(std::move(spike));
  } else {
    const ArcProcedure& host = s.arcs[i];
    double a = s.nodes[i], b = s.nodes[i + 1];
    std::vector<ArcProcedure> seq;
    if (arc_is_explicit(host.kind)) {
      ArcProcedure left = restrict_arc(host, a, b, a, tau);
      left.link_value_left = host.link_value_left;
      left.link_slope_left = host.link_slope_left;
      left.pin_left = host.pin_left;
      left.pin_right = false;
      ArcProcedure right = restrict_arc(host, a, b, tau, b);
      right.link_value_left = right.link_slope_left = false;
      right.pin_left = false;
      right.pin_right = host.pin_right;
      seq = {std::move(left), std::move(spike), std::move(right)};
    } else {
      seq = {host, std::move(spike), host};
    }
    out.arcs.erase(out.arcs.begin() + i);
    out.arcs.insert(out.arcs.begin() + i, seq.begin(), seq.end());
    out.nodes.insert(out.nodes.begin() + i + 1, {tau, tau});
  }
  out.validate();
  return out;
}

ControlStructure build_insertion(const ControlStructure& s, int i, double tau) {
  const ArcProcedure& host = s.arcs[i];
  if (!arc_is_explicit(host.kind))
    throw std::invalid_argument("node insertion requires an explicit arc");
  double a = s.nodes[i], b = s.nodes[i + 1];
  ControlStructure out = structure_copy_bumped(s);
  ArcProcedure left = restrict_arc(host, a, b, a, tau);
  left.link_value_left = host.link_value_left;
  left.link_slope_left = host.link_slope_left;
  left.pin_left = host.pin_left;
  left.pin_right = false;
  ArcProcedure right = restrict_arc(host, a, b, tau, b);
  bool linked = host.kind != ArcKind::TimePolynomial;
  right.link_value_left = linked;
  right.link_slope_left = linked;
  right.pin_left = false;
  right.pin_right = host.pin_right;
  out.arcs[i] = std::move(left);
  out.arcs.insert(out.arcs.begin() + i + 1, std::move(right));
  out.nodes.insert(out.nodes.begin() + i + 1, tau);
  out.validate();
  return out;
}

ControlStructure build_extension(const ProblemDef& prob, const ControlStructure& s, int i) {
  if (!prob.has_canonical_modes)
    throw std::invalid_argument("basis extension: problem defines no mode constants");
  const ArcProcedure& host = s.arcs[i];
  if (host.kind != ArcKind::HermiteInterior)
    throw std::invalid_argument("basis extension: cubic arc required");
  ControlStructure out = structure_copy_bumped(s);
  ArcProcedure& a = out.arcs[i];
  a.kind = ArcKind::CanonicalInterior;
  Vec p = Vec::Zero(8);
  p.head(4) = host.p;
  a.p = std::move(p);
  a.alpha = prob.canonical_alpha;
  a.beta = prob.canonical_beta;
  out.validate();
  return out;
}

GradientReport gradient_after(const ProblemDef& prob, const Trajectory& traj,
                              const ControlStructure& s_new, DecisionVector& d_new) {
  Trajectory t2 = retarget_trajectory(prob, traj, s_new);
  d_new = pack(s_new);
  return assemble_gradient(prob, t2, s_new, d_new);
}

}  // namespace

Vec projected_antigradient(const Vec& g, const ControlStructure& s, const DecisionVector& d) {
  if (g.size() != d.dim()) throw std::invalid_argument("projection: dimension mismatch");
  Vec out = -g;
  double ztol = zero_length_tolerance(s);

  for (int k = 0; k < d.dim(); ++k) {
    const DecisionLayout::Entry& e = d.layout.entries[k];
    if (e.what != DecisionLayout::What::Param) continue;
    double v = d.values(k);
    double atol = 1e-12 * (1.0 + std::abs(v));
    if (std::isfinite(e.lo) && v <= e.lo + atol) out(k) = std::max(out(k), 0.0);
    if (std::isfinite(e.hi) && v >= e.hi - atol) out(k) = std::min(out(k), 0.0);
  }

  std::vector<NodeEntry> nodes = node_entries(d);
  std::size_t i = 0;
  while (i < nodes.size()) {
    std::size_t j = i;
    while (j + 1 < nodes.size() && nodes[j + 1].node == nodes[j].node + 1 &&
           s.nodes[nodes[j + 1].node] - s.nodes[nodes[j].node] <= ztol)
      ++j;
    bool tied_zero = s.nodes[nodes[i].node] <= ztol;
    bool tied_T = s.T - s.nodes[nodes[j].node] <= ztol;
    if (j > i || tied_zero || tied_T) {
      std::vector<double> block(j - i + 1);
      for (std::size_t q = i; q <= j; ++q) block[q - i] = out(nodes[q].entry);
      isotonic_nondecreasing(block);
      for (double& x : block) {
        if (tied_zero) x = std::max(x, 0.0);
        if (tied_T) x = std::min(x, 0.0);
      }
      for (std::size_t q = i; q <= j; ++q) out(nodes[q].entry) = block[q - i];
    }
    i = j + 1;
  }
  return out;
}

std::vector<GenerationCandidate> saturation_check(const ProblemDef& prob, const Trajectory& traj,
                                                  const ControlStructure& s) {
  (void)prob;
  std::vector<GenerationCandidate> out;
  const Mesh& mesh = traj.mesh;
  const int refine = 4;
  for (int i = 0; i < s.arc_count(); ++i) {
    if (!arc_is_explicit(s.arcs[i].kind) || s.arc_zero_length(i)) continue;
    int k0 = mesh.node_sample[i], k1 = mesh.node_sample[i + 1];
    std::vector<double> grid;
    for (int k = k0; k < k1; ++k)
      for (int q = 0; q < refine; ++q)
        grid.push_back(mesh.t[k] + (mesh.t[k + 1] - mesh.t[k]) * q / refine);
    grid.push_back(mesh.t[k1]);

    // -1 below lower bound, +1 above upper, 0 inside
    auto region = [&](double t) {
      double u = raw_arc_value(s, i, t);
      return u > s.u_upper ? 1 : (u < s.u_lower ? -1 : 0);
    };
    std::vector<double> cuts;
    int prev = region(grid[0]);
    for (std::size_t k = 1; k < grid.size(); ++k) {
      int cur = region(grid[k]);
      if (cur != prev) {
        int outside = (cur != 0) ? cur : prev;
        double bound = outside > 0 ? s.u_upper : s.u_lower;
        cuts.push_back(refine_crossing(s, i, bound, grid[k - 1], grid[k]));
        if (cur != 0 && prev != 0) {
          // jumped across the whole box within one cell: split on both bounds
          double bound2 = prev > 0 ? s.u_upper : s.u_lower;
          cuts.push_back(refine_crossing(s, i, bound2, grid[k - 1], grid[k]));
        }
        prev = cur;
      }
    }
    if (!cuts.empty() || region(grid[0]) != 0) {
      bool outside_anywhere = region(grid[0]) != 0;
      for (double t : grid)
        if (region(t) != 0) outside_anywhere = true;
      if (!outside_anywhere) continue;
      GenerationCandidate c;
      c.kind = GenerationCandidate::Kind::Saturation;
      c.arc = i;
      std::sort(cuts.begin(), cuts.end());
      c.split_points = std::move(cuts);
      c.tau = c.split_points.empty() ? s.nodes[i] : c.split_points.front();
      c.structure_version = s.version;
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<GenerationCandidate> spike_candidates(const ProblemDef& prob, const Trajectory& traj,
                                                  const ControlStructure& s,
                                                  const GradientReport& grad,
                                                  const DecisionVector& d,
                                                  const EvolutionConfig& cfg) {
  std::vector<GenerationCandidate> out;
  if (!traj.has_adjoint || traj.gradUH.empty()) return out;
  const Mesh& mesh = traj.mesh;
  double pn2 = projected_norm2(grad, s, d);
  double floor_eff = cfg.abs_eff_coeff * pn2 + cfg.abs_eff_const;
  double ztol = zero_length_tolerance(s);
  Vec uv(1);

  int ns = mesh.samples();
  std::vector<int> sa;
  sa.reserve(ns);
  for (std::size_t i = 0; i < mesh.arc_steps.size(); ++i)
    for (int k = 0; k < mesh.arc_steps[i]; ++k) sa.push_back(static_cast<int>(i));
  auto arc_of_sample = [&](int k) { return k < ns - 1 ? sa[k] : sa.back(); };

  // per-sample efficiency and proposed procedure
  std::vector<double> eff(ns, 0.0);
  std::vector<ArcKind> kind(ns, ArcKind::BoundaryUpper);
  std::vector<double> val(ns, 0.0);
  for (int k = 0; k < ns; ++k) {
    bool endpoint = (k == 0) || (k == ns - 1);
    if (!endpoint && mesh.sample_node[k] >= 0) continue;
    double t = mesh.t[k];
    // skip points hugging an existing node
    if (!endpoint) {
      auto it = std::lower_bound(s.nodes.begin(), s.nodes.end(), t - ztol);
      if (it != s.nodes.end() && std::abs(*it - t) <= ztol) continue;
    }
    double u = traj.u[k], gu = traj.gradUH[k];
    const Vec& x = traj.x[k];
    const Vec& psi = traj.psi[k];

    double v = 0.0;
    bool have = false;
    ArcKind kk = ArcKind::BoundaryUpper;
    if (prob.u_int) {
      double ui;
      bool ok = true;
      try {
        ui = prob.u_int(x);
      } catch (const std::exception&) {
        ok = false;
        ui = 0.0;
      }
      if (ok && ((gu > 0 && u < ui && ui < s.u_upper) || (gu < 0 && s.u_lower < ui && ui < u))) {
        v = ui;
        kk = ArcKind::SingularFeedback;
        have = true;
      }
    } else if (prob.u_con && prob.penalty) {
      double active = x(prob.penalty->constrained_state) - (prob.penalty->bound - cfg.constraint_activity_tol);
      if (active >= 0.0) {
        double uc = prob.u_con(x);
        if ((gu > 0 && u < uc && uc < s.u_upper) || (gu < 0 && s.u_lower < uc && uc < u)) {
          v = uc;
          kk = ArcKind::ConstrainedFeedback;
          have = true;
        }
      }
    }
    // a bound arc whose hamiltonian peaks strictly inside the box seeds a
    // free interior procedure at the maximizing control
    if (!have && arc_is_boundary(s.arcs[arc_of_sample(k)].kind)) {
      double du = 1e-4 * (1.0 + std::abs(u));
      uv(0) = u + du;
      double gp = grad_u_hamiltonian(psi, x, uv, prob)(0);
      uv(0) = u - du;
      double gm = grad_u_hamiltonian(psi, x, uv, prob)(0);
      double slope = (gp - gm) / (2.0 * du);
      if (slope < -1e-12 * (1.0 + std::abs(gu))) {
        double ustar = u - gu / slope;
        uv(0) = ustar;
        ustar -= grad_u_hamiltonian(psi, x, uv, prob)(0) / slope;
        double margin = 1e-6 * (s.u_upper - s.u_lower);
        if (ustar > s.u_lower + margin && ustar < s.u_upper - margin) {
          v = ustar;
          kk = ArcKind::HermiteInterior;
          have = true;
        }
      }
    }
    if (!have) {
      if (gu > 0 && u < s.u_upper) {
        v = s.u_upper;
        kk = ArcKind::BoundaryUpper;
        have = true;
      } else if (gu < 0 && u > s.u_lower) {
        v = s.u_lower;
        kk = ArcKind::BoundaryLower;
        have = true;
      }
    }
    if (!have) continue;
    uv(0) = v;
    double dH = hamiltonian(psi, x, uv, prob) - traj.H[k];
    if (dH <= 0.0) continue;
    eff[k] = (endpoint ? 1.0 : 2.0) * dH * dH;
    kind[k] = kk;
    val[k] = v;
  }

  std::vector<GenerationCandidate> pool;
  for (int k = 0; k < ns; ++k) {
    if (eff[k] <= floor_eff) continue;
    int a = arc_of_sample(k);
    // one candidate per hump, where a hump is a same-kind run: a proposal of a
    // different procedure next door competes in selection, not in pooling
    auto rival = [&](int j) {
      return arc_of_sample(j) == a && kind[j] == kind[k] ? eff[j] : 0.0;
    };
    double el = k > 0 ? rival(k - 1) : 0.0;
    double er = k + 1 < ns ? rival(k + 1) : 0.0;
    if (eff[k] < el || eff[k] < er) continue;
    GenerationCandidate c;
    c.kind = GenerationCandidate::Kind::Spike;
    c.tau = mesh.t[k];
    c.arc = a;
    c.spike_kind = kind[k];
    c.spike_value = val[k];
    c.efficiency = eff[k];
    c.rel_efficiency = eff[k] / (pn2 + eff[k]);
    c.structure_version = s.version;
    pool.push_back(std::move(c));
  }

  std::stable_sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
    if (a.efficiency != b.efficiency) return a.efficiency > b.efficiency;
    return a.tau < b.tau;
  });
  std::vector<int> per_arc(s.arc_count(), 0);
  for (auto& c : pool) {
    if (per_arc[c.arc] >= cfg.max_spikes_per_arc) continue;
    ++per_arc[c.arc];
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<GenerationCandidate> node_insertion_candidates(const ProblemDef& prob,
                                                           const Trajectory& traj,
                                                           const ControlStructure& s,
                                                           const GradientReport& grad,
                                                           const DecisionVector& d,
                                                           const EvolutionConfig& cfg) {
  std::vector<GenerationCandidate> out;
  const Mesh& mesh = traj.mesh;
  double pn2 = projected_norm2(grad, s, d);
  double floor_eff = cfg.abs_eff_coeff * pn2 + cfg.abs_eff_const;

  for (int i = 0; i < s.arc_count(); ++i) {
    if (!arc_is_explicit(s.arcs[i].kind) || s.arc_zero_length(i)) continue;
    int k0 = mesh.node_sample[i], k1 = mesh.node_sample[i + 1];
    int steps = k1 - k0;
    if (steps < 2) continue;
    int stride = std::max(1, steps / 16);

    double dev = 0.0;
    for (int k = k0; k <= k1; ++k) dev = std::max(dev, std::abs(traj.gradUH[k]));

    std::vector<std::pair<double, double>> scored;  // (eff, tau)
    for (int k = k0 + stride; k < k1; k += stride) {
      if (mesh.sample_node[k] >= 0) continue;
      double tau = mesh.t[k];
      ControlStructure s2 = build_insertion(s, i, tau);
      DecisionVector d2;
      GradientReport g2 = gradient_after(prob, traj, s2, d2);
      double eff = projected_norm2(g2, s2, d2) - pn2;
      scored.emplace_back(eff, tau);
    }
    for (std::size_t q = 0; q < scored.size(); ++q) {
      double e = scored[q].first;
      if (e <= floor_eff) continue;
      double el = q > 0 ? scored[q - 1].first : 0.0;
      double er = q + 1 < scored.size() ? scored[q + 1].first : 0.0;
      if (e < el || e < er) continue;
      GenerationCandidate c;
      c.kind = GenerationCandidate::Kind::NodeInsertion;
      c.tau = scored[q].second;
      c.arc = i;
      c.efficiency = e;
      c.rel_efficiency = e / (pn2 + e);
      c.secondary = dev;
      c.structure_version = s.version;
      out.push_back(std::move(c));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.efficiency != b.efficiency) return a.efficiency > b.efficiency;
    return a.tau < b.tau;
  });
  return out;
}

GenerationCandidate make_basis_extension(const ProblemDef& prob, const Trajectory& traj,
                                         const ControlStructure& s, const GradientReport& grad,
                                         const DecisionVector& d, int arc) {
  ControlStructure s2 = build_extension(prob, s, arc);
  DecisionVector d2;
  GradientReport g2 = gradient_after(prob, traj, s2, d2);
  double pn2 = projected_norm2(grad, s, d);
  double eff = projected_norm2(g2, s2, d2) - pn2;
  GenerationCandidate c;
  c.kind = GenerationCandidate::Kind::BasisExtension;
  c.arc = arc;
  c.tau = s.nodes[arc];
  c.efficiency = std::max(0.0, eff);
  c.rel_efficiency = c.efficiency / (pn2 + c.efficiency);
  c.structure_version = s.version;
  return c;
}

ControlStructure apply_generation(const ProblemDef& prob, const ControlStructure& s,
                                  const GenerationCandidate& cand) {
  if (cand.structure_version != s.version)
    throw std::runtime_error("apply_generation: candidate is stale");
  switch (cand.kind) {
    case GenerationCandidate::Kind::Saturation:
      return build_saturation(s, cand);
    case GenerationCandidate::Kind::Spike:
      return build_spike(prob, s, cand);
    case GenerationCandidate::Kind::NodeInsertion:
      return build_insertion(s, cand.arc, cand.tau);
    case GenerationCandidate::Kind::BasisExtension:
      return build_extension(prob, s, cand.arc);
  }
  throw std::invalid_argument("apply_generation: unknown candidate kind");
}

ReduceResult reduce(const ProblemDef& prob, const ControlStructure& s, const DecisionVector& d,
                    const GradientReport& grad) {
  (void)prob;
  Vec proj = projected_antigradient(grad.g, s, d);
  std::vector<double> node_proj(s.nodes.size(), 0.0);
  for (int k = 0; k < d.dim(); ++k)
    if (d.layout.entries[k].what == DecisionLayout::What::Node)
      node_proj[d.layout.entries[k].node] = proj(k);

  ReduceResult res;
  res.structure = s;
  std::vector<ReductionEvent> events;
  int last = static_cast<int>(s.nodes.size()) - 1;

  auto free_params = [&](const ArcProcedure& a) {
    int n = a.basis_size();
    if (n == 0) return 0;
    if (a.link_value_left || a.pin_left) --n;
    if (a.link_slope_left) --n;
    if (a.pin_right) --n;
    return n;
  };

  for (int i = res.structure.arc_count() - 1; i >= 0; --i) {
    if (!res.structure.arc_zero_length(i)) continue;
    double pa = (i == 0) ? 0.0 : node_proj[i];
    double pb = (i + 1 == last) ? 0.0 : node_proj[i + 1];
    // retained only while the projected antigradient strictly widens it
    double widen = pb - pa;
    double tol = 1e-14 * (1.0 + std::abs(pa) + std::abs(pb));
    if (i == 0 && i + 1 == static_cast<int>(res.structure.nodes.size()) - 1) continue;
    if (widen > tol) continue;
    ReductionEvent ev;
    ev.kind = ReductionEvent::Kind::ZeroLengthArc;
    ev.arc = i;
    int regained = 0;
    // a right neighbour linked into the removed arc keeps its synced slot
    // copies; the broken links turn those slots back into free entries
    if (i + 1 < res.structure.arc_count()) {
      ArcProcedure& nxt = res.structure.arcs[i + 1];
      if (nxt.link_value_left) ++regained;
      if (nxt.link_slope_left) ++regained;
      nxt.link_value_left = nxt.link_slope_left = false;
    }
    ev.removed_entries = free_params(res.structure.arcs[i]) + 1 - regained;
    events.push_back(ev);
    int drop_node = (i + 1 == static_cast<int>(res.structure.nodes.size()) - 1) ? i : i + 1;
    res.structure.arcs.erase(res.structure.arcs.begin() + i);
    res.structure.nodes.erase(res.structure.nodes.begin() + drop_node);
    last = static_cast<int>(res.structure.nodes.size()) - 1;
  }

  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = 0; i + 1 < res.structure.arc_count(); ++i) {
      const ArcProcedure& a = res.structure.arcs[i];
      const ArcProcedure& b = res.structure.arcs[i + 1];
      bool same = (arc_is_boundary(a.kind) && a.kind == b.kind &&
                   a.boundary_value == b.boundary_value) ||
                  (arc_is_feedback(a.kind) && a.kind == b.kind);
      if (!same) continue;
      ReductionEvent ev;
      ev.kind = ReductionEvent::Kind::MergeAdjacent;
      ev.arc = i;
      ev.removed_entries = 1;
      events.push_back(ev);
      res.structure.arcs.erase(res.structure.arcs.begin() + i + 1);
      res.structure.nodes.erase(res.structure.nodes.begin() + i + 1);
      changed = true;
      break;
    }
  }

  if (!events.empty()) res.structure.version = s.version + 1;
  res.structure.validate();
  res.decision = pack(res.structure);
  res.events = std::move(events);
  return res;
}

double control_distance(const ProblemDef& prob, const ControlStructure& s_old,
                        const ControlStructure& s_new, const Trajectory& traj, int factor) {
  (void)prob;
  const Mesh& mesh = traj.mesh;
  double worst = 0.0;
  for (int k = 0; k + 1 < mesh.samples(); ++k) {
    double t0 = mesh.t[k], t1 = mesh.t[k + 1];
    for (int q = 0; q <= factor; ++q) {
      double t = t0 + (t1 - t0) * q / factor;
      Vec x = (q == 0) ? traj.x[k] : (q == factor ? traj.x[k + 1] : interp_state(traj, k, t));
      double uo = eval_control_clipped(s_old, t, s_old.u_lower, s_old.u_upper, &x, Side::Right);
      double un = eval_control_clipped(s_new, t, s_new.u_lower, s_new.u_upper, &x, Side::Right);
      worst = std::max(worst, std::abs(un - uo));
    }
  }
  return worst;
}

}  // namespace mse
