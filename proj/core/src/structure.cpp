#include "mse/structure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mse {

namespace {

double degenerate_threshold(double a, double b) {
  return 1e-14 * std::max({1.0, std::abs(a), std::abs(b)});
}

void require_interval(double a, double b) {
  if (!(b - a > degenerate_threshold(a, b)))
    throw std::invalid_argument("basis: degenerate interval");
}

struct ModeEval {
  std::array<double, 4> v, vd, vdd;
};

ModeEval modes_at(double s, double alpha, double beta) {
  double ep = std::exp(alpha * s), em = std::exp(-alpha * s);
  double sn = std::sin(beta * s), cs = std::cos(beta * s);
  ModeEval m;
  m.v = {ep * sn, ep * cs, em * sn, em * cs};
  m.vd = {ep * (alpha * sn + beta * cs), ep * (alpha * cs - beta * sn),
          em * (-alpha * sn + beta * cs), em * (-alpha * cs - beta * sn)};
  double a2b2 = alpha * alpha - beta * beta, ab2 = 2.0 * alpha * beta;
  m.vdd = {ep * (a2b2 * sn + ab2 * cs), ep * (a2b2 * cs - ab2 * sn),
           em * (a2b2 * sn - ab2 * cs), em * (a2b2 * cs + ab2 * sn)};
  return m;
}

}  // namespace

const char* arc_kind_name(ArcKind k) {
  switch (k) {
    case ArcKind::BoundaryLower: return "BoundaryLower";
    case ArcKind::BoundaryUpper: return "BoundaryUpper";
    case ArcKind::HermiteInterior: return "HermiteInterior";
    case ArcKind::CanonicalInterior: return "CanonicalInterior";
    case ArcKind::SingularFeedback: return "SingularFeedback";
    case ArcKind::ConstrainedFeedback: return "ConstrainedFeedback";
    case ArcKind::TimePolynomial: return "TimePolynomial";
  }
  throw std::invalid_argument("arc_kind_name: unknown kind");
}

ArcKind arc_kind_from_name(const std::string& s) {
  for (ArcKind k : {ArcKind::BoundaryLower, ArcKind::BoundaryUpper, ArcKind::HermiteInterior,
                    ArcKind::CanonicalInterior, ArcKind::SingularFeedback,
                    ArcKind::ConstrainedFeedback, ArcKind::TimePolynomial})
    if (s == arc_kind_name(k)) return k;
  throw std::invalid_argument("arc_kind_from_name: unknown kind '" + s + "'");
}

bool arc_is_explicit(ArcKind k) {
  return k == ArcKind::HermiteInterior || k == ArcKind::CanonicalInterior ||
         k == ArcKind::TimePolynomial;
}

bool arc_is_boundary(ArcKind k) {
  return k == ArcKind::BoundaryLower || k == ArcKind::BoundaryUpper;
}

bool arc_is_feedback(ArcKind k) {
  return k == ArcKind::SingularFeedback || k == ArcKind::ConstrainedFeedback;
}

int ArcProcedure::basis_size() const {
  if (kind == ArcKind::CanonicalInterior) return 8;
  if (arc_is_explicit(kind)) return 4;
  return 0;
}

ArcProcedure make_boundary_arc(ArcKind kind, const ProblemDef& prob) {
  if (!arc_is_boundary(kind)) throw std::invalid_argument("make_boundary_arc: not a boundary kind");
  ArcProcedure a;
  a.kind = kind;
  a.boundary_value = (kind == ArcKind::BoundaryLower) ? prob.lower(0) : prob.upper(0);
  return a;
}

ArcProcedure make_feedback_arc(ArcKind kind, const ProblemDef& prob) {
  ArcProcedure a;
  a.kind = kind;
  if (kind == ArcKind::SingularFeedback) {
    if (!prob.u_int) throw std::invalid_argument("problem has no interior feedback law");
    a.feedback = prob.u_int;
    a.feedback_dx = prob.u_int_dx;
  } else if (kind == ArcKind::ConstrainedFeedback) {
    if (!prob.u_con) throw std::invalid_argument("problem has no constrained feedback law");
    a.feedback = prob.u_con;
    a.feedback_dx = prob.u_con_dx;
  } else {
    throw std::invalid_argument("make_feedback_arc: not a feedback kind");
  }
  return a;
}

double zero_length_tolerance(const ControlStructure& s) {
  return 1e-9 * std::max(1.0, s.T);
}

bool ControlStructure::arc_zero_length(int i) const {
  return arc_length(i) <= zero_length_tolerance(*this);
}

int ControlStructure::arc_at(double t) const {
  int N = arc_count();
  if (N == 0) throw std::logic_error("arc_at: empty structure");
  int i = static_cast<int>(std::upper_bound(nodes.begin(), nodes.end(), t) - nodes.begin()) - 1;
  i = std::clamp(i, 0, N - 1);
  while (i < N - 1 && arc_zero_length(i)) ++i;
  while (i > 0 && arc_zero_length(i)) --i;
  return i;
}

void ControlStructure::validate() const {
  if (nodes.size() != arcs.size() + 1 || arcs.empty())
    throw std::invalid_argument("structure: node/arc count mismatch");
  if (nodes.front() != 0.0) throw std::invalid_argument("structure: first node must be 0");
  if (nodes.back() != T) throw std::invalid_argument("structure: last node must be T");
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
    if (nodes[i + 1] < nodes[i]) throw std::invalid_argument("structure: nodes out of order");
  for (int i = 0; i < arc_count(); ++i) {
    const ArcProcedure& a = arcs[i];
    if (arc_is_explicit(a.kind)) {
      if (a.p.size() != a.basis_size())
        throw std::invalid_argument("structure: arc parameter count mismatch");
    } else if (arc_is_feedback(a.kind)) {
      if (!a.feedback) throw std::invalid_argument("structure: feedback arc without a law");
    }
    if ((a.link_value_left || a.link_slope_left)) {
      if (a.kind == ArcKind::TimePolynomial)
        throw std::invalid_argument("structure: this arc kind never links");
      if (i == 0 || !arc_is_explicit(a.kind) || !arc_is_explicit(arcs[i - 1].kind))
        throw std::invalid_argument("structure: link requires explicit left neighbour");
    }
  }
}

std::array<double, 4> hermite_basis(double t, double a, double b) {
  require_interval(a, b);
  double h = b - a, s = (t - a) / h, r = 1.0 - s;
  return {r * r * (1.0 + 2.0 * s), h * s * r * r, s * s * (3.0 - 2.0 * s), h * s * s * (s - 1.0)};
}

std::array<double, 4> canonical_modes(double t, double a, double alpha, double beta) {
  return modes_at(t - a, alpha, beta).v;
}

std::array<double, 8> extended_basis(double t, double a, double b, double alpha, double beta) {
  require_interval(a, b);
  std::array<double, 4> w = hermite_basis(t, a, b);
  std::array<double, 4> v = canonical_modes(t, a, alpha, beta);
  std::array<double, 4> v0 = {0.0, 1.0, 0.0, 1.0};
  std::array<double, 4> vh = modes_at(b - a, alpha, beta).v;
  std::array<double, 8> out;
  for (int k = 0; k < 4; ++k) out[k] = w[k];
  for (int k = 0; k < 4; ++k) out[4 + k] = v[k] - v0[k] * w[0] - vh[k] * w[2];
  return out;
}

BasisEval basis_eval(const ArcProcedure& arc, double t, double a, double b) {
  require_interval(a, b);
  if (!arc_is_explicit(arc.kind)) throw std::invalid_argument("basis_eval: arc has no basis");
  double h = b - a, s = (t - a) / h, r = 1.0 - s;

  BasisEval e;
  e.size = arc.basis_size();
  e.w = {r * r * (1.0 + 2.0 * s), h * s * r * r, s * s * (3.0 - 2.0 * s), h * s * s * (s - 1.0),
         0, 0, 0, 0};
  // derivatives in s, converted by the chain rule below
  std::array<double, 4> ds = {-6.0 * s * r, h * r * (1.0 - 3.0 * s), 6.0 * s * r,
                              h * s * (3.0 * s - 2.0)};
  std::array<double, 4> dss = {12.0 * s - 6.0, h * (6.0 * s - 4.0), 6.0 - 12.0 * s,
                               h * (6.0 * s - 2.0)};
  for (int k = 0; k < 4; ++k) {
    e.wt[k] = ds[k] / h;
    e.wtt[k] = dss[k] / (h * h);
  }
  e.wa = {6.0 * s * r * r / h, -r * r * (1.0 - 2.0 * s), -6.0 * s * r * r / h, 2.0 * s * r * r,
          0, 0, 0, 0};
  e.wb = {6.0 * s * s * r / h, 2.0 * s * s * r, -6.0 * s * s * r / h, s * s * (1.0 - 2.0 * s),
          0, 0, 0, 0};

  if (arc.kind == ArcKind::CanonicalInterior) {
    ModeEval m = modes_at(t - a, arc.alpha, arc.beta);
    ModeEval mh = modes_at(h, arc.alpha, arc.beta);
    std::array<double, 4> v0 = {0.0, 1.0, 0.0, 1.0};
    for (int k = 0; k < 4; ++k) {
      e.w[4 + k] = m.v[k] - v0[k] * e.w[0] - mh.v[k] * e.w[2];
      e.wt[4 + k] = m.vd[k] - v0[k] * e.wt[0] - mh.v[k] * e.wt[2];
      e.wtt[4 + k] = m.vdd[k] - v0[k] * e.wtt[0] - mh.v[k] * e.wtt[2];
      e.wa[4 + k] = -m.vd[k] + mh.vd[k] * e.w[2] - v0[k] * e.wa[0] - mh.v[k] * e.wa[2];
      e.wb[4 + k] = -v0[k] * e.wb[0] - mh.vd[k] * e.w[2] - mh.v[k] * e.wb[2];
    }
  }
  return e;
}

namespace {

double eval_arc_value(const ControlStructure& s, int i, double t, const Vec* x, Side side) {
  const ArcProcedure& arc = s.arcs[i];
  if (arc_is_boundary(arc.kind)) return arc.boundary_value;
  if (arc_is_feedback(arc.kind)) {
    if (!x) throw std::invalid_argument("eval_control: feedback arc needs the state");
    return arc.feedback(*x);
  }
  double a = s.nodes[i], b = s.nodes[i + 1];
  if (b - a <= degenerate_threshold(a, b))
    return side == Side::Left ? arc.p(2) : arc.p(0);
  BasisEval e = basis_eval(arc, t, a, b);
  double u = 0.0;
  for (int k = 0; k < e.size; ++k) u += arc.p(k) * e.w[k];
  return u;
}

}  // namespace

double eval_control(const ControlStructure& s, double t, const Vec* x, Side side) {
  double slack = 1e-12 * std::max(1.0, s.T);
  if (t < -slack || t > s.T + slack)
    throw std::invalid_argument("eval_control: time outside the horizon");
  t = std::clamp(t, 0.0, s.T);

  int i;
  if (side == Side::Left) {
    int N = s.arc_count();
    int k = static_cast<int>(std::lower_bound(s.nodes.begin(), s.nodes.end(), t) - s.nodes.begin());
    i = std::clamp(k - 1, 0, N - 1);
    while (i > 0 && s.arc_zero_length(i)) --i;
    while (i < N - 1 && s.arc_zero_length(i)) ++i;
  } else {
    i = s.arc_at(t);
  }
  return eval_arc_value(s, i, t, x, side);
}

double eval_control_clipped(const ControlStructure& s, double t, double lower, double upper,
                            const Vec* x, Side side) {
  double slack = 1e-12 * std::max(1.0, s.T);
  if (t < -slack || t > s.T + slack)
    throw std::invalid_argument("eval_control: time outside the horizon");
  t = std::clamp(t, 0.0, s.T);
  int i;
  if (side == Side::Left) {
    int N = s.arc_count();
    int k = static_cast<int>(std::lower_bound(s.nodes.begin(), s.nodes.end(), t) - s.nodes.begin());
    i = std::clamp(k - 1, 0, N - 1);
    while (i > 0 && s.arc_zero_length(i)) --i;
    while (i < N - 1 && s.arc_zero_length(i)) ++i;
  } else {
    i = s.arc_at(t);
  }
  double u = eval_arc_value(s, i, t, x, side);
  if (arc_is_explicit(s.arcs[i].kind)) u = std::clamp(u, lower, upper);
  return u;
}

double arc_control_clipped(const ControlStructure& s, int arc, double t, const Vec& x) {
  const ArcProcedure& a = s.arcs[arc];
  if (arc_is_boundary(a.kind)) return a.boundary_value;
  if (arc_is_feedback(a.kind)) return a.feedback(x);
  double lo = s.nodes[arc], hi = s.nodes[arc + 1];
  if (hi - lo <= degenerate_threshold(lo, hi)) return std::clamp(a.p(0), s.u_lower, s.u_upper);
  BasisEval e = basis_eval(a, std::clamp(t, lo, hi), lo, hi);
  double u = 0.0;
  for (int k = 0; k < e.size; ++k) u += a.p(k) * e.w[k];
  return std::clamp(u, s.u_lower, s.u_upper);
}

double arc_endpoint_value(const ControlStructure& s, int arc, bool left_end, const Vec& x) {
  const ArcProcedure& a = s.arcs[arc];
  if (arc_is_boundary(a.kind)) return a.boundary_value;
  if (arc_is_feedback(a.kind)) return a.feedback(x);
  return std::clamp(left_end ? a.p(0) : a.p(2), s.u_lower, s.u_upper);
}

ArcPointEval eval_arc_derivatives(const ControlStructure& s, int arc, double t) {
  const ArcProcedure& a = s.arcs[arc];
  if (arc_is_boundary(a.kind)) return {a.boundary_value, 0.0, 0.0};
  if (arc_is_feedback(a.kind))
    throw std::invalid_argument("eval_arc_derivatives: feedback arcs have no explicit expansion");
  double lo = s.nodes[arc], hi = s.nodes[arc + 1];
  if (hi - lo <= degenerate_threshold(lo, hi)) return {a.p(0), 0.0, 0.0};
  BasisEval e = basis_eval(a, t, lo, hi);
  ArcPointEval out;
  for (int k = 0; k < e.size; ++k) {
    out.u += a.p(k) * e.w[k];
    out.du += a.p(k) * e.wt[k];
    out.ddu += a.p(k) * e.wtt[k];
  }
  return out;
}

ArcProcedure restrict_arc(const ArcProcedure& arc, double a_old, double b_old, double a_new,
                          double b_new) {
  if (!arc_is_explicit(arc.kind)) return arc;
  require_interval(a_old, b_old);
  require_interval(a_new, b_new);

  ArcProcedure out = arc;
  auto point = [&](double t) {
    BasisEval e = basis_eval(arc, t, a_old, b_old);
    double u = 0.0, du = 0.0;
    for (int k = 0; k < e.size; ++k) {
      u += arc.p(k) * e.w[k];
      du += arc.p(k) * e.wt[k];
    }
    return std::pair<double, double>(u, du);
  };
  auto [ua, dua] = point(a_new);
  auto [ub, dub] = point(b_new);

  if (arc.kind == ArcKind::CanonicalInterior) {
    double al = arc.alpha, be = arc.beta, d = a_new - a_old;
    double ep = std::exp(al * d), em = std::exp(-al * d);
    double cs = std::cos(be * d), sn = std::sin(be * d);
    Vec q(4);
    q(0) = ep * (arc.p(4) * cs - arc.p(5) * sn);
    q(1) = ep * (arc.p(4) * sn + arc.p(5) * cs);
    q(2) = em * (arc.p(6) * cs - arc.p(7) * sn);
    q(3) = em * (arc.p(6) * sn + arc.p(7) * cs);
    ModeEval m0 = modes_at(0.0, al, be);
    ModeEval mh = modes_at(b_new - a_new, al, be);
    double slope0 = 0.0, slopeh = 0.0;
    for (int k = 0; k < 4; ++k) {
      slope0 += q(k) * m0.vd[k];
      slopeh += q(k) * mh.vd[k];
    }
    out.p = Vec(8);
    out.p(0) = ua;
    out.p(1) = dua - slope0;
    out.p(2) = ub;
    out.p(3) = dub - slopeh;
    out.p.segment(4, 4) = q;
  } else {
    out.p = Vec(4);
    out.p << ua, dua, ub, dub;
  }
  return out;
}

DecisionVector pack(const ControlStructure& s) {
  s.validate();
  DecisionVector d;
  std::vector<double> vals;
  int N = s.arc_count();
  for (int i = 0; i < N; ++i) {
    const ArcProcedure& a = s.arcs[i];
    int nb = a.basis_size();
    for (int j = 0; j < nb; ++j) {
      if (j == 0 && (a.link_value_left || a.pin_left)) continue;
      if (j == 1 && a.link_slope_left) continue;
      if (j == 2 && a.pin_right) continue;
      DecisionLayout::Entry e;
      e.what = DecisionLayout::What::Param;
      e.arc = i;
      e.slot = j;
      if (j == 0 || j == 2) {
        e.lo = s.u_lower;
        e.hi = s.u_upper;
      }
      if (j == 2 && i + 1 < N && s.arcs[i + 1].link_value_left) {
        e.twin_arc = i + 1;
        e.twin_slot = 0;
      }
      if (j == 3 && i + 1 < N && s.arcs[i + 1].link_slope_left) {
        e.twin_arc = i + 1;
        e.twin_slot = 1;
      }
      d.layout.entries.push_back(e);
      vals.push_back(a.p(j));
    }
    if (i + 1 < N) {
      DecisionLayout::Entry e;
      e.what = DecisionLayout::What::Node;
      e.node = i + 1;
      e.lo = 0.0;
      e.hi = s.T;
      d.layout.entries.push_back(e);
      vals.push_back(s.nodes[i + 1]);
    }
  }
  d.values = Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return d;
}

ControlStructure unpack(const ControlStructure& s, const DecisionVector& d) {
  if (d.values.size() != d.layout.dim())
    throw std::invalid_argument("unpack: layout/value size mismatch");
  ControlStructure out = s;
  for (int k = 0; k < d.dim(); ++k) {
    const DecisionLayout::Entry& e = d.layout.entries[k];
    double v = d.values(k);
    if (e.what == DecisionLayout::What::Node) {
      out.nodes[e.node] = v;
    } else {
      out.arcs[e.arc].p(e.slot) = v;
      if (e.twin_arc >= 0) out.arcs[e.twin_arc].p(e.twin_slot) = v;
    }
  }
  for (std::size_t i = 0; i + 1 < out.nodes.size(); ++i)
    if (out.nodes[i + 1] < out.nodes[i])
      throw std::invalid_argument("unpack: nodes out of order");
  return out;
}

std::string serialize_structure(const ControlStructure& s) {
  std::ostringstream os;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  os << "mse-structure 1\nT ";
  num(s.T);
  os << "\nbounds ";
  num(s.u_lower);
  os << ' ';
  num(s.u_upper);
  os << "\nnodes " << s.nodes.size();
  for (double t : s.nodes) {
    os << ' ';
    num(t);
  }
  os << "\narcs " << s.arcs.size() << '\n';
  for (const ArcProcedure& a : s.arcs) {
    os << "arc " << arc_kind_name(a.kind) << " links " << (a.link_value_left ? 1 : 0) << ' '
       << (a.link_slope_left ? 1 : 0) << " pins " << (a.pin_left ? 1 : 0) << ' '
       << (a.pin_right ? 1 : 0) << " bound ";
    num(a.boundary_value);
    os << " alpha ";
    num(a.alpha);
    os << " beta ";
    num(a.beta);
    os << " p " << a.p.size();
    for (Eigen::Index k = 0; k < a.p.size(); ++k) {
      os << ' ';
      num(a.p(k));
    }
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

ControlStructure deserialize_structure(const std::string& text, const ProblemDef& prob) {
  std::istringstream is(text);
  auto expect = [&](const char* tok) {
    std::string got;
    if (!(is >> got) || got != tok)
      throw std::invalid_argument(std::string("deserialize: expected '") + tok + "', got '" +
                                  got + "'");
  };
  expect("mse-structure");
  int ver = 0;
  is >> ver;
  if (ver != 1) throw std::invalid_argument("deserialize: unsupported version");

  ControlStructure s;
  expect("T");
  is >> s.T;
  expect("bounds");
  is >> s.u_lower >> s.u_upper;
  expect("nodes");
  std::size_t nn = 0;
  is >> nn;
  s.nodes.resize(nn);
  for (double& t : s.nodes) is >> t;
  expect("arcs");
  std::size_t na = 0;
  is >> na;
  for (std::size_t i = 0; i < na; ++i) {
    expect("arc");
    std::string kind;
    is >> kind;
    ArcProcedure a;
    a.kind = arc_kind_from_name(kind);
    int lv, ls, pl, pr;
    expect("links");
    is >> lv >> ls;
    expect("pins");
    is >> pl >> pr;
    a.link_value_left = lv != 0;
    a.link_slope_left = ls != 0;
    a.pin_left = pl != 0;
    a.pin_right = pr != 0;
    expect("bound");
    is >> a.boundary_value;
    expect("alpha");
    is >> a.alpha;
    expect("beta");
    is >> a.beta;
    expect("p");
    Eigen::Index np = 0;
    is >> np;
    a.p = Vec(np);
    for (Eigen::Index k = 0; k < np; ++k) is >> a.p(k);
    if (arc_is_feedback(a.kind)) {
      ArcProcedure fb = make_feedback_arc(a.kind, prob);
      a.feedback = fb.feedback;
      a.feedback_dx = fb.feedback_dx;
    }
    s.arcs.push_back(std::move(a));
  }
  expect("end");
  if (!is) throw std::invalid_argument("deserialize: truncated input");
  s.validate();
  return s;
}

}  // namespace mse
