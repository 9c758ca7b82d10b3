#pragma once

#include "mse/problem.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace mse {

enum class ArcKind {
  BoundaryLower,
  BoundaryUpper,
  HermiteInterior,
  CanonicalInterior,
  SingularFeedback,
  ConstrainedFeedback,
  TimePolynomial,
};

const char* arc_kind_name(ArcKind k);
ArcKind arc_kind_from_name(const std::string& s);

bool arc_is_explicit(ArcKind k);   // has a time-polynomial/mode expansion
bool arc_is_boundary(ArcKind k);
bool arc_is_feedback(ArcKind k);

// One arc of a control structure. Explicit kinds carry endpoint-interpolating
// coefficients p; boundary kinds carry the bound value; feedback kinds carry
// the state-feedback law and its jacobian.
struct ArcProcedure {
  ArcKind kind = ArcKind::HermiteInterior;
  Vec p;  // 4 coefficients (cubic), 8 for CanonicalInterior

  // p[0]/p[1] identified with the left neighbour's p[2]/p[3].
  bool link_value_left = false;
  bool link_slope_left = false;

  // Endpoint values frozen at a constant (junctions with boundary arcs).
  bool pin_left = false;
  bool pin_right = false;

  double boundary_value = 0.0;
  double alpha = 0.0, beta = 0.0;

  std::function<double(const Vec&)> feedback;
  std::function<Vec(const Vec&)> feedback_dx;

  int basis_size() const;
};

ArcProcedure make_boundary_arc(ArcKind kind, const ProblemDef& prob);
ArcProcedure make_feedback_arc(ArcKind kind, const ProblemDef& prob);

// Division nodes plus one procedure per inter-node interval.
struct ControlStructure {
  std::vector<double> nodes;  // size N+1, nodes.front() = 0, nodes.back() = T
  std::vector<ArcProcedure> arcs;
  double T = 0.0;
  double u_lower = -std::numeric_limits<double>::infinity();
  double u_upper = std::numeric_limits<double>::infinity();
  std::uint64_t version = 0;

  int arc_count() const { return static_cast<int>(arcs.size()); }
  double arc_length(int i) const { return nodes[i + 1] - nodes[i]; }
  bool arc_zero_length(int i) const;
  // Arc containing t; the right arc at an interior node, skipping
  // zero-length arcs.
  int arc_at(double t) const;

  void validate() const;  // throws on ordering/shape violations
};

double zero_length_tolerance(const ControlStructure& s);

// Basis values for one explicit arc at time t, with time derivatives and
// derivatives with respect to the interval endpoints.
struct BasisEval {
  int size = 4;
  std::array<double, 8> w{}, wt{}, wtt{}, wa{}, wb{};
};

// Cubic endpoint-interpolating shape functions on [a, b]:
// value/slope at a weight w1/w2, value/slope at b weight w3/w4.
std::array<double, 4> hermite_basis(double t, double a, double b);

// Exponential-trigonometric modes at s = t - a.
std::array<double, 4> canonical_modes(double t, double a, double alpha, double beta);

// Cubic basis extended with four modes corrected to vanish at both endpoints.
std::array<double, 8> extended_basis(double t, double a, double b, double alpha, double beta);

BasisEval basis_eval(const ArcProcedure& arc, double t, double a, double b);

enum class Side { Left, Right };

// Control value at time t. Feedback arcs need the state; explicit arcs are
// evaluated from their coefficients without clipping.
double eval_control(const ControlStructure& s, double t, const Vec* x = nullptr,
                    Side side = Side::Right);

// Value the integrator realizes: explicit arcs clipped to the control box,
// feedback arcs passed through.
double eval_control_clipped(const ControlStructure& s, double t, double lower, double upper,
                            const Vec* x = nullptr, Side side = Side::Right);

// Control law of arc i evaluated at t (clamped into the arc's span), clipped
// to the control box for explicit kinds; feedback kinds use the given state.
double arc_control_clipped(const ControlStructure& s, int arc, double t, const Vec& x);

// Value of arc i's control at its own endpoint (p-interpolation for explicit
// kinds, the one-sided convention for zero-length arcs), clipped.
double arc_endpoint_value(const ControlStructure& s, int arc, bool left_end, const Vec& x);

// Control value and its first two one-sided time derivatives on arc i.
struct ArcPointEval {
  double u = 0, du = 0, ddu = 0;
};
ArcPointEval eval_arc_derivatives(const ControlStructure& s, int arc, double t);

// Re-express an explicit arc on a sub-interval of its current span without
// changing the control it evaluates to.
ArcProcedure restrict_arc(const ArcProcedure& arc, double a_old, double b_old,
                          double a_new, double b_new);

// Flat decision vector over the structure's free entries.
struct DecisionLayout {
  enum class What { Node, Param };
  struct Entry {
    What what = What::Param;
    int node = -1;       // node index for What::Node
    int arc = -1;        // owning arc for What::Param
    int slot = -1;
    int twin_arc = -1;   // linked slot fed by the same value, if any
    int twin_slot = -1;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
  };
  std::vector<Entry> entries;
  int dim() const { return static_cast<int>(entries.size()); }
};

struct DecisionVector {
  Vec values;
  DecisionLayout layout;
  int dim() const { return layout.dim(); }
};

DecisionVector pack(const ControlStructure& s);
ControlStructure unpack(const ControlStructure& s, const DecisionVector& d);

std::string serialize_structure(const ControlStructure& s);
ControlStructure deserialize_structure(const std::string& text, const ProblemDef& prob);

}  // namespace mse
