#pragma once

// Random control structures for exercising reductions and serialization:
// duplicate nodes, mixed arc kinds, occasional links and pins.

#include "mse/problem.hpp"
#include "mse/structure.hpp"

#include <algorithm>
#include <random>
#include <vector>

inline mse::ControlStructure random_structure(const mse::ProblemDef& prob, std::mt19937_64& rng) {
  using namespace mse;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double lo = prob.lower(0), hi = prob.upper(0);

  int arcs = 1 + static_cast<int>(u01(rng) * 6);
  std::vector<double> inner;
  for (int i = 0; i + 1 < arcs; ++i) inner.push_back(prob.T * u01(rng));
  std::sort(inner.begin(), inner.end());
  for (std::size_t i = 1; i < inner.size(); ++i)
    if (u01(rng) < 0.3) inner[i] = inner[i - 1];

  ControlStructure s;
  s.T = prob.T;
  s.u_lower = lo;
  s.u_upper = hi;
  s.nodes.push_back(0.0);
  for (double t : inner) s.nodes.push_back(t);
  s.nodes.push_back(prob.T);

  auto coeff = [&] { return lo + (hi - lo) * u01(rng); };
  auto slope = [&] { return -0.5 + u01(rng); };

  for (int i = 0; i < arcs; ++i) {
    double r = u01(rng);
    ArcProcedure a;
    if (r < 0.25) {
      a = make_boundary_arc(u01(rng) < 0.5 ? ArcKind::BoundaryLower : ArcKind::BoundaryUpper,
                            prob);
    } else if (r < 0.35 && prob.u_int) {
      a = make_feedback_arc(ArcKind::SingularFeedback, prob);
    } else if (r < 0.5) {
      a.kind = ArcKind::CanonicalInterior;
      a.p = Vec::Zero(8);
      a.p << coeff(), slope(), coeff(), slope(), 0.05 * slope(), 0.05 * slope(), 0.05 * slope(),
          0.05 * slope();
      a.alpha = 0.4;
      a.beta = 1.1;
    } else {
      a.kind = u01(rng) < 0.3 ? ArcKind::TimePolynomial : ArcKind::HermiteInterior;
      a.p = Vec::Zero(4);
      a.p << coeff(), slope(), coeff(), slope();
    }
    if (!s.arcs.empty() && a.kind == ArcKind::HermiteInterior &&
        arc_is_explicit(s.arcs.back().kind) && u01(rng) < 0.3) {
      a.link_value_left = true;
      a.p(0) = s.arcs.back().p(2);
      if (u01(rng) < 0.5) {
        a.link_slope_left = true;
        a.p(1) = s.arcs.back().p(3);
      }
    }
    if (arc_is_explicit(a.kind) && u01(rng) < 0.1) a.pin_right = true;
    s.arcs.push_back(std::move(a));
  }
  s.validate();
  return s;
}
