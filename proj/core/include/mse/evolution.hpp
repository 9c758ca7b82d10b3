#pragma once

#include "mse/gradient.hpp"
#include "mse/integrate.hpp"
#include "mse/problem.hpp"
#include "mse/structure.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mse {

struct GenerationCandidate {
  enum class Kind { Saturation, Spike, NodeInsertion, BasisExtension };
  Kind kind = Kind::Spike;
  double tau = 0.0;
  int arc = -1;
  ArcKind spike_kind = ArcKind::BoundaryUpper;
  double spike_value = 0.0;  // seeded control for explicit spike procedures
  // Saturation splits carry the full list of crossing times for their arc.
  std::vector<double> split_points;
  double efficiency = 0.0;
  double rel_efficiency = 0.0;
  double secondary = 0.0;  // stationarity-deviation tiebreak for insertions
  std::uint64_t structure_version = 0;
};

struct ReductionEvent {
  enum class Kind { ZeroLengthArc, MergeAdjacent };
  Kind kind = Kind::ZeroLengthArc;
  int arc = -1;
  int removed_entries = 0;
};

// Orthogonal projection of -g onto the cone of feasible decision directions:
// per-coordinate clipping at active parameter bounds, order-preserving
// regression within groups of coincident nodes (frozen endpoints pin their
// group members' signs).
Vec projected_antigradient(const Vec& g, const ControlStructure& s, const DecisionVector& d);

// Splits every explicit interior arc whose expansion leaves the control box,
// at the exact crossing times, so each arc is purely boundary or purely
// interior afterwards.
std::vector<GenerationCandidate> saturation_check(const ProblemDef& prob, const Trajectory& traj,
                                                  const ControlStructure& s);

struct EvolutionConfig {
  double rel_eff_threshold = 0.1;
  double abs_eff_coeff = 1e-8;   // floor = coeff * |g|^2 + constant
  double abs_eff_const = 1e-16;
  int max_spikes_per_arc = 2;
  double constraint_activity_tol = 1e-2;
};

std::vector<GenerationCandidate> spike_candidates(const ProblemDef& prob, const Trajectory& traj,
                                                  const ControlStructure& s,
                                                  const GradientReport& grad,
                                                  const DecisionVector& d,
                                                  const EvolutionConfig& cfg);

std::vector<GenerationCandidate> node_insertion_candidates(const ProblemDef& prob,
                                                           const Trajectory& traj,
                                                           const ControlStructure& s,
                                                           const GradientReport& grad,
                                                           const DecisionVector& d,
                                                           const EvolutionConfig& cfg);

GenerationCandidate make_basis_extension(const ProblemDef& prob, const Trajectory& traj,
                                         const ControlStructure& s, const GradientReport& grad,
                                         const DecisionVector& d, int arc);

ControlStructure apply_generation(const ProblemDef& prob, const ControlStructure& s,
                                  const GenerationCandidate& cand);

struct ReduceResult {
  ControlStructure structure;
  DecisionVector decision;
  std::vector<ReductionEvent> events;
};

ReduceResult reduce(const ProblemDef& prob, const ControlStructure& s, const DecisionVector& d,
                    const GradientReport& grad);

// Largest pointwise difference of the realized controls of two structures on
// a grid `factor` times denser than the trajectory mesh. Feedback arcs are
// evaluated on the stored states.
double control_distance(const ProblemDef& prob, const ControlStructure& s_old,
                        const ControlStructure& s_new, const Trajectory& traj, int factor = 10);

}  // namespace mse
