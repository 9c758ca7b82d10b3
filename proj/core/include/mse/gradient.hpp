#pragma once

#include "mse/integrate.hpp"
#include "mse/problem.hpp"
#include "mse/structure.hpp"

#include <vector>

namespace mse {

struct GradientReport {
  Vec g;                        // aligned with the decision layout
  std::vector<double> delta_H;  // per node, hamiltonian jump
  double norm = 0.0;
};

// Derivative of the terminal cost with respect to coefficient slot k of arc i:
// minus the integral of gradUH times the slot's shape function, taken over the
// arc and over the neighbour interval the slot is linked into.
double grad_params(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s,
                   int arc, int slot);

// Restriction to one side only (the arc's own interval).
double grad_params_own(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s,
                       int arc, int slot);

// Node derivative at a junction where the control is continuous and the
// adjacent explicit arcs are cubic: one-sided endpoint value/slope
// sensitivities weighted by the one-sided control derivatives.
double grad_node_interior_right(const ProblemDef& prob, const Trajectory& traj,
                                const ControlStructure& s, int node);

// Node derivative when the neighbouring procedures leave the node as the only
// local decision variable: the hamiltonian jump.
double grad_node_jump(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s,
                      int node);

// General node derivative: hamiltonian jump plus the integral of gradUH times
// the control's sensitivity to the node over both adjacent intervals.
double grad_node_mixed(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s,
                       int node);

double hamiltonian_jump(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s,
                        int node);

GradientReport assemble_gradient(const ProblemDef& prob, const Trajectory& traj,
                                 const ControlStructure& s, const DecisionVector& d);

}  // namespace mse
