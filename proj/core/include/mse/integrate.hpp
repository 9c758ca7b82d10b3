#pragma once

#include "mse/problem.hpp"
#include "mse/structure.hpp"

#include <string>
#include <vector>

namespace mse {

// Sample grid: strictly increasing times covering [0, T], uniform within each
// inter-node interval, with every division node on the grid. Zero-length arcs
// share a sample and contribute no steps.
struct Mesh {
  std::vector<double> t;
  std::vector<int> node_sample;  // per structure node
  std::vector<int> arc_steps;    // per arc
  std::vector<int> sample_node;  // first structure node at this sample, -1 otherwise
  double h_max = 0.0;

  int samples() const { return static_cast<int>(t.size()); }
};

Mesh build_mesh(const ControlStructure& s, double h_max);
Mesh build_mesh_with_counts(const ControlStructure& s, const std::vector<int>& counts);

// Refinement of an existing mesh for a structure that gained nodes: old
// samples are kept, new node times split the steps containing them.
Mesh refine_mesh(const Mesh& mesh, const ControlStructure& s_new);

// Everything sampled on the mesh. Arrays are aligned with mesh.t; the u/H/
// gradUH samples take the right-sided value at nodes, with left-sided values
// stored per node.
struct Trajectory {
  Mesh mesh;
  std::vector<Vec> x;
  std::vector<Vec> f;
  std::vector<double> u;
  std::vector<Vec> psi;
  std::vector<Vec> psidot;
  std::vector<double> gradUH;
  std::vector<double> H;
  std::vector<double> sw;  // empty when the problem defines none
  std::vector<double> u_left, gradUH_left, H_left;  // per structure node
  std::vector<Vec> f_left, psidot_left;             // per structure node
  double sigma = 0.0;
  bool has_adjoint = false;
};

Trajectory forward(const ProblemDef& prob, const ControlStructure& s, const Mesh& mesh);
void backward(const ProblemDef& prob, const ControlStructure& s, Trajectory& traj);

// State between stored samples, cubic in t using the stored slopes.
Vec interp_state(const Trajectory& traj, int step, double t);
Vec interp_adjoint(const Trajectory& traj, int step, double t);

std::string trajectory_csv(const ProblemDef& prob, const Trajectory& traj);

}  // namespace mse
