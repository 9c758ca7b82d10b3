#pragma once

#include "mse/evolution.hpp"
#include "mse/gradient.hpp"
#include "mse/integrate.hpp"
#include "mse/problem.hpp"
#include "mse/structure.hpp"

#include <map>
#include <string>
#include <vector>

namespace mse {

struct SolverConfig {
  double h_max = 0.0;  // 0 means T/2000
  double rel_eff_threshold = 0.1;
  double abs_eff_coeff = 1e-8;
  double abs_eff_const = 1e-16;
  double cadence_gamma = 0.5;
  double eps_mp = 1e-3;
  int max_inner_iters = 500;
  double ls_c1 = 1e-4;
  double ls_backtrack = 0.5;
  int ls_max_backtracks = 40;
  double rho0 = 10.0;
  double rho_mult = 10.0;
  double rho_max = 1e7;
  int max_structural_changes = 200;
  int lbfgs_memory = 10;
  int max_spikes_per_arc = 2;
  bool enable_saturation = true;
  bool enable_spikes = true;
  bool enable_insertion = false;
  bool extend_last_arc = false;

  void validate() const;
};

struct EventRecord {
  int iteration = 0;
  std::string kind;
  double tau = 0.0;
  int dim_before = 0;
  int dim_after = 0;
  double sigma_before = 0.0;  // outgoing structure on the post-event grid
  double sigma_after = 0.0;   // incoming structure on the same grid
};

struct SigmaRecord {
  int iteration = 0;
  std::string kind;  // "step" | "event" | "stage"
  double sigma = 0.0;
  int dim = 0;
};

struct PenaltyStage {
  double rho = 0.0;
  double violation = 0.0;
  double sigma = 0.0;
  double mp = 0.0;
};

struct SolveReport {
  ControlStructure structure;
  DecisionVector decision;
  std::vector<SigmaRecord> sigma_history;
  std::vector<EventRecord> events;
  std::vector<PenaltyStage> stages;
  double sigma = 0.0;
  double mp_residual = 0.0;
  double mp_interior = 0.0;
  double mp_boundary = 0.0;
  double mp_nodes = 0.0;
  int iterations = 0;
  int structural_changes = 0;
  std::string termination;
  Trajectory final_trajectory;
};

struct MpResidual {
  double total = 0.0;
  double interior = 0.0;
  double boundary = 0.0;
  double nodes = 0.0;
  double scale = 1.0;
};

MpResidual mp_residual(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s);

struct LinesearchResult {
  bool accepted = false;
  double step = 0.0;
  double sigma = 0.0;
  DecisionVector d;
  bool hit_constraint = false;
};

// Backtracking with sufficient decrease; the trial step is capped at the first
// node-ordering or parameter-bound activation, which is snapped exactly.
LinesearchResult linesearch(const ProblemDef& prob, const ControlStructure& s,
                            const DecisionVector& d, const Vec& direction, double sigma0,
                            const Vec& g, const SolverConfig& cfg);

SolveReport mse_solve(const ProblemDef& prob, const ControlStructure& initial,
                      const SolverConfig& cfg);

SolveReport penalty_loop(const ProblemDef& prob, const ControlStructure& initial,
                         const SolverConfig& cfg);

ControlStructure make_initial_structure(const ProblemDef& prob, BenchmarkId id);

SolverConfig parse_config(const std::string& text);
void apply_config_override(SolverConfig& cfg, std::map<std::string, std::string>& extras,
                           const std::string& key, const std::string& value);

std::string sigma_csv(const SolveReport& rep);
std::string events_csv(const SolveReport& rep);
std::string report_text(const ProblemDef& prob, const SolveReport& rep);

}  // namespace mse
