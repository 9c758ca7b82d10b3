#include "mse/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace mse {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double effective_h(const SolverConfig& cfg, double T) {
  return cfg.h_max > 0.0 ? cfg.h_max : T / 2000.0;
}

bool same_layout(const DecisionLayout& a, const DecisionLayout& b) {
  if (a.dim() != b.dim()) return false;
  for (int k = 0; k < a.dim(); ++k) {
    const auto& x = a.entries[k];
    const auto& y = b.entries[k];
    if (x.what != y.what || x.node != y.node || x.arc != y.arc || x.slot != y.slot) return false;
  }
  return true;
}

struct CurvatureMemory {
  std::deque<std::pair<Vec, Vec>> pairs;  // (step, gradient change)
  int capacity = 10;

  void clear() { pairs.clear(); }

  void push(const Vec& sv, const Vec& yv) {
    double sy = sv.dot(yv);
    if (sy <= 1e-12 * sv.norm() * yv.norm()) return;
    pairs.emplace_back(sv, yv);
    while (static_cast<int>(pairs.size()) > capacity) pairs.pop_front();
  }

  // Two-loop recursion; identity scaling from the newest pair.
  Vec direction(const Vec& g) const {
    Vec q = -g;
    if (pairs.empty()) return q;
    std::vector<double> alpha(pairs.size());
    for (int i = static_cast<int>(pairs.size()) - 1; i >= 0; --i) {
      const Vec& sv = pairs[i].first;
      const Vec& yv = pairs[i].second;
      alpha[i] = sv.dot(q) / sv.dot(yv);
      q -= alpha[i] * yv;
    }
    const Vec& sl = pairs.back().first;
    const Vec& yl = pairs.back().second;
    q *= sl.dot(yl) / yl.dot(yl);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Vec& sv = pairs[i].first;
      const Vec& yv = pairs[i].second;
      double beta = yv.dot(q) / sv.dot(yv);
      q += (alpha[i] - beta) * sv;
    }
    return q;
  }
};

struct NodeSlot {
  int entry;
  int node;
};

std::vector<NodeSlot> node_slots(const DecisionVector& d) {
  std::vector<NodeSlot> out;
  for (int k = 0; k < d.dim(); ++k)
    if (d.layout.entries[k].what == DecisionLayout::What::Node)
      out.push_back({k, d.layout.entries[k].node});
  return out;
}

// Largest step along v keeping bounds and node ordering feasible.
double cap_step(const ControlStructure& s, const DecisionVector& d, const Vec& v) {
  double tmax = std::numeric_limits<double>::infinity();
  for (int k = 0; k < d.dim(); ++k) {
    const auto& e = d.layout.entries[k];
    if (e.what != DecisionLayout::What::Param) continue;
    double x = d.values(k);
    if (v(k) > 0 && std::isfinite(e.hi)) tmax = std::min(tmax, (e.hi - x) / v(k));
    if (v(k) < 0 && std::isfinite(e.lo)) tmax = std::min(tmax, (e.lo - x) / v(k));
  }
  std::vector<NodeSlot> ns = node_slots(d);
  for (std::size_t j = 0; j < ns.size(); ++j) {
    double x = d.values(ns[j].entry), vx = v(ns[j].entry);
    if (j == 0 && vx < 0) tmax = std::min(tmax, -x / vx);
    if (j + 1 == ns.size() && vx > 0) tmax = std::min(tmax, (s.T - x) / vx);
    if (j + 1 < ns.size()) {
      double gap = d.values(ns[j + 1].entry) - x;
      double dv = v(ns[j + 1].entry) - vx;
      if (dv < 0) tmax = std::min(tmax, gap / (-dv));
    }
  }
  return std::max(tmax, 0.0);
}

// Put trial values exactly onto any constraint they have essentially reached.
void snap_active(const ControlStructure& s, DecisionVector& d) {
  double ttol = 1e-12 * std::max(1.0, s.T);
  for (int k = 0; k < d.dim(); ++k) {
    const auto& e = d.layout.entries[k];
    if (e.what != DecisionLayout::What::Param) continue;
    double x = d.values(k);
    if (std::isfinite(e.hi) && std::abs(x - e.hi) <= 1e-12 * (1.0 + std::abs(e.hi)))
      d.values(k) = e.hi;
    if (std::isfinite(e.lo) && std::abs(x - e.lo) <= 1e-12 * (1.0 + std::abs(e.lo)))
      d.values(k) = e.lo;
  }
  std::vector<NodeSlot> ns = node_slots(d);
  for (std::size_t j = 0; j < ns.size(); ++j) {
    double& x = d.values(ns[j].entry);
    if (x <= ttol) x = 0.0;
    if (s.T - x <= ttol) x = s.T;
    if (j > 0) {
      double prev = d.values(ns[j - 1].entry);
      if (x - prev <= ttol) x = prev;
      if (x < prev) x = prev;
    }
  }
}

double sigma_of(const ProblemDef& prob, const ControlStructure& s, double h) {
  Mesh mesh = build_mesh(s, h);
  return forward(prob, s, mesh).sigma;
}

std::string reduction_kind_name(ReductionEvent::Kind k) {
  return k == ReductionEvent::Kind::ZeroLengthArc ? "reduce-zero" : "reduce-merge";
}

std::string generation_kind_name(GenerationCandidate::Kind k) {
  switch (k) {
    case GenerationCandidate::Kind::Saturation: return "saturation";
    case GenerationCandidate::Kind::Spike: return "spike";
    case GenerationCandidate::Kind::NodeInsertion: return "insertion";
    case GenerationCandidate::Kind::BasisExtension: return "extension";
  }
  return "generation";
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: not a boolean: " + v);
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void SolverConfig::validate() const {
  if (h_max < 0) throw std::invalid_argument("config: h_max must be >= 0");
  if (rel_eff_threshold < 0 || rel_eff_threshold > 1)
    throw std::invalid_argument("config: rel_eff_threshold must be in [0,1]");
  if (abs_eff_coeff < 0 || abs_eff_const < 0)
    throw std::invalid_argument("config: efficiency floor must be nonnegative");
  if (cadence_gamma <= 0 || cadence_gamma > 1)
    throw std::invalid_argument("config: cadence_gamma must be in (0,1]");
  if (eps_mp <= 0) throw std::invalid_argument("config: eps_mp must be positive");
  if (max_inner_iters <= 0) throw std::invalid_argument("config: max_inner_iters must be positive");
  if (ls_c1 <= 0 || ls_c1 >= 1) throw std::invalid_argument("config: ls_c1 must be in (0,1)");
  if (ls_backtrack <= 0 || ls_backtrack >= 1)
    throw std::invalid_argument("config: ls_backtrack must be in (0,1)");
  if (ls_max_backtracks <= 0)
    throw std::invalid_argument("config: ls_max_backtracks must be positive");
  if (rho0 <= 0 || rho_mult <= 1 || rho_max < rho0)
    throw std::invalid_argument("config: penalty schedule requires rho0 > 0, rho_mult > 1, "
                                "rho_max >= rho0");
  if (max_structural_changes <= 0)
    throw std::invalid_argument("config: max_structural_changes must be positive");
  if (lbfgs_memory < 0) throw std::invalid_argument("config: lbfgs_memory must be >= 0");
  if (max_spikes_per_arc <= 0)
    throw std::invalid_argument("config: max_spikes_per_arc must be positive");
}

MpResidual mp_residual(const ProblemDef& prob, const Trajectory& traj, const ControlStructure& s) {
  (void)prob;
  if (!traj.has_adjoint) throw std::invalid_argument("mp_residual: adjoint missing");
  MpResidual r;
  const Mesh& mesh = traj.mesh;
  double sup_h = 0.0;
  for (double h : traj.H) sup_h = std::max(sup_h, std::abs(h));
  r.scale = 1.0 + sup_h;

  for (int i = 0; i < s.arc_count(); ++i) {
    if (s.arc_zero_length(i)) continue;
    int k0 = mesh.node_sample[i], k1 = mesh.node_sample[i + 1];
    ArcKind kind = s.arcs[i].kind;
    for (int k = k0; k <= k1; ++k) {
      double gu = (k == k1) ? traj.gradUH_left[i + 1] : traj.gradUH[k];
      if (kind == ArcKind::BoundaryUpper) {
        r.boundary = std::max(r.boundary, std::max(0.0, -gu));
      } else if (kind == ArcKind::BoundaryLower) {
        r.boundary = std::max(r.boundary, std::max(0.0, gu));
      } else if (kind != ArcKind::ConstrainedFeedback) {
        r.interior = std::max(r.interior, std::abs(gu));
      }
    }
  }
  for (std::size_t j = 1; j + 1 < s.nodes.size(); ++j) {
    int k = mesh.node_sample[j];
    r.nodes = std::max(r.nodes, std::abs(traj.H[k] - traj.H_left[j]));
  }
  r.interior /= r.scale;
  r.boundary /= r.scale;
  r.nodes /= r.scale;
  r.total = std::max({r.interior, r.boundary, r.nodes});
  return r;
}

LinesearchResult linesearch(const ProblemDef& prob, const ControlStructure& s,
                            const DecisionVector& d, const Vec& direction, double sigma0,
                            const Vec& g, const SolverConfig& cfg) {
  LinesearchResult res;
  double slope = g.dot(direction);
  if (!(slope < 0)) return res;
  double tmax = cap_step(s, d, direction);
  if (!(tmax > 0)) return res;
  double h = effective_h(cfg, s.T);

  double t = std::min(1.0, tmax);
  bool at_cap = t >= tmax;
  for (int j = 0; j <= cfg.ls_max_backtracks; ++j) {
    DecisionVector trial = d;
    trial.values += t * direction;
    if (at_cap) snap_active(s, trial);
    double sig;
    bool ok = true;
    try {
      sig = sigma_of(prob, unpack(s, trial), h);
    } catch (const std::runtime_error&) {
      ok = false;
      sig = 0.0;
    }
    if (ok && sig <= sigma0 + cfg.ls_c1 * t * slope) {
      res.accepted = true;
      res.step = t;
      res.sigma = sig;
      res.d = std::move(trial);
      res.hit_constraint = at_cap;
      return res;
    }
    t *= cfg.ls_backtrack;
    at_cap = false;
  }
  return res;
}

SolveReport mse_solve(const ProblemDef& prob, const ControlStructure& initial,
                      const SolverConfig& cfg) {
  cfg.validate();
  SolveReport rep;
  ControlStructure s = initial;
  s.u_lower = prob.lower(0);
  s.u_upper = prob.upper(0);
  s.validate();
  double h = effective_h(cfg, prob.T);

  EvolutionConfig ecfg;
  ecfg.rel_eff_threshold = cfg.rel_eff_threshold;
  ecfg.abs_eff_coeff = cfg.abs_eff_coeff;
  ecfg.abs_eff_const = cfg.abs_eff_const;
  ecfg.max_spikes_per_arc = cfg.max_spikes_per_arc;

  Mesh mesh = build_mesh(s, h);
  Trajectory traj = forward(prob, s, mesh);
  backward(prob, s, traj);

  CurvatureMemory mem;
  mem.capacity = cfg.lbfgs_memory;
  bool have_prev = false;
  Vec prev_vals, prev_g;
  DecisionLayout prev_layout;

  int it = 0;
  int inner_since = 0;
  double pn_ref = -1.0;
  bool force_gen = false;
  std::string forced_exit = "stalled";
  const int global_cap = cfg.max_inner_iters * 40;

  rep.sigma_history.push_back({0, "step", traj.sigma, pack(s).dim()});

  auto record_event = [&](const std::string& kind, double tau, int dim_before, int dim_after,
                          double sig_before, double sig_after) {
    rep.events.push_back({it, kind, tau, dim_before, dim_after, sig_before, sig_after});
    rep.sigma_history.push_back({it, "event", sig_after, dim_after});
    ++rep.structural_changes;
  };

  // Control-preserving swap to a new structure. Returns the outgoing
  // structure's cost re-measured on the refined grid, so the recorded
  // before/after pair shares one quadrature and differs only by roundoff.
  auto adopt = [&](const ControlStructure& s2) {
    Mesh m2 = refine_mesh(traj.mesh, s2);
    double sig_old = m2.t.size() == traj.mesh.t.size()
                         ? traj.sigma
                         : forward(prob, s, refine_mesh(m2, s)).sigma;
    Trajectory t2 = forward(prob, s2, m2);
    backward(prob, s2, t2);
    s = s2;
    traj = std::move(t2);
    mem.clear();
    have_prev = false;
    inner_since = 0;
    pn_ref = -1.0;
    return sig_old;
  };

  while (true) {
    if (cfg.enable_saturation) {
      while (true) {
        auto sats = saturation_check(prob, traj, s);
        if (sats.empty()) break;
        if (rep.structural_changes >= cfg.max_structural_changes) {
          rep.termination = "budget-exhausted";
          goto done;
        }
        int dim_before = pack(s).dim();
        ControlStructure s2 = apply_generation(prob, s, sats[0]);
        double sig_before = adopt(s2);
        record_event("saturation", sats[0].tau, dim_before, pack(s).dim(), sig_before,
                     traj.sigma);
      }
    }

    DecisionVector d = pack(s);
    GradientReport grad = assemble_gradient(prob, traj, s, d);
    if (have_prev && same_layout(prev_layout, d.layout))
      mem.push(d.values - prev_vals, grad.g - prev_g);
    prev_vals = d.values;
    prev_g = grad.g;
    prev_layout = d.layout;
    have_prev = true;

    {
      ReduceResult red = reduce(prob, s, d, grad);
      if (!red.events.empty()) {
        int dim_before = d.dim();
        std::vector<std::pair<std::string, double>> rows;
        for (const auto& ev : red.events) {
          int n = std::min(ev.arc, static_cast<int>(s.nodes.size()) - 1);
          rows.emplace_back(reduction_kind_name(ev.kind), s.nodes[std::max(n, 0)]);
        }
        double sig_before = adopt(red.structure);
        int dim_after = pack(s).dim();
        for (const auto& row : rows)
          record_event(row.first, row.second, dim_before, dim_after, sig_before, traj.sigma);
        continue;
      }
    }

    Vec pg = projected_antigradient(grad.g, s, d);
    double pn = pg.norm();
    if (pn_ref < 0) pn_ref = pn;

    MpResidual mp = mp_residual(prob, traj, s);
    if (mp.total < cfg.eps_mp) {
      rep.termination = "optimal";
      break;
    }

    if (force_gen || pn < cfg.cadence_gamma * pn_ref) {
      std::vector<GenerationCandidate> cands;
      if (cfg.enable_spikes) {
        auto sp = spike_candidates(prob, traj, s, grad, d, ecfg);
        cands.insert(cands.end(), sp.begin(), sp.end());
      }
      if (cfg.enable_insertion) {
        auto ni = node_insertion_candidates(prob, traj, s, grad, d, ecfg);
        cands.insert(cands.end(), ni.begin(), ni.end());
      }
      if (cfg.extend_last_arc && prob.has_canonical_modes &&
          s.arcs.back().kind == ArcKind::HermiteInterior && !s.arc_zero_length(s.arc_count() - 1))
        cands.push_back(make_basis_extension(prob, traj, s, grad, d, s.arc_count() - 1));

      const GenerationCandidate* best = nullptr;
      for (const auto& c : cands) {
        if (c.rel_efficiency < cfg.rel_eff_threshold) continue;
        if (c.efficiency <= cfg.abs_eff_coeff * pn * pn + cfg.abs_eff_const) continue;
        if (!best || c.efficiency > best->efficiency ||
            (c.efficiency == best->efficiency && c.tau < best->tau))
          best = &c;
      }
      if (best && rep.structural_changes < cfg.max_structural_changes) {
        int dim_before = d.dim();
        std::string kind = generation_kind_name(best->kind);
        double tau = best->tau;
        ControlStructure s2 = apply_generation(prob, s, *best);
        double sig_before = adopt(s2);
        record_event(kind, tau, dim_before, pack(s).dim(), sig_before, traj.sigma);
        force_gen = false;
        continue;
      }
      if (force_gen) {
        rep.termination = forced_exit;
        break;
      }
      pn_ref = pn;
    }

    if (pn <= 1e-10 * (1.0 + grad.norm)) {
      force_gen = true;
      forced_exit = "stationary";
      continue;
    }
    if (it >= global_cap || inner_since >= cfg.max_inner_iters) {
      force_gen = true;
      forced_exit = "budget-exhausted";
      continue;
    }

    Vec dir = mem.direction(grad.g);
    dir = projected_antigradient(-dir, s, d);
    bool steepest = false;
    if (!(grad.g.dot(dir) < 0)) {
      dir = pg;
      steepest = true;
    }
    LinesearchResult ls = linesearch(prob, s, d, dir, traj.sigma, grad.g, cfg);
    if (!ls.accepted && !steepest) ls = linesearch(prob, s, d, pg, traj.sigma, grad.g, cfg);
    if (!ls.accepted) {
      force_gen = true;
      forced_exit = "stalled";
      continue;
    }

    s = unpack(s, ls.d);
    mesh = build_mesh(s, h);
    traj = forward(prob, s, mesh);
    backward(prob, s, traj);
    ++it;
    ++inner_since;
    rep.sigma_history.push_back({it, "step", traj.sigma, d.dim()});
  }

done:
  rep.iterations = it;
  Mesh final_mesh = build_mesh(s, h);
  rep.final_trajectory = forward(prob, s, final_mesh);
  backward(prob, s, rep.final_trajectory);
  rep.sigma = rep.final_trajectory.sigma;
  MpResidual mp = mp_residual(prob, rep.final_trajectory, s);
  rep.mp_residual = mp.total;
  rep.mp_interior = mp.interior;
  rep.mp_boundary = mp.boundary;
  rep.mp_nodes = mp.nodes;
  rep.structure = s;
  rep.decision = pack(s);
  return rep;
}

SolveReport penalty_loop(const ProblemDef& prob, const ControlStructure& initial,
                         const SolverConfig& cfg) {
  cfg.validate();
  if (!prob.penalty) return mse_solve(prob, initial, cfg);

  SolveReport agg;
  ControlStructure s = initial;
  double rho = cfg.rho0;
  int it_offset = 0;

  while (true) {
    ProblemDef staged = rebind_rho(prob, rho);
    SolveReport rep = mse_solve(staged, s, cfg);

    PenaltyStage stage;
    stage.rho = rho;
    stage.sigma = rep.sigma;
    stage.mp = rep.mp_residual;
    double worst = 0.0;
    for (const Vec& x : rep.final_trajectory.x)
      worst = std::max(worst, x(prob.penalty->constrained_state) - prob.penalty->bound);
    stage.violation = std::max(0.0, worst);
    agg.stages.push_back(stage);

    if (!rep.sigma_history.empty())
      agg.sigma_history.push_back({it_offset, "stage", rep.sigma_history.front().sigma,
                                   rep.sigma_history.front().dim});
    for (const auto& r : rep.sigma_history)
      agg.sigma_history.push_back({r.iteration + it_offset, r.kind, r.sigma, r.dim});
    for (const auto& e : rep.events) {
      EventRecord e2 = e;
      e2.iteration += it_offset;
      agg.events.push_back(e2);
    }
    it_offset += rep.iterations + 1;
    agg.iterations += rep.iterations;
    agg.structural_changes += rep.structural_changes;

    agg.structure = rep.structure;
    agg.decision = rep.decision;
    agg.sigma = rep.sigma;
    agg.mp_residual = rep.mp_residual;
    agg.mp_interior = rep.mp_interior;
    agg.mp_boundary = rep.mp_boundary;
    agg.mp_nodes = rep.mp_nodes;
    agg.termination = rep.termination;
    agg.final_trajectory = std::move(rep.final_trajectory);
    s = agg.structure;

    if (rho >= cfg.rho_max) break;
    rho = std::min(rho * cfg.rho_mult, cfg.rho_max);
  }
  return agg;
}

ControlStructure make_initial_structure(const ProblemDef& prob, BenchmarkId id) {
  ControlStructure s;
  s.T = prob.T;
  s.u_lower = prob.lower(0);
  s.u_upper = prob.upper(0);
  if (id == BenchmarkId::Fermentation) {
    s.nodes = {0.0, 3.0, prob.T};
    s.arcs.push_back(make_boundary_arc(ArcKind::BoundaryLower, prob));
    s.arcs.push_back(make_boundary_arc(ArcKind::BoundaryUpper, prob));
  } else {
    s.nodes = {0.0, prob.T};
    ArcProcedure a;
    a.kind = id == BenchmarkId::PendulumCart ? ArcKind::TimePolynomial : ArcKind::HermiteInterior;
    a.p = Vec::Zero(4);
    s.arcs.push_back(std::move(a));
  }
  s.validate();
  return s;
}

SolverConfig parse_config(const std::string& text) {
  SolverConfig cfg;
  std::map<std::string, std::string> extras;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config: expected key = value: " + t);
    apply_config_override(cfg, extras, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

void apply_config_override(SolverConfig& cfg, std::map<std::string, std::string>& extras,
                           const std::string& key, const std::string& value) {
  try {
    if (key == "h_max") cfg.h_max = std::stod(value);
    else if (key == "rel_eff_threshold") cfg.rel_eff_threshold = std::stod(value);
    else if (key == "abs_eff_coeff") cfg.abs_eff_coeff = std::stod(value);
    else if (key == "abs_eff_const") cfg.abs_eff_const = std::stod(value);
    else if (key == "cadence_gamma") cfg.cadence_gamma = std::stod(value);
    else if (key == "eps_mp") cfg.eps_mp = std::stod(value);
    else if (key == "max_inner_iters") cfg.max_inner_iters = std::stoi(value);
    else if (key == "ls_c1") cfg.ls_c1 = std::stod(value);
    else if (key == "ls_backtrack") cfg.ls_backtrack = std::stod(value);
    else if (key == "ls_max_backtracks") cfg.ls_max_backtracks = std::stoi(value);
    else if (key == "rho0") cfg.rho0 = std::stod(value);
    else if (key == "rho_mult") cfg.rho_mult = std::stod(value);
    else if (key == "rho_max") cfg.rho_max = std::stod(value);
    else if (key == "max_structural_changes") cfg.max_structural_changes = std::stoi(value);
    else if (key == "lbfgs_memory") cfg.lbfgs_memory = std::stoi(value);
    else if (key == "max_spikes_per_arc") cfg.max_spikes_per_arc = std::stoi(value);
    else if (key == "enable_saturation") cfg.enable_saturation = parse_bool(value);
    else if (key == "enable_spikes") cfg.enable_spikes = parse_bool(value);
    else if (key == "enable_insertion") cfg.enable_insertion = parse_bool(value);
    else if (key == "extend_last_arc") cfg.extend_last_arc = parse_bool(value);
    else extras[key] = value;
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("config: bad value for " + key + ": " + value);
  } catch (const std::out_of_range&) {
    throw std::invalid_argument("config: value out of range for " + key + ": " + value);
  }
}

std::string sigma_csv(const SolveReport& rep) {
  std::string out = "iteration,kind,sigma,dim\n";
  for (const auto& r : rep.sigma_history) {
    out += std::to_string(r.iteration);
    out += ',';
    out += r.kind;
    out += ',';
    out += g17(r.sigma);
    out += ',';
    out += std::to_string(r.dim);
    out += '\n';
  }
  return out;
}

std::string events_csv(const SolveReport& rep) {
  std::string out = "iteration,kind,tau,dim_before,dim_after,sigma_before,sigma_after\n";
  for (const auto& e : rep.events) {
    out += std::to_string(e.iteration);
    out += ',';
    out += e.kind;
    out += ',';
    out += g17(e.tau);
    out += ',';
    out += std::to_string(e.dim_before);
    out += ',';
    out += std::to_string(e.dim_after);
    out += ',';
    out += g17(e.sigma_before);
    out += ',';
    out += g17(e.sigma_after);
    out += '\n';
  }
  return out;
}

std::string report_text(const ProblemDef& prob, const SolveReport& rep) {
  std::ostringstream out;
  out << "problem: " << prob.name << "\n";
  out << "termination: " << rep.termination << "\n";
  out << "sigma: " << g17(rep.sigma) << "\n";
  out << "mp_residual: " << g17(rep.mp_residual) << " (interior " << g17(rep.mp_interior)
      << ", boundary " << g17(rep.mp_boundary) << ", nodes " << g17(rep.mp_nodes) << ")\n";
  out << "iterations: " << rep.iterations << "\n";
  out << "structural_changes: " << rep.structural_changes << "\n";
  out << "decision_dim: " << rep.decision.dim() << "\n";
  out << "arcs: " << rep.structure.arc_count() << "\n";
  for (int i = 0; i < rep.structure.arc_count(); ++i) {
    char span[96];
    std::snprintf(span, sizeof span, "  [%d] %s on [%.6g, %.6g]", i,
                  arc_kind_name(rep.structure.arcs[i].kind), rep.structure.nodes[i],
                  rep.structure.nodes[i + 1]);
    out << span << "\n";
  }
  if (!rep.stages.empty()) {
    out << "penalty stages:\n";
    for (const auto& st : rep.stages) {
      char line[160];
      std::snprintf(line, sizeof line, "  rho=%.6g violation=%.6g sigma=%.12g mp=%.6g", st.rho,
                    st.violation, st.sigma, st.mp);
      out << line << "\n";
    }
  }
  return out.str();
}

}  // namespace mse
