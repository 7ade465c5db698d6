#pragma once

// The two inner problems of the alternating algorithm: the TDMA scheduling
// LP with rounding and repair, and the SCA inner program with slack
// variables, tangent rate bound and server-energy linearization.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "urismec/channel.hpp"
#include "urismec/energy.hpp"
#include "urismec/scenario.hpp"
#include "urismec/solver.hpp"

namespace urismec {

// TDMA selection weights, fractional in [0,1] during the LP and binary
// after rounding. Column n sums to one.
struct Schedule {
  Eigen::MatrixXd c;  // K x N

  bool is_binary(double tol = 1e-9) const {
    for (int k = 0; k < c.rows(); ++k)
      for (int n = 0; n < c.cols(); ++n)
        if (std::min(std::abs(c(k, n)), std::abs(1.0 - c(k, n))) > tol) return false;
    return true;
  }

  // 0-based user index served in 1-based slot n (binary schedules).
  int served(int n) const {
    int best = 0;
    c.col(n - 1).maxCoeff(&best);
    return best;
  }
};

struct SlackState {
  Eigen::MatrixXd y;   // K x N, squared G-U distances, m²
  Eigen::VectorXd p;   // N, squared U-S distances, m²
  Eigen::VectorXd u;   // K, server-energy slack, bits·Hz²
  Eigen::VectorXd d_r; // K, average-rate slack, bits/s
};

// Which link geometry feeds the rate law: the cascaded two-hop RIS product
// channel, or the direct single-hop UAV link used by the UAV-server scheme.
struct LinkLaw {
  bool two_hop = true;
  double xi = 0.0;      // SNR numerator
  double alpha = 2.0;   // path-loss exponent
};

inline LinkLaw cascaded_law(const ScenarioConfig& cfg, int k) {
  return {true, cfg.xi(k), cfg.alpha_L};
}

inline LinkLaw single_hop_law(const ScenarioConfig& cfg, int k) {
  return {false, cfg.P_k[k] * cfg.beta0 / cfg.sigma2, cfg.alpha_L};
}

// Spectral efficiency γ₀ as a function of the squared hop distances,
// bits/s/Hz. p is ignored for single-hop laws.
inline double gamma0(const LinkLaw& law, double p, double y) {
  const double a2 = law.alpha / 2.0;
  const double denom = law.two_hop ? std::pow(p, a2) * std::pow(y, a2) : std::pow(y, a2);
  return std::log2(1.0 + law.xi / denom);
}

// Rate in bits/s for user k at position q under a link law.
inline double law_rate(const LinkLaw& law, const ScenarioConfig& cfg,
                       const Eigen::Vector2d& q, int k) {
  const double y = (q - cfg.w_k[k]).squaredNorm() + cfg.H * cfg.H;
  const double p = (q - cfg.w_s).squaredNorm() + cfg.H * cfg.H;
  return cfg.B * gamma0(law, p, y);
}

// First-order expansion of γ₀ at (p_t, y_t): γ̂ = C + A(p−p_t) + B(y−y_t).
// A and B are the exact partial derivatives, so γ̂ is tangent at the
// expansion point and a global under-estimator by convexity of γ₀.
struct TaylorEntry {
  double A = 0.0;  // ∂γ₀/∂p, per m²
  double B = 0.0;  // ∂γ₀/∂y, per m²
  double C = 0.0;  // γ₀ at the expansion point, bits/s/Hz
  double p_t = 0.0;
  double y_t = 0.0;
};

inline TaylorEntry taylor_entry(const LinkLaw& law, double p_t, double y_t) {
  const double a2 = law.alpha / 2.0;
  const double log2e = 1.0 / std::log(2.0);
  TaylorEntry e;
  e.p_t = p_t;
  e.y_t = y_t;
  if (law.two_hop) {
    e.C = std::log2(1.0 + law.xi / (std::pow(p_t, a2) * std::pow(y_t, a2)));
    e.A = -log2e * a2 * law.xi /
          (std::pow(p_t, a2 + 1.0) * std::pow(y_t, a2) + law.xi * p_t);
    e.B = -log2e * a2 * law.xi /
          (std::pow(p_t, a2) * std::pow(y_t, a2 + 1.0) + law.xi * y_t);
  } else {
    e.C = std::log2(1.0 + law.xi / std::pow(y_t, a2));
    e.A = 0.0;
    e.B = -log2e * a2 * law.xi / (std::pow(y_t, a2 + 1.0) + law.xi * y_t);
  }
  return e;
}

// Spec-facing wrapper for the cascaded channel of user k.
inline TaylorEntry taylor_rate_coeffs(int k, double p_t, double y_t,
                                      const ScenarioConfig& cfg) {
  return taylor_entry(cascaded_law(cfg, k), p_t, y_t);
}

inline double rate_lower_bound(double p, double y, const TaylorEntry& e) {
  return e.C + e.A * (p - e.p_t) + e.B * (y - e.y_t);
}

struct LatencyCheck {
  bool satisfied = true;
  double margin = 0.0;  // seconds; negative when violated
};

// Constraint (latency): max(local time, offload time) <= T_k.
inline LatencyCheck latency_satisfied(int k, const Allocation& alloc, double avg_rate,
                                      const ScenarioConfig& cfg) {
  const double local = alloc.l_l[k] * cfg.chi_k[k] / cfg.f_l_k[k];
  double offload = 0.0;
  if (alloc.l_o[k] > 0.0)
    offload = alloc.l_o[k] * cfg.chi_k[k] / alloc.f_o[k] + alloc.l_o[k] / avg_rate;
  const double margin = cfg.T_k[k] - std::max(local, offload);
  return {margin >= 0.0, margin};
}

// ---------------------------------------------------------------------------
// Scheduling LP

struct SchedulingLp {
  ConvexProgram lp;
  Eigen::MatrixXd rates;   // Ř_k[n], bits/s, K x N
  Eigen::VectorXd floors;  // required Σ_n c Ř per user, bits/s
  int K = 0, N = 0;

  int var(int k, int n) const { return k * N + n; }  // both 0-based here
};

// Phase-aligned rate table along a trajectory.
inline Eigen::MatrixXd aligned_rate_table(const Trajectory& traj, const ScenarioConfig& cfg,
                                          const std::vector<LinkLaw>& laws) {
  const int N = traj.slots();
  Eigen::MatrixXd rates(cfg.K, N);
  for (int k = 0; k < cfg.K; ++k)
    for (int n = 0; n < N; ++n) rates(k, n) = law_rate(laws[k], cfg, traj.q[n], k);
  return rates;
}

// LP over fractional c: maximize total weighted rate subject to per-user
// rate floors (the latency constraint restated) and one user per slot.
inline SchedulingLp build_scheduling_lp(const Trajectory& traj, const Allocation& alloc,
                                        const ScenarioConfig& cfg,
                                        const std::vector<LinkLaw>& laws) {
  SchedulingLp out;
  out.K = cfg.K;
  out.N = traj.slots();
  out.rates = aligned_rate_table(traj, cfg, laws);
  out.floors.resize(cfg.K);
  for (int k = 0; k < cfg.K; ++k) {
    const double denom = alloc.f_o[k] * cfg.T_k[k] - alloc.l_o[k] * cfg.chi_k[k];
    if (denom <= 0.0)
      throw std::invalid_argument("rate floor denominator nonpositive for user " +
                                  std::to_string(k + 1));
    out.floors[k] = out.N * alloc.f_o[k] * alloc.l_o[k] / denom;
  }

  ConvexProgram& lp = out.lp;
  lp.init(cfg.K * out.N);
  lp.lower.setZero();
  lp.upper.setOnes();

  AffineTerm obj;
  obj.support.resize(lp.n);
  obj.coeff.resize(lp.n);
  for (int k = 0; k < cfg.K; ++k)
    for (int n = 0; n < out.N; ++n) {
      obj.support[out.var(k, n)] = out.var(k, n);
      obj.coeff[out.var(k, n)] = out.rates(k, n);
    }
  lp.objective_affine.push_back(obj);

  for (int k = 0; k < cfg.K; ++k) {
    AffineTerm floor;  // floor_k - Σ_n c Ř <= 0
    floor.constant = out.floors[k];
    for (int n = 0; n < out.N; ++n) {
      floor.support.push_back(out.var(k, n));
      floor.coeff.push_back(-out.rates(k, n));
    }
    lp.affine_constraints.push_back(std::move(floor));
  }

  for (int n = 0; n < out.N; ++n) {
    AffineTerm sum1;  // Σ_k c - 1 = 0
    sum1.constant = -1.0;
    for (int k = 0; k < cfg.K; ++k) {
      sum1.support.push_back(out.var(k, n));
      sum1.coeff.push_back(1.0);
    }
    lp.equalities.push_back(std::move(sum1));
  }
  return out;
}

// Strictly feasible LP start: blend the incumbent schedule toward uniform
// and shave the floors by the blend's worst-case effect. Falls back to
// phase-1 if the blend is still outside.
inline Eigen::VectorXd scheduling_lp_start(SchedulingLp& sched, const Schedule& incumbent) {
  const int K = sched.K, N = sched.N;
  const double beta = 1e-6;
  Eigen::VectorXd x(K * N);
  for (int k = 0; k < K; ++k)
    for (int n = 0; n < N; ++n)
      x[sched.var(k, n)] = (1.0 - beta) * incumbent.c(k, n) + beta / K;

  for (int k = 0; k < K; ++k) {
    double swing = 0.0;
    for (int n = 0; n < N; ++n) swing += sched.rates(k, n);
    auto& floor = sched.lp.affine_constraints[k];
    floor.constant -= 1e-9 * std::abs(floor.constant) + 2.0 * beta * swing + 1e-9;
  }
  if (sched.lp.max_violation(x) >= 0.0) {
    Solution strict = find_strict_point(sched.lp, x, 1e-6);
    if (strict.status != SolveStatus::optimal)
      throw std::runtime_error("scheduling LP has no strictly feasible point");
    x = strict.x;
  }
  return x;
}

// Per-slot argmax followed by a greedy repair pass that moves the violated
// user's best slots away from donors that can spare them. Returns nullopt
// when no repair is found, in which case the caller keeps the old schedule.
inline std::optional<Schedule> round_schedule(const Schedule& fractional,
                                              const SchedulingLp& sched) {
  const int K = sched.K, N = sched.N;
  Schedule bin;
  bin.c = Eigen::MatrixXd::Zero(K, N);
  for (int n = 0; n < N; ++n) {
    int best = 0;
    fractional.c.col(n).maxCoeff(&best);
    bin.c(best, n) = 1.0;
  }

  const auto weighted = [&](int k) {
    double s = 0.0;
    for (int n = 0; n < N; ++n) s += bin.c(k, n) * sched.rates(k, n);
    return s;
  };

  for (int pass = 0; pass < 10 * K * N; ++pass) {
    int violated = -1;
    for (int k = 0; k < K; ++k)
      if (weighted(k) < sched.floors[k]) { violated = k; break; }
    if (violated < 0) return bin;

    // candidate slots by descending rate for the violated user
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return sched.rates(violated, a) > sched.rates(violated, b);
    });
    bool moved = false;
    for (int n : order) {
      if (bin.c(violated, n) == 1.0) continue;
      int donor = 0;
      bin.c.col(n).maxCoeff(&donor);
      if (weighted(donor) - sched.rates(donor, n) >= sched.floors[donor]) {
        bin.c(donor, n) = 0.0;
        bin.c(violated, n) = 1.0;
        moved = true;
        break;
      }
    }
    if (!moved) return std::nullopt;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// SCA inner program

struct Expansion {
  Trajectory traj;
  Allocation alloc;
  SlackState slack;
};

// Equality-tight slacks at a given iterate.
inline SlackState init_slacks(const Trajectory& traj, const Allocation& alloc,
                              const Schedule& schedule, const ScenarioConfig& cfg,
                              const std::vector<LinkLaw>& laws) {
  const int N = traj.slots();
  SlackState s;
  s.y.resize(cfg.K, N);
  s.p.resize(N);
  s.u.resize(cfg.K);
  s.d_r.resize(cfg.K);
  const double H2 = cfg.H * cfg.H;
  for (int n = 0; n < N; ++n) {
    s.p[n] = (traj.q[n] - cfg.w_s).squaredNorm() + H2;
    for (int k = 0; k < cfg.K; ++k)
      s.y(k, n) = (traj.q[n] - cfg.w_k[k]).squaredNorm() + H2;
  }
  for (int k = 0; k < cfg.K; ++k) {
    s.u[k] = alloc.l_o[k] * alloc.f_o[k] * alloc.f_o[k];
    double rate = 0.0;
    for (int n = 0; n < N; ++n)
      rate += schedule.c(k, n) * cfg.B * gamma0(laws[k], s.p[n], s.y(k, n));
    s.d_r[k] = rate / N;
  }
  return s;
}

// Variable layout of the inner program. Slot indices are 1-based to match
// the waypoint convention; q[1] and q[N+1] are fixed endpoints.
struct InnerLayout {
  int N = 0, K = 0;
  bool with_p = true;
  bool with_q = true;  // false when the trajectory is frozen
  bool maxmin = false;
  int q_off = 0, y_off = 0, p_off = 0, u_off = 0;
  int lo_off = 0, ll_off = 0, fo_off = 0, dr_off = 0, lmin_idx = -1;
  int total = 0;

  int qx(int n) const { return q_off + 2 * (n - 2); }  // n in 2..N
  int qy(int n) const { return qx(n) + 1; }
  int y(int k, int n) const { return y_off + k * N + (n - 1); }
  int p(int n) const { return p_off + (n - 1); }
  int u(int k) const { return u_off + k; }
  int lo(int k) const { return lo_off + k; }
  int ll(int k) const { return ll_off + k; }
  int fo(int k) const { return fo_off + k; }
  int dr(int k) const { return dr_off + k; }
};

inline InnerLayout make_inner_layout(int N, int K, bool with_p, bool maxmin,
                                     bool with_q = true) {
  InnerLayout L;
  L.N = N;
  L.K = K;
  L.with_p = with_p;
  L.with_q = with_q;
  L.maxmin = maxmin;
  L.q_off = 0;
  L.y_off = with_q ? 2 * (N - 1) : 0;
  L.p_off = L.y_off + K * N;
  L.u_off = L.p_off + (with_p ? N : 0);
  L.lo_off = L.u_off + K;
  L.ll_off = L.lo_off + K;
  L.fo_off = L.ll_off + K;
  L.dr_off = L.fo_off + K;
  L.total = L.dr_off + K;
  if (maxmin) {
    L.lmin_idx = L.total;
    ++L.total;
  }
  return L;
}

struct InnerProgram {
  ConvexProgram program;
  InnerLayout layout;
  std::vector<TaylorEntry> taylor;  // K*N entries, k*N + (n-1)
};

namespace inner_detail {

// ‖x_a − x_b‖² − limit², supports laid out as [a..., b...] with either end
// possibly a constant.
inline SmoothTerm squared_distance_term(const std::vector<int>& support,
                                        const std::vector<double>& fixed_a,
                                        const std::vector<double>& fixed_b, double limit2,
                                        bool a_fixed, bool b_fixed) {
  SmoothTerm term;
  term.support = support;
  term.eval = [fixed_a, fixed_b, limit2, a_fixed, b_fixed](const double* xs, double& val,
                                                           double* grad, double* hess) {
    double ax, ay, bx, by;
    int idx = 0;
    if (a_fixed) { ax = fixed_a[0]; ay = fixed_a[1]; }
    else { ax = xs[idx++]; ay = xs[idx++]; }
    if (b_fixed) { bx = fixed_b[0]; by = fixed_b[1]; }
    else { bx = xs[idx++]; by = xs[idx++]; }
    const double dx = ax - bx, dy = ay - by;
    val = dx * dx + dy * dy - limit2;
    if (!grad) return;
    int gi = 0;
    const int n_sup = (a_fixed ? 0 : 2) + (b_fixed ? 0 : 2);
    if (hess)
      for (int i = 0; i < n_sup * n_sup; ++i) hess[i] = 0.0;
    if (!a_fixed) {
      grad[gi] = 2.0 * dx;
      grad[gi + 1] = 2.0 * dy;
      if (hess) {
        hess[gi * n_sup + gi] = 2.0;
        hess[(gi + 1) * n_sup + gi + 1] = 2.0;
      }
      gi += 2;
    }
    if (!b_fixed) {
      grad[gi] = -2.0 * dx;
      grad[gi + 1] = -2.0 * dy;
      if (hess) {
        hess[gi * n_sup + gi] = 2.0;
        hess[(gi + 1) * n_sup + gi + 1] = 2.0;
        if (!a_fixed) {
          hess[0 * n_sup + gi] = -2.0;
          hess[gi * n_sup + 0] = -2.0;
          hess[1 * n_sup + gi + 1] = -2.0;
          hess[(gi + 1) * n_sup + 1] = -2.0;
        }
      }
    }
  };
  return term;
}

}  // namespace inner_detail

// Builds the Dinkelbach-parameterized SCA program at the given expansion
// point: maximize N(x) − λ·D_up(x) over trajectory, slacks and allocation,
// under the convexified constraint set. All constraints are smooth convex
// and the expansion point itself is feasible.
inline InnerProgram build_inner_program(double lambda, const Schedule& schedule,
                                        const Expansion& exp, const ScenarioConfig& cfg,
                                        const std::vector<LinkLaw>& laws, bool maxmin = false,
                                        bool frozen_q = false) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  const int N = exp.traj.slots();
  const int K = cfg.K;
  const bool with_p = laws[0].two_hop;
  InnerProgram ip;
  ip.layout = make_inner_layout(N, K, with_p, maxmin, !frozen_q);
  const InnerLayout& L = ip.layout;
  ConvexProgram& P = ip.program;
  P.init(L.total);

  const double H2 = cfg.H * cfg.H;
  const double dt = cfg.delta_t;

  // --- boxes and scales -----------------------------------------------
  double far2 = 0.0;
  for (int k = 0; k < K; ++k)
    far2 = std::max(far2, (cfg.r_d + cfg.w_k[k].norm()) * (cfg.r_d + cfg.w_k[k].norm()));
  far2 = std::max(far2, (cfg.r_d + cfg.w_s.norm()) * (cfg.r_d + cfg.w_s.norm()));
  const double dist2_cap = 4.0 * (far2 + H2);

  if (!frozen_q)
    for (int n = 2; n <= N; ++n) {
      P.lower[L.qx(n)] = -cfg.r_d;
      P.upper[L.qx(n)] = cfg.r_d;
      P.lower[L.qy(n)] = -cfg.r_d;
      P.upper[L.qy(n)] = cfg.r_d;
      P.scale[L.qx(n)] = cfg.r_d;
      P.scale[L.qy(n)] = cfg.r_d;
    }
  for (int k = 0; k < K; ++k)
    for (int n = 1; n <= N; ++n) {
      P.lower[L.y(k, n)] = 0.5 * H2;
      P.upper[L.y(k, n)] = dist2_cap;
      P.scale[L.y(k, n)] = std::max(exp.slack.y(k, n - 1), H2);
    }
  if (with_p)
    for (int n = 1; n <= N; ++n) {
      P.lower[L.p(n)] = 0.5 * H2;
      P.upper[L.p(n)] = dist2_cap;
      P.scale[L.p(n)] = std::max(exp.slack.p[n - 1], H2);
    }

  std::vector<double> dr_cap(K);
  for (int k = 0; k < K; ++k) {
    const double top = with_p ? gamma0(laws[k], H2, H2) : gamma0(laws[k], 0.0, H2);
    dr_cap[k] = cfg.B * top * 1.0001 + 1.0;
  }

  for (int k = 0; k < K; ++k) {
    const double lo_cap = cfg.T_k[k] * dr_cap[k];
    P.lower[L.u(k)] = 0.0;
    P.upper[L.u(k)] = 10.0 * lo_cap * cfg.C_o * cfg.C_o;
    P.scale[L.u(k)] = std::max(exp.slack.u[k], 1.0);
    P.lower[L.lo(k)] = cfg.I_k[k];
    P.upper[L.lo(k)] = lo_cap;
    P.scale[L.lo(k)] = std::max(exp.alloc.l_o[k], cfg.I_k[k]);
    P.lower[L.ll(k)] = 0.0;
    P.upper[L.ll(k)] = cfg.T_k[k] * cfg.f_l_k[k] / cfg.chi_k[k];  // constraint (local latency)
    P.scale[L.ll(k)] = std::max(exp.alloc.l_l[k], 0.01 * P.upper[L.ll(k)]);
    P.lower[L.fo(k)] = 0.0;
    P.upper[L.fo(k)] = cfg.C_o;
    P.scale[L.fo(k)] = std::max(exp.alloc.f_o[k], 1e-6 * cfg.C_o);
    P.lower[L.dr(k)] = 0.0;
    P.upper[L.dr(k)] = dr_cap[k];
    P.scale[L.dr(k)] = std::max(exp.slack.d_r[k], 1e-6 * dr_cap[k]);
  }
  if (maxmin) {
    double cap = 0.0;
    for (int k = 0; k < K; ++k)
      cap = std::max(cap, P.upper[L.lo(k)] + P.upper[L.ll(k)]);
    P.lower[L.lmin_idx] = 0.0;
    P.upper[L.lmin_idx] = cap;
    double sc = 0.0;
    for (int k = 0; k < K; ++k) sc = std::max(sc, P.scale[L.lo(k)]);
    P.scale[L.lmin_idx] = sc;
  }

  // --- mobility ---------------------------------------------------------
  using inner_detail::squared_distance_term;
  const double v_lim2 = cfg.v_max * cfg.v_max * dt * dt;
  for (int n = 1; !frozen_q && n <= N; ++n) {
    // ‖q[n+1] − q[n]‖² ≤ (v_max δt)²
    const bool first_fixed = (n == 1);
    const bool last_fixed = (n + 1 == N + 1);
    std::vector<int> sup;
    if (!first_fixed) sup.insert(sup.end(), {L.qx(n), L.qy(n)});
    if (!last_fixed) sup.insert(sup.end(), {L.qx(n + 1), L.qy(n + 1)});
    P.constraints.push_back(squared_distance_term(
        sup, {cfg.q0.x(), cfg.q0.y()}, {cfg.qF.x(), cfg.qF.y()}, v_lim2, first_fixed,
        last_fixed));
  }

  const double a_lim2 = cfg.a_max * cfg.a_max * dt * dt * dt * dt;
  for (int n = 1; n <= N - 1; ++n) {
    // ‖q[n+2] − 2q[n+1] + q[n]‖² ≤ (a_max δt²)²
    SmoothTerm term;
    std::vector<int> sup;
    const bool f1 = (n == 1);            // q[1] fixed
    const bool f3 = (n + 2 == N + 1);    // q[N+1] fixed
    if (!f1) sup.insert(sup.end(), {L.qx(n), L.qy(n)});
    sup.insert(sup.end(), {L.qx(n + 1), L.qy(n + 1)});
    if (!f3) sup.insert(sup.end(), {L.qx(n + 2), L.qy(n + 2)});
    term.support = sup;
    const Eigen::Vector2d c1 = cfg.q0, c3 = cfg.qF;
    term.eval = [f1, f3, c1, c3, a_lim2](const double* xs, double& val, double* grad,
                                         double* hess) {
      double x1, y1, x2, y2, x3, y3;
      int idx = 0;
      if (f1) { x1 = c1.x(); y1 = c1.y(); } else { x1 = xs[idx++]; y1 = xs[idx++]; }
      x2 = xs[idx++];
      y2 = xs[idx++];
      if (f3) { x3 = c3.x(); y3 = c3.y(); } else { x3 = xs[idx++]; y3 = xs[idx++]; }
      const double rx = x3 - 2.0 * x2 + x1;
      const double ry = y3 - 2.0 * y2 + y1;
      val = rx * rx + ry * ry - a_lim2;
      if (!grad) return;
      const int ns = (f1 ? 0 : 2) + 2 + (f3 ? 0 : 2);
      std::vector<double> cx(ns, 0.0), cy(ns, 0.0);
      int gi = 0;
      if (!f1) { cx[gi] = 1.0; cy[gi + 1] = 1.0; gi += 2; }
      cx[gi] = -2.0;
      cy[gi + 1] = -2.0;
      gi += 2;
      if (!f3) { cx[gi] = 1.0; cy[gi + 1] = 1.0; }
      for (int i = 0; i < ns; ++i) grad[i] = 2.0 * (rx * cx[i] + ry * cy[i]);
      if (hess)
        for (int i = 0; i < ns; ++i)
          for (int j = 0; j < ns; ++j)
            hess[i * ns + j] = 2.0 * (cx[i] * cx[j] + cy[i] * cy[j]);
    };
    P.constraints.push_back(std::move(term));
  }

  const double r_lim2 = cfg.r_d * cfg.r_d;
  for (int n = 2; n <= N; ++n)
    P.constraints.push_back(squared_distance_term({L.qx(n), L.qy(n)}, {}, {0.0, 0.0}, r_lim2,
                                                  false, true));

  // --- slack links -------------------------------------------------------
  for (int k = 0; k < K; ++k) {
    // n = 1: q fixed, pure bound on y
    P.lower[L.y(k, 1)] =
        std::max(P.lower[L.y(k, 1)], (cfg.q0 - cfg.w_k[k]).squaredNorm() + H2);
    for (int n = 2; n <= N; ++n) {
      SmoothTerm term;
      term.support = {L.qx(n), L.qy(n), L.y(k, n)};
      const Eigen::Vector2d w = cfg.w_k[k];
      term.eval = [w, H2](const double* xs, double& val, double* grad, double* hess) {
        const double dx = xs[0] - w.x(), dy = xs[1] - w.y();
        val = dx * dx + dy * dy + H2 - xs[2];
        if (!grad) return;
        grad[0] = 2.0 * dx;
        grad[1] = 2.0 * dy;
        grad[2] = -1.0;
        if (hess) {
          for (int i = 0; i < 9; ++i) hess[i] = 0.0;
          hess[0] = 2.0;
          hess[4] = 2.0;
        }
      };
      P.constraints.push_back(std::move(term));
    }
  }
  if (with_p) {
    P.lower[L.p(1)] = std::max(P.lower[L.p(1)], (cfg.q0 - cfg.w_s).squaredNorm() + H2);
    for (int n = 2; n <= N; ++n) {
      SmoothTerm term;
      term.support = {L.qx(n), L.qy(n), L.p(n)};
      const Eigen::Vector2d w = cfg.w_s;
      term.eval = [w, H2](const double* xs, double& val, double* grad, double* hess) {
        const double dx = xs[0] - w.x(), dy = xs[1] - w.y();
        val = dx * dx + dy * dy + H2 - xs[2];
        if (!grad) return;
        grad[0] = 2.0 * dx;
        grad[1] = 2.0 * dy;
        grad[2] = -1.0;
        if (hess) {
          for (int i = 0; i < 9; ++i) hess[i] = 0.0;
          hess[0] = 2.0;
          hess[4] = 2.0;
        }
      };
      P.constraints.push_back(std::move(term));
    }
  }

  // --- rate bound --------------------------------------------------------
  ip.taylor.resize(K * N);
  for (int k = 0; k < K; ++k) {
    AffineTerm rate;  // d_r − (1/N) Σ_n c B R̂ ≤ 0
    rate.support.push_back(L.dr(k));
    rate.coeff.push_back(1.0);
    double constant = 0.0;
    bool any_slot = false;
    for (int n = 1; n <= N; ++n) {
      const TaylorEntry e =
          taylor_entry(laws[k], exp.slack.p.size() ? exp.slack.p[n - 1] : 0.0,
                       exp.slack.y(k, n - 1));
      ip.taylor[k * N + (n - 1)] = e;
      const double c_kn = schedule.c(k, n - 1);
      if (c_kn == 0.0) continue;
      any_slot = true;
      const double w = c_kn * cfg.B / N;
      constant -= w * (e.C - e.A * e.p_t - e.B * e.y_t);
      if (with_p) {
        rate.support.push_back(L.p(n));
        rate.coeff.push_back(-w * e.A);
      }
      rate.support.push_back(L.y(k, n));
      rate.coeff.push_back(-w * e.B);
    }
    if (!any_slot)
      throw std::invalid_argument("user " + std::to_string(k + 1) +
                                  " has no scheduled slot");
    rate.constant = constant;
    P.affine_constraints.push_back(std::move(rate));
  }

  // --- latency and server-energy restrictions ----------------------------
  for (int k = 0; k < K; ++k) {
    {
      SmoothTerm term;  // l² /d_r + χ l² / f − T l ≤ 0
      term.support = {L.lo(k), L.dr(k), L.fo(k)};
      const double chi = cfg.chi_k[k], T = cfg.T_k[k];
      term.eval = [chi, T](const double* xs, double& val, double* grad, double* hess) {
        const double l = xs[0], d = xs[1], f = xs[2];
        val = l * l / d + chi * l * l / f - T * l;
        if (!grad) return;
        grad[0] = 2.0 * l / d + 2.0 * chi * l / f - T;
        grad[1] = -l * l / (d * d);
        grad[2] = -chi * l * l / (f * f);
        if (hess) {
          hess[0] = 2.0 / d + 2.0 * chi / f;
          hess[1] = -2.0 * l / (d * d);
          hess[2] = -2.0 * chi * l / (f * f);
          hess[3] = hess[1];
          hess[4] = 2.0 * l * l / (d * d * d);
          hess[5] = 0.0;
          hess[6] = hess[2];
          hess[7] = 0.0;
          hess[8] = 2.0 * chi * l * l / (f * f * f);
        }
      };
      P.constraints.push_back(std::move(term));
    }
    {
      // f²/u ≤ 1/l_t − (l − l_t)/l_t², the tangent restriction of u ≥ l f²
      const double l_t = std::max(exp.alloc.l_o[k], std::max(cfg.I_k[k], 1.0));
      SmoothTerm term;
      term.support = {L.fo(k), L.u(k), L.lo(k)};
      term.eval = [l_t](const double* xs, double& val, double* grad, double* hess) {
        const double f = xs[0], u = xs[1], l = xs[2];
        val = f * f / u + l / (l_t * l_t) - 2.0 / l_t;
        if (!grad) return;
        grad[0] = 2.0 * f / u;
        grad[1] = -f * f / (u * u);
        grad[2] = 1.0 / (l_t * l_t);
        if (hess) {
          hess[0] = 2.0 / u;
          hess[1] = -2.0 * f / (u * u);
          hess[2] = 0.0;
          hess[3] = hess[1];
          hess[4] = 2.0 * f * f / (u * u * u);
          hess[5] = 0.0;
          hess[6] = 0.0;
          hess[7] = 0.0;
          hess[8] = 0.0;
        }
      };
      P.constraints.push_back(std::move(term));
    }
    if (maxmin) {
      AffineTerm mm;  // l_min − l_o − l_l ≤ 0
      mm.support = {L.lmin_idx, L.lo(k), L.ll(k)};
      mm.coeff = {1.0, -1.0, -1.0};
      P.affine_constraints.push_back(std::move(mm));
    }
  }
  {
    AffineTerm cap;  // Σ f_o − C_o ≤ 0
    cap.constant = -cfg.C_o;
    for (int k = 0; k < K; ++k) {
      cap.support.push_back(L.fo(k));
      cap.coeff.push_back(1.0);
    }
    P.affine_constraints.push_back(std::move(cap));
  }

  // --- objective ----------------------------------------------------------
  {
    AffineTerm lin;
    double constant = 0.0;
    if (maxmin) {
      lin.support.push_back(L.lmin_idx);
      lin.coeff.push_back(1.0);
    }
    for (int k = 0; k < K; ++k) {
      if (!maxmin) {
        lin.support.push_back(L.lo(k));
        lin.coeff.push_back(1.0);
        lin.support.push_back(L.ll(k));
        lin.coeff.push_back(1.0);
      }
      // −λ (φ_u χ f_l² l_l + φ_s χ u + T P)
      lin.support.push_back(L.ll(k));
      lin.coeff.push_back(-lambda * cfg.phi_u * cfg.chi_k[k] * cfg.f_l_k[k] * cfg.f_l_k[k]);
      lin.support.push_back(L.u(k));
      lin.coeff.push_back(-lambda * cfg.phi_s * cfg.chi_k[k]);
      constant -= lambda * cfg.T_k[k] * cfg.P_k[k];
    }
    lin.constant = constant;
    P.objective_affine.push_back(std::move(lin));
  }

  // −λ α Σ_n E_up(v[n], a[n]) with a smooth ‖a‖ and a[N] = 0.
  const RotorParams r = cfg.rotor;
  const double w_obj = -lambda * cfg.alpha_w;
  const double eps_a = 1e-4;
  for (int n = 1; n <= N; ++n) {
    SmoothTerm term;
    std::vector<int> sup;
    const bool f1 = (n == 1);
    const bool have_a = (n <= N - 1);
    const bool f3 = have_a && (n + 2 == N + 1);
    if (!f1) sup.insert(sup.end(), {L.qx(n), L.qy(n)});
    if (n + 1 <= N) sup.insert(sup.end(), {L.qx(n + 1), L.qy(n + 1)});
    if (have_a && !f3) sup.insert(sup.end(), {L.qx(n + 2), L.qy(n + 2)});
    term.support = sup;
    const Eigen::Vector2d c_first = cfg.q0, c_last = cfg.qF;
    const bool mid_fixed = (n + 1 == N + 1);  // q[n+1] is the endpoint
    term.eval = [=](const double* xs, double& val, double* grad, double* hess) {
      // gather q[n], q[n+1], q[n+2]
      Eigen::Vector2d q1, q2, q3 = Eigen::Vector2d::Zero();
      int idx = 0;
      if (f1) q1 = c_first; else { q1 = {xs[idx], xs[idx + 1]}; idx += 2; }
      if (mid_fixed) q2 = c_last; else { q2 = {xs[idx], xs[idx + 1]}; idx += 2; }
      if (have_a) {
        if (f3) q3 = c_last; else { q3 = {xs[idx], xs[idx + 1]}; idx += 2; }
      }
      const Eigen::Vector2d v = (q2 - q1) / dt;
      const Eigen::Vector2d a =
          have_a ? Eigen::Vector2d((q3 - 2.0 * q2 + q1) / (dt * dt)) : Eigen::Vector2d::Zero();
      const EupDerivs e = propulsion_upper_smooth(v, a, r, dt, eps_a, grad != nullptr);
      val = w_obj * e.val;
      if (!grad) return;
      // chain rule through the linear maps q -> (v, a); order [q1?, q2?, q3?]
      std::vector<double> cv, ca;
      if (!f1) { cv.push_back(-1.0 / dt); ca.push_back(have_a ? 1.0 / (dt * dt) : 0.0); }
      if (!mid_fixed) { cv.push_back(1.0 / dt); ca.push_back(have_a ? -2.0 / (dt * dt) : 0.0); }
      if (have_a && !f3) { cv.push_back(0.0); ca.push_back(1.0 / (dt * dt)); }
      const int npts = static_cast<int>(cv.size());
      const int ns = 2 * npts;
      for (int i = 0; i < npts; ++i) {
        grad[2 * i] = w_obj * (e.dv.x() * cv[i] + e.da.x() * ca[i]);
        grad[2 * i + 1] = w_obj * (e.dv.y() * cv[i] + e.da.y() * ca[i]);
      }
      if (hess) {
        for (int i = 0; i < ns * ns; ++i) hess[i] = 0.0;
        for (int i = 0; i < npts; ++i)
          for (int j = 0; j < npts; ++j) {
            Eigen::Matrix2d block = cv[i] * cv[j] * e.Hvv + ca[i] * ca[j] * e.Haa +
                                    cv[i] * ca[j] * e.Hva + ca[i] * cv[j] * e.Hva.transpose();
            block *= w_obj;
            hess[(2 * i) * ns + (2 * j)] += block(0, 0);
            hess[(2 * i) * ns + (2 * j + 1)] += block(0, 1);
            hess[(2 * i + 1) * ns + (2 * j)] += block(1, 0);
            hess[(2 * i + 1) * ns + (2 * j + 1)] += block(1, 1);
          }
      }
    };
    if (!term.support.empty()) P.objective.push_back(std::move(term));
  }

  return ip;
}

// Pack an iterate into the inner-program variable vector.
inline Eigen::VectorXd pack_point(const InnerLayout& L, const Trajectory& traj,
                                  const Allocation& alloc, const SlackState& slack,
                                  double l_min = 0.0) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(L.total);
  for (int n = 2; n <= L.N; ++n) {
    x[L.qx(n)] = traj.q[n - 1].x();
    x[L.qy(n)] = traj.q[n - 1].y();
  }
  for (int k = 0; k < L.K; ++k)
    for (int n = 1; n <= L.N; ++n) x[L.y(k, n)] = slack.y(k, n - 1);
  if (L.with_p)
    for (int n = 1; n <= L.N; ++n) x[L.p(n)] = slack.p[n - 1];
  for (int k = 0; k < L.K; ++k) {
    x[L.u(k)] = slack.u[k];
    x[L.lo(k)] = alloc.l_o[k];
    x[L.ll(k)] = alloc.l_l[k];
    x[L.fo(k)] = alloc.f_o[k];
    x[L.dr(k)] = slack.d_r[k];
  }
  if (L.maxmin) x[L.lmin_idx] = l_min;
  return x;
}

// Numerator of the fractional objective at an iterate.
inline double surrogate_numerator(const Expansion& e, bool maxmin = false) {
  if (maxmin) return (e.alloc.l_o + e.alloc.l_l).minCoeff();
  return e.alloc.total_bits();
}

// Denominator of the Dinkelbach-parameterized objective: the smoothed upper
// propulsion bound plus user energy and the server-energy slack. This is
// exactly the quantity the inner program's objective subtracts λ times.
inline double surrogate_denominator(const Expansion& e, const ScenarioConfig& cfg,
                                    double eps_a = 1e-4) {
  double flight = 0.0;
  const int N = e.traj.slots();
  for (int n = 1; n <= N; ++n)
    flight += propulsion_upper_smooth(e.traj.velocity(n), e.traj.acceleration(n), cfg.rotor,
                                      cfg.delta_t, eps_a, false)
                  .val;
  double compute = 0.0;
  for (int k = 0; k < cfg.K; ++k) {
    compute += cfg.T_k[k] * cfg.P_k[k] +
               cfg.phi_u * cfg.chi_k[k] * e.alloc.l_l[k] * cfg.f_l_k[k] * cfg.f_l_k[k] +
               cfg.phi_s * cfg.chi_k[k] * e.slack.u[k];
  }
  return cfg.alpha_w * flight + compute;
}

// Unpack a solver point back into domain objects.
inline Expansion unpack_point(const InnerLayout& L, const Eigen::VectorXd& x,
                              const ScenarioConfig& cfg) {
  Expansion e;
  e.traj.delta_t = cfg.delta_t;
  e.traj.q.resize(L.N + 1);
  e.traj.q[0] = cfg.q0;
  e.traj.q[L.N] = cfg.qF;
  for (int n = 2; n <= L.N; ++n) e.traj.q[n - 1] = {x[L.qx(n)], x[L.qy(n)]};
  e.slack.y.resize(L.K, L.N);
  e.slack.p.resize(L.N);
  e.slack.u.resize(L.K);
  e.slack.d_r.resize(L.K);
  e.alloc.l_o.resize(L.K);
  e.alloc.l_l.resize(L.K);
  e.alloc.f_o.resize(L.K);
  for (int k = 0; k < L.K; ++k)
    for (int n = 1; n <= L.N; ++n) e.slack.y(k, n - 1) = x[L.y(k, n)];
  if (L.with_p)
    for (int n = 1; n <= L.N; ++n) e.slack.p[n - 1] = x[L.p(n)];
  else
    e.slack.p.setZero();
  for (int k = 0; k < L.K; ++k) {
    e.slack.u[k] = x[L.u(k)];
    e.alloc.l_o[k] = x[L.lo(k)];
    e.alloc.l_l[k] = x[L.ll(k)];
    e.alloc.f_o[k] = x[L.fo(k)];
    e.slack.d_r[k] = x[L.dr(k)];
  }
  return e;
}

}  // namespace urismec
