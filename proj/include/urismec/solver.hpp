#pragma once

// Smooth convex programs and a log-barrier interior-point solver.
//
// A program maximizes a concave objective subject to convex inequality
// constraints g_i(x) <= 0, optional linear equalities and per-variable box
// bounds. Terms carry a small variable support so Hessian assembly stays
// proportional to the true coupling. The solver follows the central path
// with damped Newton steps; per-variable scale hints keep the Newton system
// conditioned when variable magnitudes span many orders.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/QR>

namespace urismec {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Smooth scalar term over a small set of variables. eval fills the value,
// and optionally the gradient (support-sized) and row-major Hessian
// (support² entries) when the pointers are non-null.
struct SmoothTerm {
  std::vector<int> support;
  std::function<void(const double* xs, double& val, double* grad, double* hess)> eval;
};

// coeff · x[support] + constant
struct AffineTerm {
  std::vector<int> support;
  std::vector<double> coeff;
  double constant = 0.0;

  double value(const Eigen::VectorXd& x) const {
    double v = constant;
    for (std::size_t i = 0; i < support.size(); ++i) v += coeff[i] * x[support[i]];
    return v;
  }
};

struct ConvexProgram {
  int n = 0;
  Eigen::VectorXd lower;  // -inf allowed
  Eigen::VectorXd upper;  // +inf allowed
  Eigen::VectorXd scale;  // typical magnitude per variable, > 0

  std::vector<SmoothTerm> objective;        // maximized: f = Σ smooth + Σ affine
  std::vector<AffineTerm> objective_affine;
  std::vector<SmoothTerm> constraints;         // g(x) <= 0, convex
  std::vector<AffineTerm> affine_constraints;  // a·x + b <= 0
  std::vector<AffineTerm> equalities;          // a·x + b = 0

  void init(int nvars) {
    n = nvars;
    lower = Eigen::VectorXd::Constant(n, -kInf);
    upper = Eigen::VectorXd::Constant(n, kInf);
    scale = Eigen::VectorXd::Ones(n);
  }

  double objective_value(const Eigen::VectorXd& x) const {
    double f = 0.0;
    std::vector<double> xs;
    for (const auto& term : objective) {
      xs.resize(term.support.size());
      for (std::size_t i = 0; i < term.support.size(); ++i) xs[i] = x[term.support[i]];
      double v = 0.0;
      term.eval(xs.data(), v, nullptr, nullptr);
      f += v;
    }
    for (const auto& term : objective_affine) f += term.value(x);
    return f;
  }

  // Largest inequality value (positive means violated), including boxes.
  double max_violation(const Eigen::VectorXd& x) const {
    double worst = -kInf;
    std::vector<double> xs;
    for (const auto& term : constraints) {
      xs.resize(term.support.size());
      for (std::size_t i = 0; i < term.support.size(); ++i) xs[i] = x[term.support[i]];
      double v = 0.0;
      term.eval(xs.data(), v, nullptr, nullptr);
      worst = std::max(worst, v);
    }
    for (const auto& term : affine_constraints) worst = std::max(worst, term.value(x));
    for (int j = 0; j < n; ++j) {
      if (std::isfinite(lower[j])) worst = std::max(worst, lower[j] - x[j]);
      if (std::isfinite(upper[j])) worst = std::max(worst, x[j] - upper[j]);
    }
    return worst;
  }

  double max_equality_gap(const Eigen::VectorXd& x) const {
    double worst = 0.0;
    for (const auto& term : equalities) worst = std::max(worst, std::abs(term.value(x)));
    return worst;
  }
};

enum class SolveStatus { optimal, max_iter, infeasible };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iter: return "max-iter";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

struct KktResiduals {
  double primal = 0.0;
  double stationarity = 0.0;
  double complementarity = 0.0;
};

struct Solution {
  Eigen::VectorXd x;
  double value = 0.0;
  KktResiduals residuals;
  int iterations = 0;
  SolveStatus status = SolveStatus::max_iter;
  std::vector<double> stage_values;  // objective at the end of each barrier stage
};

struct SolveOptions {
  double tol = 1e-6;
  int max_iters_per_stage = 500;
  double mu = 10.0;         // barrier parameter growth per stage
  double armijo = 1e-4;
  int max_stages = 64;
};

namespace solver_detail {

// Scratch for one evaluation sweep.
struct Workspace {
  std::vector<double> xs, gbuf, hbuf;

  void fit(std::size_t s) {
    if (xs.size() < s) {
      xs.resize(s);
      gbuf.resize(s);
      hbuf.resize(s * s);
    }
  }
};

struct BarrierEval {
  double phi = 0.0;     // t * (-f) + Φ(x)
  double f = 0.0;
  bool feasible = true; // all g < 0 and box strict
};

// Value-only sweep of the barrier function.
inline BarrierEval barrier_value(const ConvexProgram& P, const Eigen::VectorXd& x, double t,
                                 Workspace& ws) {
  BarrierEval out;
  double phi = 0.0;
  for (const auto& term : P.constraints) {
    const std::size_t s = term.support.size();
    ws.fit(s);
    for (std::size_t i = 0; i < s; ++i) ws.xs[i] = x[term.support[i]];
    double v = 0.0;
    term.eval(ws.xs.data(), v, nullptr, nullptr);
    if (v >= 0.0) { out.feasible = false; return out; }
    phi -= std::log(-v);
  }
  for (const auto& term : P.affine_constraints) {
    const double v = term.value(x);
    if (v >= 0.0) { out.feasible = false; return out; }
    phi -= std::log(-v);
  }
  for (int j = 0; j < P.n; ++j) {
    if (std::isfinite(P.lower[j])) {
      const double w = x[j] - P.lower[j];
      if (w <= 0.0) { out.feasible = false; return out; }
      phi -= std::log(w / P.scale[j]);
    }
    if (std::isfinite(P.upper[j])) {
      const double w = P.upper[j] - x[j];
      if (w <= 0.0) { out.feasible = false; return out; }
      phi -= std::log(w / P.scale[j]);
    }
  }
  out.f = P.objective_value(x);
  out.phi = t * (-out.f) + phi;
  return out;
}

// Gradient and Hessian of the barrier in scaled coordinates z = x / scale.
inline void barrier_derivatives(const ConvexProgram& P, const Eigen::VectorXd& x, double t,
                                Workspace& ws, Eigen::VectorXd& grad_z, Eigen::MatrixXd& H_z) {
  const int n = P.n;
  grad_z.setZero(n);
  H_z.setZero(n, n);

  const auto add_smooth = [&](const SmoothTerm& term, double f_factor, bool barrier) {
    const std::size_t s = term.support.size();
    ws.fit(s);
    for (std::size_t i = 0; i < s; ++i) ws.xs[i] = x[term.support[i]];
    double v = 0.0;
    term.eval(ws.xs.data(), v, ws.gbuf.data(), ws.hbuf.data());
    if (barrier) {
      // -log(-g): grad = ∇g/(-g), hess = ∇g∇gᵀ/g² + ∇²g/(-g)
      const double inv = 1.0 / (-v);
      for (std::size_t i = 0; i < s; ++i) {
        const int vi = term.support[i];
        const double gi = ws.gbuf[i] * P.scale[vi];
        grad_z[vi] += gi * inv;
        for (std::size_t j = 0; j < s; ++j) {
          const int vj = term.support[j];
          const double gj = ws.gbuf[j] * P.scale[vj];
          H_z(vi, vj) += gi * gj * inv * inv + ws.hbuf[i * s + j] * P.scale[vi] * P.scale[vj] * inv;
        }
      }
    } else {
      // objective contribution: phi += f_factor * f  (f_factor = -t)
      for (std::size_t i = 0; i < s; ++i) {
        const int vi = term.support[i];
        grad_z[vi] += f_factor * ws.gbuf[i] * P.scale[vi];
        for (std::size_t j = 0; j < s; ++j) {
          const int vj = term.support[j];
          H_z(vi, vj) += f_factor * ws.hbuf[i * s + j] * P.scale[vi] * P.scale[vj];
        }
      }
    }
  };

  for (const auto& term : P.objective) add_smooth(term, -t, false);
  for (const auto& term : P.objective_affine)
    for (std::size_t i = 0; i < term.support.size(); ++i)
      grad_z[term.support[i]] += -t * term.coeff[i] * P.scale[term.support[i]];

  for (const auto& term : P.constraints) add_smooth(term, 0.0, true);

  for (const auto& term : P.affine_constraints) {
    const double v = term.value(x);
    const double inv = 1.0 / (-v);
    const std::size_t s = term.support.size();
    for (std::size_t i = 0; i < s; ++i) {
      const int vi = term.support[i];
      const double gi = term.coeff[i] * P.scale[vi];
      grad_z[vi] += gi * inv;
      for (std::size_t j = 0; j < s; ++j) {
        const int vj = term.support[j];
        H_z(vi, vj) += gi * term.coeff[j] * P.scale[vj] * inv * inv;
      }
    }
  }

  for (int j = 0; j < P.n; ++j) {
    if (std::isfinite(P.lower[j])) {
      const double w = (x[j] - P.lower[j]) / P.scale[j];
      grad_z[j] += -1.0 / w;
      H_z(j, j) += 1.0 / (w * w);
    }
    if (std::isfinite(P.upper[j])) {
      const double w = (P.upper[j] - x[j]) / P.scale[j];
      grad_z[j] += 1.0 / w;
      H_z(j, j) += 1.0 / (w * w);
    }
  }
}

}  // namespace solver_detail

// KKT residuals at a point: primal feasibility, stationarity norm with
// least-squares multipliers over near-active constraints, complementarity.
// All pieces are computed in scaled coordinates and normalized.
inline KktResiduals kkt_residuals(const ConvexProgram& P, const Eigen::VectorXd& x) {
  using namespace solver_detail;
  const int n = P.n;
  Workspace ws;

  // Objective gradient in z-space.
  Eigen::VectorXd grad_f = Eigen::VectorXd::Zero(n);
  for (const auto& term : P.objective) {
    const std::size_t s = term.support.size();
    ws.fit(s);
    for (std::size_t i = 0; i < s; ++i) ws.xs[i] = x[term.support[i]];
    double v = 0.0;
    term.eval(ws.xs.data(), v, ws.gbuf.data(), nullptr);
    for (std::size_t i = 0; i < s; ++i)
      grad_f[term.support[i]] += ws.gbuf[i] * P.scale[term.support[i]];
  }
  for (const auto& term : P.objective_affine)
    for (std::size_t i = 0; i < term.support.size(); ++i)
      grad_f[term.support[i]] += term.coeff[i] * P.scale[term.support[i]];

  // Collect constraint values/gradients; track primal violation and the
  // near-active set.
  struct Active { Eigen::VectorXd grad_z; double g; };
  std::vector<Active> active;
  double primal = 0.0;

  const auto consider = [&](const Eigen::VectorXd& gz, double g) {
    const double norm = gz.norm();
    const double scaled = g / (1.0 + norm);
    primal = std::max(primal, scaled);
    if (scaled >= -1e-5) active.push_back({gz, g});
  };

  for (const auto& term : P.constraints) {
    const std::size_t s = term.support.size();
    ws.fit(s);
    for (std::size_t i = 0; i < s; ++i) ws.xs[i] = x[term.support[i]];
    double v = 0.0;
    term.eval(ws.xs.data(), v, ws.gbuf.data(), nullptr);
    Eigen::VectorXd gz = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < s; ++i)
      gz[term.support[i]] = ws.gbuf[i] * P.scale[term.support[i]];
    consider(gz, v);
  }
  for (const auto& term : P.affine_constraints) {
    Eigen::VectorXd gz = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < term.support.size(); ++i)
      gz[term.support[i]] = term.coeff[i] * P.scale[term.support[i]];
    consider(gz, term.value(x));
  }
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(P.lower[j])) {
      Eigen::VectorXd gz = Eigen::VectorXd::Zero(n);
      gz[j] = -P.scale[j];
      consider(gz, P.lower[j] - x[j]);
    }
    if (std::isfinite(P.upper[j])) {
      Eigen::VectorXd gz = Eigen::VectorXd::Zero(n);
      gz[j] = P.scale[j];
      consider(gz, x[j] - P.upper[j]);
    }
  }
  for (const auto& term : P.equalities) {
    Eigen::VectorXd gz = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < term.support.size(); ++i)
      gz[term.support[i]] = term.coeff[i] * P.scale[term.support[i]];
    const double v = term.value(x);
    primal = std::max(primal, std::abs(v) / (1.0 + gz.norm()));
  }

  // Stationarity: fit multipliers by least squares, inequality multipliers
  // clamped to be nonnegative (one clamp-and-refit pass).
  const int n_eq = static_cast<int>(P.equalities.size());
  const int n_act = static_cast<int>(active.size());
  Eigen::VectorXd residual = grad_f;
  KktResiduals out;
  out.primal = primal;

  if (n_act + n_eq > 0) {
    Eigen::MatrixXd A(n, n_act + n_eq);
    for (int i = 0; i < n_act; ++i) A.col(i) = active[i].grad_z;
    for (int e = 0; e < n_eq; ++e) {
      Eigen::VectorXd gz = Eigen::VectorXd::Zero(n);
      const auto& term = P.equalities[e];
      for (std::size_t i = 0; i < term.support.size(); ++i)
        gz[term.support[i]] = term.coeff[i] * P.scale[term.support[i]];
      A.col(n_act + e) = gz;
    }
    Eigen::VectorXd mu = A.colPivHouseholderQr().solve(grad_f);
    std::vector<int> keep;
    for (int i = 0; i < n_act; ++i)
      if (mu[i] > 0.0) keep.push_back(i);
    if (static_cast<int>(keep.size()) != n_act) {
      Eigen::MatrixXd A2(n, keep.size() + n_eq);
      for (std::size_t i = 0; i < keep.size(); ++i) A2.col(i) = active[keep[i]].grad_z;
      for (int e = 0; e < n_eq; ++e) A2.col(keep.size() + e) = A.col(n_act + e);
      Eigen::VectorXd mu2(keep.size() + n_eq);
      if (A2.cols() > 0) {
        mu2 = A2.colPivHouseholderQr().solve(grad_f);
        for (std::size_t i = 0; i < keep.size(); ++i) mu2[i] = std::max(0.0, mu2[i]);
        residual = grad_f - A2 * mu2;
      }
      for (std::size_t i = 0; i < keep.size(); ++i) {
        const double g = active[keep[i]].g / (1.0 + active[keep[i]].grad_z.norm());
        out.complementarity = std::max(out.complementarity, std::abs(mu2[i] * g));
      }
    } else {
      for (int i = 0; i < n_act; ++i) mu[i] = std::max(0.0, mu[i]);
      residual = grad_f - A * mu;
      for (int i = 0; i < n_act; ++i) {
        const double g = active[i].g / (1.0 + active[i].grad_z.norm());
        out.complementarity = std::max(out.complementarity, std::abs(mu[i] * g));
      }
    }
  }
  out.stationarity = residual.norm() / (1.0 + grad_f.norm());
  return out;
}

// Log-barrier interior-point solve. `start` must be strictly feasible.
inline Solution solve(const ConvexProgram& P, const Eigen::VectorXd& start, double tol = 1e-6,
                      const SolveOptions& opts_in = {}) {
  using namespace solver_detail;
  SolveOptions opts = opts_in;
  opts.tol = tol;

  Solution sol;
  sol.x = start;

  if (start.size() != P.n) {
    sol.status = SolveStatus::infeasible;
    return sol;
  }
  if (P.max_violation(start) >= 0.0 || P.max_equality_gap(start) > 1e-7 * (1.0 + start.norm())) {
    sol.status = SolveStatus::infeasible;
    sol.value = P.objective_value(start);
    return sol;
  }

  Workspace ws;
  const int n = P.n;
  Eigen::VectorXd x = start;

  int m = static_cast<int>(P.constraints.size() + P.affine_constraints.size());
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(P.lower[j])) ++m;
    if (std::isfinite(P.upper[j])) ++m;
  }
  m = std::max(m, 1);

  const double f0 = P.objective_value(x);
  const double f_scale = 1.0 + std::abs(f0);

  // Equality matrix in z-space (fixed).
  const int n_eq = static_cast<int>(P.equalities.size());
  Eigen::MatrixXd A_z(n_eq, n);
  if (n_eq > 0) {
    A_z.setZero();
    for (int e = 0; e < n_eq; ++e)
      for (std::size_t i = 0; i < P.equalities[e].support.size(); ++i) {
        const int vi = P.equalities[e].support[i];
        A_z(e, vi) = P.equalities[e].coeff[i] * P.scale[vi];
      }
  }

  const double t_final = 2.0 * m / std::max(opts.tol, 1e-14);
  double t = 1.0;
  int total_iters = 0;
  Eigen::VectorXd grad_z(n), dz(n), dx(n);
  Eigen::MatrixXd H_z(n, n);

  for (int stage = 0; stage < opts.max_stages; ++stage) {
    const double stage_eps = std::max(1e-8 * t, 1e-12);
    for (int iter = 0; iter < opts.max_iters_per_stage; ++iter) {
      ++total_iters;
      barrier_derivatives(P, x, t / f_scale, ws, grad_z, H_z);

      // Newton direction with escalating regularization; gradient fallback.
      bool solved = false;
      double reg = 0.0;
      const double reg_base = std::max(1e-12, 1e-14 * H_z.diagonal().cwiseAbs().maxCoeff());
      for (int attempt = 0; attempt < 8 && !solved; ++attempt) {
        Eigen::MatrixXd Hr = H_z;
        if (reg > 0.0) Hr.diagonal().array() += reg;
        Eigen::LLT<Eigen::MatrixXd> llt(Hr);
        if (llt.info() == Eigen::Success) {
          if (n_eq > 0) {
            Eigen::MatrixXd W = llt.solve(A_z.transpose());
            Eigen::MatrixXd S = A_z * W;
            Eigen::VectorXd rhs = -A_z * llt.solve(grad_z);
            Eigen::LDLT<Eigen::MatrixXd> sldlt(S);
            if (sldlt.info() != Eigen::Success) { reg = reg == 0.0 ? reg_base : reg * 100.0; continue; }
            Eigen::VectorXd nu = sldlt.solve(rhs);
            dz = -llt.solve(grad_z + A_z.transpose() * nu);
          } else {
            dz = -llt.solve(grad_z);
          }
          solved = true;
        } else {
          reg = reg == 0.0 ? reg_base : reg * 100.0;
        }
      }
      if (!solved) dz = -grad_z;  // gradient fallback

      const double decrement = -grad_z.dot(dz);
      if (solved && decrement * 0.5 <= stage_eps) break;

      // Exact fraction-to-boundary for the box terms, then backtracking on
      // the barrier merit (which rejects any nonlinear-constraint crossing).
      dx = dz.cwiseProduct(P.scale);
      double alpha = 1.0;
      for (int j = 0; j < n; ++j) {
        if (dx[j] > 0 && std::isfinite(P.upper[j]))
          alpha = std::min(alpha, 0.99 * (P.upper[j] - x[j]) / dx[j]);
        else if (dx[j] < 0 && std::isfinite(P.lower[j]))
          alpha = std::min(alpha, 0.99 * (P.lower[j] - x[j]) / dx[j]);
      }

      const BarrierEval here = barrier_value(P, x, t / f_scale, ws);
      const double slope = grad_z.dot(dz);
      bool stepped = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Eigen::VectorXd cand = x + alpha * dx;
        const BarrierEval trial = barrier_value(P, cand, t / f_scale, ws);
        if (trial.feasible && trial.phi <= here.phi + opts.armijo * alpha * slope) {
          x = cand;
          stepped = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!stepped) break;  // line search stalled; advance the stage
    }
    sol.stage_values.push_back(P.objective_value(x));
    if (t >= t_final) break;
    t = std::min(t * opts.mu, t_final);
  }

  sol.x = x;
  sol.value = P.objective_value(x);
  sol.iterations = total_iters;
  sol.residuals = kkt_residuals(P, x);
  const bool gap_ok = t >= t_final;
  const bool kkt_ok = sol.residuals.primal <= opts.tol &&
                      sol.residuals.stationarity <= opts.tol &&
                      sol.residuals.complementarity <= opts.tol;
  sol.status = (gap_ok && kkt_ok) ? SolveStatus::optimal : SolveStatus::max_iter;
  return sol;
}

// Phase-1: find a strictly feasible point by relaxing every inequality by a
// shared slack s and driving s negative. `x0` needs only to satisfy the box
// bounds strictly and the equalities.
inline Solution find_strict_point(const ConvexProgram& P, const Eigen::VectorXd& x0,
                                  double tol = 1e-6) {
  ConvexProgram aug;
  aug.init(P.n + 1);
  const int si = P.n;
  aug.lower.head(P.n) = P.lower;
  aug.upper.head(P.n) = P.upper;
  aug.scale.head(P.n) = P.scale;

  double worst = 0.0;
  {
    const double v = P.max_violation(x0);
    worst = std::max(0.0, v);
  }
  const double s0 = worst + 1.0;
  aug.lower[si] = -2.0 * s0 - 1.0;
  aug.upper[si] = 2.0 * s0 + 1.0;
  aug.scale[si] = std::max(1.0, s0);

  AffineTerm obj;  // maximize -s
  obj.support = {si};
  obj.coeff = {-1.0};
  aug.objective_affine.push_back(obj);

  for (const auto& term : P.constraints) {
    SmoothTerm relaxed;
    relaxed.support = term.support;
    relaxed.support.push_back(si);
    relaxed.eval = [inner = term.eval, s = term.support.size()](const double* xs, double& val,
                                                                double* grad, double* hess) {
      std::vector<double> g_in(s), h_in(s * s);
      inner(xs, val, grad ? g_in.data() : nullptr, hess ? h_in.data() : nullptr);
      val -= xs[s];
      if (grad) {
        for (std::size_t i = 0; i < s; ++i) grad[i] = g_in[i];
        grad[s] = -1.0;
      }
      if (hess) {
        const std::size_t full = s + 1;
        for (std::size_t i = 0; i < full; ++i)
          for (std::size_t j = 0; j < full; ++j)
            hess[i * full + j] = (i < s && j < s) ? h_in[i * s + j] : 0.0;
      }
    };
    aug.constraints.push_back(std::move(relaxed));
  }
  for (const auto& term : P.affine_constraints) {
    AffineTerm relaxed = term;
    relaxed.support.push_back(si);
    relaxed.coeff.push_back(-1.0);
    aug.affine_constraints.push_back(std::move(relaxed));
  }
  aug.equalities = P.equalities;

  Eigen::VectorXd start(P.n + 1);
  start.head(P.n) = x0;
  start[si] = s0;
  Solution s = solve(aug, start, tol);
  Solution out;
  out.x = s.x.head(P.n);
  out.value = s.x[si];
  out.iterations = s.iterations;
  out.status = (s.x[si] < 0.0) ? SolveStatus::optimal : SolveStatus::infeasible;
  return out;
}

}  // namespace urismec
