#pragma once

// Energy models: rotary-wing propulsion with thrust-to-weight ratio, its
// convex upper bound, user and server computing energy, and the
// bits-per-joule objective value.

#include <cmath>

#include <Eigen/Dense>

#include "urismec/channel.hpp"
#include "urismec/scenario.hpp"

namespace urismec {

// κ = √(1 + (4m‖a‖² + ρ²S²‖v‖⁴ + 4mρS F)/(4m²g²)) with F = ‖v‖ (a·v).
// A strongly negative a·v can push the radicand below zero; κ is clamped to
// zero there and the caller is flagged.
inline double thrust_ratio_kappa(const Eigen::Vector2d& v, const Eigen::Vector2d& a,
                                 const RotorParams& r, bool* clamped = nullptr) {
  if (clamped) *clamped = false;
  const double v2 = v.squaredNorm();
  const double F = std::sqrt(v2) * a.dot(v);
  const double num = 4.0 * r.m * a.squaredNorm() +
                     r.rho * r.rho * r.S_FP * r.S_FP * v2 * v2 +
                     4.0 * r.m * r.rho * r.S_FP * F;
  const double radicand = 1.0 + num / (4.0 * r.m * r.m * r.g * r.g);
  if (radicand < 0.0) {
    if (clamped) *clamped = true;
    return 0.0;
  }
  return std::sqrt(radicand);
}

// κ̂² = 1 + (2m‖a‖ + ρS‖v‖²)² / (2mg)²; κ̂ ≥ 1 and κ̂ ≥ κ.
inline double kappa_hat(const Eigen::Vector2d& v, const Eigen::Vector2d& a,
                        const RotorParams& r) {
  const double t = 2.0 * r.m * a.norm() + r.rho * r.S_FP * v.squaredNorm();
  return std::sqrt(1.0 + (t * t) / (4.0 * r.m * r.m * r.g * r.g));
}

// Blade profile + parasite terms shared by the exact model and its bound.
inline double propulsion_base_power(const Eigen::Vector2d& v, const RotorParams& r) {
  const double v2 = v.squaredNorm();
  const double vn = std::sqrt(v2);
  return r.P0 * (1.0 + 3.0 * v2 / (r.U_tip * r.U_tip)) +
         0.5 * r.d0 * r.rho * r.s_sol * r.A_disc * vn * vn * vn;
}

// Exact per-slot propulsion energy, Eq-style rotary-wing model.
inline double propulsion_energy(const Eigen::Vector2d& v, const Eigen::Vector2d& a,
                                const RotorParams& r, double delta_t,
                                bool* clamped = nullptr) {
  const double kappa = thrust_ratio_kappa(v, a, r, clamped);
  const double v2 = v.squaredNorm();
  const double w = v2 / (2.0 * r.v0 * r.v0);
  const double bracket = std::sqrt(kappa * kappa + w * w) - w;
  const double induced = r.P_i * kappa * std::sqrt(bracket);
  return delta_t * (propulsion_base_power(v, r) + induced);
}

// Convex upper bound: induced term replaced by P_i κ̂²; jointly convex in
// (v, a) and tight at hover.
inline double propulsion_energy_upper(const Eigen::Vector2d& v, const Eigen::Vector2d& a,
                                      const RotorParams& r, double delta_t) {
  const double kh = kappa_hat(v, a, r);
  return delta_t * (propulsion_base_power(v, r) + r.P_i * kh * kh);
}

// E_up with ‖a‖ replaced by √(‖a‖²+ε²): still an upper bound of the exact
// model and twice differentiable everywhere, which the Newton solver needs.
// Value, gradient and Hessian blocks with respect to (v, a).
struct EupDerivs {
  double val = 0.0;
  Eigen::Vector2d dv = Eigen::Vector2d::Zero();
  Eigen::Vector2d da = Eigen::Vector2d::Zero();
  Eigen::Matrix2d Hvv = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d Haa = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d Hva = Eigen::Matrix2d::Zero();
};

inline EupDerivs propulsion_upper_smooth(const Eigen::Vector2d& v, const Eigen::Vector2d& a,
                                         const RotorParams& r, double delta_t,
                                         double eps_a = 1e-4, bool with_derivs = true) {
  EupDerivs out;
  const double v2 = v.squaredNorm();
  const double vn = std::sqrt(v2);
  const double sa = std::sqrt(a.squaredNorm() + eps_a * eps_a);
  const double cpar = 0.5 * r.d0 * r.rho * r.s_sol * r.A_disc;
  const double wth = 2.0 * r.m * sa + r.rho * r.S_FP * v2;
  const double g2 = 4.0 * r.m * r.m * r.g * r.g;
  out.val = delta_t * (r.P0 * (1.0 + 3.0 * v2 / (r.U_tip * r.U_tip)) + cpar * vn * vn * vn +
                       r.P_i * (1.0 + wth * wth / g2));
  if (!with_derivs) return out;

  Eigen::Vector2d dEdv = (6.0 * r.P0 / (r.U_tip * r.U_tip)) * v;
  Eigen::Matrix2d Hvv = (6.0 * r.P0 / (r.U_tip * r.U_tip)) * Eigen::Matrix2d::Identity();
  if (vn > 1e-12) {
    dEdv += 3.0 * cpar * vn * v;
    Hvv += 3.0 * cpar * (vn * Eigen::Matrix2d::Identity() + v * v.transpose() / vn);
  }
  const Eigen::Vector2d wv = 2.0 * r.rho * r.S_FP * v;
  const Eigen::Vector2d wa = (2.0 * r.m / sa) * a;
  const Eigen::Matrix2d wvv = 2.0 * r.rho * r.S_FP * Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d waa =
      (2.0 * r.m) * (Eigen::Matrix2d::Identity() / sa - a * a.transpose() / (sa * sa * sa));
  const double cw = 2.0 * r.P_i / g2;
  dEdv += cw * wth * wv;
  out.da = delta_t * cw * wth * wa;
  Hvv += cw * (wv * wv.transpose() + wth * wvv);
  out.dv = delta_t * dEdv;
  out.Hvv = delta_t * Hvv;
  out.Haa = delta_t * cw * (wa * wa.transpose() + wth * waa);
  out.Hva = delta_t * cw * (wv * wa.transpose());
  return out;
}

// E^u_k = T_k P_k + φ_u χ_k l_l (f^l_k)²
inline double user_energy(int k, double l_local_bits, const ScenarioConfig& cfg) {
  return cfg.T_k[k] * cfg.P_k[k] +
         cfg.phi_u * cfg.chi_k[k] * l_local_bits * cfg.f_l_k[k] * cfg.f_l_k[k];
}

// E^s_k = φ_s χ_k l_o (f^o_k)²
inline double server_energy(int k, double l_offload_bits, double f_o,
                            const ScenarioConfig& cfg) {
  return cfg.phi_s * cfg.chi_k[k] * l_offload_bits * f_o * f_o;
}

// Per-user computing split and server share.
struct Allocation {
  Eigen::VectorXd l_o;  // offloaded bits
  Eigen::VectorXd l_l;  // local bits
  Eigen::VectorXd f_o;  // server CPU share, Hz

  double total_bits() const { return l_o.sum() + l_l.sum(); }
  double min_user_bits() const { return (l_o + l_l).minCoeff(); }
};

struct EnergyBreakdown {
  Eigen::VectorXd E_p;  // propulsion per slot, J (exact model)
  Eigen::VectorXd E_u;  // per-user energy, J
  Eigen::VectorXd E_s;  // per-user server energy, J
  double total_weighted = 0.0;
};

inline EnergyBreakdown energy_breakdown(const Allocation& alloc, const Trajectory& traj,
                                        const ScenarioConfig& cfg) {
  EnergyBreakdown out;
  const int N = traj.slots();
  out.E_p.resize(N);
  for (int n = 1; n <= N; ++n)
    out.E_p[n - 1] =
        propulsion_energy(traj.velocity(n), traj.acceleration(n), cfg.rotor, cfg.delta_t);
  out.E_u.resize(cfg.K);
  out.E_s.resize(cfg.K);
  for (int k = 0; k < cfg.K; ++k) {
    out.E_u[k] = user_energy(k, alloc.l_l[k], cfg);
    out.E_s[k] = server_energy(k, alloc.l_o[k], alloc.f_o[k], cfg);
  }
  out.total_weighted = cfg.alpha_w * out.E_p.sum() + out.E_u.sum() + out.E_s.sum();
  return out;
}

// Objective value Σ(l_o + l_l) / E_total with the exact propulsion model.
inline double energy_efficiency(const Allocation& alloc, const Trajectory& traj,
                                const ScenarioConfig& cfg) {
  return alloc.total_bits() / energy_breakdown(alloc, traj, cfg).total_weighted;
}

}  // namespace urismec
