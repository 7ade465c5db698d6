#pragma once

// LoS channel geometry for the cascaded ground-user → U-RIS → server link:
// URA steering phases, phase alignment, cascaded gain and achievable rates.
// All operations are pure functions of their inputs.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "urismec/scenario.hpp"

namespace urismec {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double wrap_phase(double theta) {
  double t = std::fmod(theta, kTwoPi);
  if (t < 0) t += kTwoPi;
  return t;
}

// Per-slot RIS element phases, wrapped to [0, 2π). Row n holds slot n+1.
struct PhaseConfig {
  Eigen::MatrixXd theta;  // N x M

  PhaseConfig() = default;
  PhaseConfig(int n_slots, int m_elements)
      : theta(Eigen::MatrixXd::Zero(n_slots, m_elements)) {}

  static PhaseConfig from_raw(const Eigen::MatrixXd& raw) {
    PhaseConfig p;
    p.theta = raw.unaryExpr([](double t) { return wrap_phase(t); });
    return p;
  }
};

// Horizontal waypoints q[0..N], one more than the slot count. Velocities are
// forward differences over slots 1..N; accelerations over slots 1..N-1 with
// the terminal slot unconstrained.
struct Trajectory {
  std::vector<Eigen::Vector2d> q;
  double delta_t = 1.0;

  int slots() const { return static_cast<int>(q.size()) - 1; }

  // v[n], n in 1..N (1-based slot index)
  Eigen::Vector2d velocity(int n) const {
    return (q[n] - q[n - 1]) / delta_t;
  }

  // a[n], n in 1..N; a[N] is defined as zero
  Eigen::Vector2d acceleration(int n) const {
    if (n >= slots()) return Eigen::Vector2d::Zero();
    return (q[n + 1] - 2.0 * q[n] + q[n - 1]) / (delta_t * delta_t);
  }
};

struct TrajectoryCheck {
  bool ok = true;
  std::string reason;
};

inline TrajectoryCheck check_trajectory(const Trajectory& traj, const ScenarioConfig& cfg,
                                        double rel_tol = 1e-6) {
  TrajectoryCheck res;
  const int N = traj.slots();
  if (N != cfg.N) return {false, "waypoint count does not match N+1"};
  if ((traj.q.front() - cfg.q0).norm() > rel_tol * (1.0 + cfg.r_d))
    return {false, "initial endpoint mismatch"};
  if ((traj.q.back() - cfg.qF).norm() > rel_tol * (1.0 + cfg.r_d))
    return {false, "final endpoint mismatch"};
  for (int i = 0; i <= N; ++i) {
    if (traj.q[i].norm() > cfg.r_d * (1.0 + rel_tol))
      return {false, "waypoint " + std::to_string(i) + " outside tether radius"};
  }
  for (int n = 1; n <= N; ++n) {
    if (traj.velocity(n).norm() > cfg.v_max * (1.0 + rel_tol))
      return {false, "speed limit exceeded in slot " + std::to_string(n)};
  }
  for (int n = 1; n < N; ++n) {
    if (traj.acceleration(n).norm() > cfg.a_max * (1.0 + rel_tol))
      return {false, "acceleration limit exceeded in slot " + std::to_string(n)};
  }
  return res;
}

// √(‖q−w‖² + H²)
inline double link_distance(const Eigen::Vector2d& q, const Eigen::Vector2d& w, double H) {
  return std::sqrt((q - w).squaredNorm() + H * H);
}

// Phase of each element of a_x ⊗ a_y for the link between the array at
// (q, H) and the ground node at w. Element (m_x, m_y) is stored row-major
// at index (m_x-1)*My + (m_y-1); element (1,1) carries phase zero.
inline Eigen::VectorXd steering_phases(const Eigen::Vector2d& q, const Eigen::Vector2d& w,
                                       const ScenarioConfig& cfg) {
  const double d_link = link_distance(q, w, cfg.H);
  const double cos_sin = (q.x() - w.x()) / d_link;  // cosφ sinφ_e
  const double sin_sin = (q.y() - w.y()) / d_link;  // sinφ sinφ_e
  const double unit = -kTwoPi / cfg.lambda_c * cfg.d_sep;
  Eigen::VectorXd phases(cfg.M());
  for (int mx = 0; mx < cfg.Mx; ++mx)
    for (int my = 0; my < cfg.My; ++my)
      phases[mx * cfg.My + my] = unit * (mx * cos_sin + my * sin_sin);
  return phases;
}

// Phase offsets ψ_i of the cascaded product (h_s)^H Θ h_k: the per-element
// difference between the G-U and U-S steering phases. Choosing θ_i = −ψ_i
// makes every multipath term coherent.
inline Eigen::VectorXd alignment_offsets(const Eigen::Vector2d& q, const Eigen::Vector2d& w_k,
                                         const Eigen::Vector2d& w_s, const ScenarioConfig& cfg) {
  return steering_phases(q, w_k, cfg) - steering_phases(q, w_s, cfg);
}

inline Eigen::VectorXd aligned_phases(const Eigen::VectorXd& psi, double omega = 0.0) {
  return psi.unaryExpr([omega](double p) { return wrap_phase(-p + omega); });
}

// τ = √(β₀ d^{−α_L}) for one hop.
inline double hop_amplitude(double dist, const ScenarioConfig& cfg) {
  return std::sqrt(cfg.beta0 * std::pow(dist, -cfg.alpha_L));
}

// (h_s)^H Θ h_k = τ_s τ_k Σ_i exp(j(θ_i + ψ_i)); |·| ≤ τ_s τ_k M.
inline std::complex<double> cascaded_gain(const Eigen::Vector2d& q,
                                          const Eigen::VectorXd& theta_slot,
                                          const Eigen::Vector2d& w_k,
                                          const ScenarioConfig& cfg) {
  const Eigen::VectorXd psi = alignment_offsets(q, w_k, cfg.w_s, cfg);
  std::complex<double> sum{0.0, 0.0};
  for (int i = 0; i < cfg.M(); ++i) {
    const double ang = theta_slot[i] + psi[i];
    sum += std::complex<double>(std::cos(ang), std::sin(ang));
  }
  const double tau_k = hop_amplitude(link_distance(q, w_k, cfg.H), cfg);
  const double tau_s = hop_amplitude(link_distance(q, cfg.w_s, cfg.H), cfg);
  return tau_s * tau_k * sum;
}

// Phase-optimal rate B log2(1 + ξ_k / (d_s^α d_k^α)), bits/s.
inline double aligned_rate(const Eigen::Vector2d& q, int k, const ScenarioConfig& cfg) {
  const double d_k = link_distance(q, cfg.w_k[k], cfg.H);
  const double d_s = link_distance(q, cfg.w_s, cfg.H);
  const double snr = cfg.xi(k) / (std::pow(d_s, cfg.alpha_L) * std::pow(d_k, cfg.alpha_L));
  return cfg.B * std::log2(1.0 + snr);
}

// Rate under an explicit phase configuration; zero when the slot is not
// assigned to user k.
inline double instantaneous_rate(double c_kn, const Eigen::Vector2d& q,
                                 const Eigen::VectorXd& theta_slot, int k,
                                 const ScenarioConfig& cfg) {
  if (c_kn == 0.0) return 0.0;
  const std::complex<double> g = cascaded_gain(q, theta_slot, cfg.w_k[k], cfg);
  const double snr = cfg.P_k[k] * std::norm(g) / cfg.sigma2;
  return c_kn * cfg.B * std::log2(1.0 + snr);
}

}  // namespace urismec
