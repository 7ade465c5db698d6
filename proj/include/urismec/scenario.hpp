#pragma once

// Scenario parameter set for the U-RIS assisted MEC system: physical layout,
// channel constants, per-user computation demands, energy coefficients and
// rotor data. Values are SI throughout (Hz, W, J, m, s, bits).

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace urismec {

class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

// Rotary-wing power model coefficients. The reference airframe is a 2 kg
// craft (P0 = 79.86 W, P_i = 88.63 W, v0 = 4.03 m/s, S_FP = 0.0151 m²);
// rotor_for_mass() scales these to other takeoff masses.
struct RotorParams {
  double m = 4.0;        // total mass, kg
  double P0 = 0.0;       // blade profile power, W
  double P_i = 0.0;      // induced power, W
  double U_tip = 120.0;  // rotor tip speed, m/s
  double d0 = 0.6;       // fuselage drag ratio
  double rho = 1.225;    // air density, kg/m³
  double s_sol = 0.05;   // rotor solidity
  double A_disc = 0.503; // rotor disc area, m²
  double S_FP = 0.0;     // fuselage equivalent flat plate area, m²
  double v0 = 0.0;       // mean hover induced velocity, m/s
  double g = 9.8;        // gravity, m/s²
};

// Profile and induced power scale with weight^{3/2}, flat-plate area linearly
// with mass, hover induced velocity with the square root of disc loading.
inline RotorParams rotor_for_mass(double mass_kg) {
  RotorParams r;
  const double ratio = mass_kg / 2.0;
  r.m = mass_kg;
  r.P0 = 79.86 * std::pow(ratio, 1.5);
  r.P_i = 88.63 * std::pow(ratio, 1.5);
  r.S_FP = 0.0151 * ratio;
  r.v0 = 4.03 * std::sqrt(ratio);
  return r;
}

struct ScenarioConfig {
  int K = 0;             // users
  int N = 0;             // time slots
  double delta_t = 1.0;  // slot length, s
  double H = 100.0;      // flight altitude, m

  Eigen::Vector2d q0{0, 0};  // initial horizontal position, m
  Eigen::Vector2d qF{0, 0};  // final horizontal position, m
  double r_d = 700.0;        // tether flight radius, m
  double v_max = 50.0;       // max speed, m/s
  double a_max = 30.0;       // max acceleration, m/s²

  Eigen::Vector2d w_s{0, 0};           // server position, m
  std::vector<Eigen::Vector2d> w_k;    // user positions, m

  double B = 1e6;        // bandwidth, Hz
  double sigma2 = 1e-19; // noise power, W
  double beta0 = 1e-4;   // channel gain at 1 m
  double alpha_L = 2.0;  // LoS path-loss exponent

  int Mx = 25;             // URA x elements
  int My = 40;             // URA y elements
  double lambda_c = 0.125; // carrier wavelength, m
  double d_sep = 0.0625;   // element separation, m

  Eigen::VectorXd P_k;    // user transmit power, W
  Eigen::VectorXd chi_k;  // CPU cycles per bit
  Eigen::VectorXd f_l_k;  // local CPU frequency, Hz
  Eigen::VectorXd T_k;    // tolerable latency, s
  Eigen::VectorXd I_k;    // minimum offload, bits

  double C_o = 3e9;      // server CPU cap, Hz
  double phi_u = 1e-8;   // user switched capacitance
  double phi_s = 1e-5;   // server switched capacitance
  double alpha_w = 0.02; // flight-energy weight

  RotorParams rotor;

  int M() const { return Mx * My; }
  double mission_time() const { return N * delta_t; }

  // P_k β₀² M² / σ², the cascaded-link SNR numerator of user k.
  double xi(int k) const {
    const double m2 = static_cast<double>(M()) * static_cast<double>(M());
    return P_k[k] * beta0 * beta0 * m2 / sigma2;
  }

  void validate() const;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ScenarioError(msg);
}

}  // namespace detail

inline void ScenarioConfig::validate() const {
  using detail::require;
  require(K >= 1, "K must be >= 1");
  require(N >= 2, "N must be >= 2");
  require(delta_t > 0, "delta_t must be > 0");
  require(H > 0, "H must be > 0");
  require(r_d > 0, "r_d must be > 0");
  require(v_max > 0, "v_max must be > 0");
  require(a_max > 0, "a_max must be > 0");
  require(B > 0, "B must be > 0");
  require(sigma2 > 0, "sigma2 must be > 0");
  require(beta0 > 0, "beta0 must be > 0");
  require(alpha_L > 0, "alpha_L must be > 0");
  require(Mx >= 1 && My >= 1, "Mx and My must be >= 1");
  require(lambda_c > 0, "lambda_c must be > 0");
  require(d_sep > 0, "d_sep must be > 0");
  require(C_o > 0, "C_o must be > 0");
  require(phi_u > 0, "phi_u must be > 0");
  require(phi_s > 0, "phi_s must be > 0");
  require(alpha_w > 0, "alpha_w must be > 0");

  require(rotor.m > 0, "rotor.m must be > 0");
  require(rotor.P0 > 0, "rotor.P0 must be > 0");
  require(rotor.P_i > 0, "rotor.P_i must be > 0");
  require(rotor.U_tip > 0, "rotor.U_tip must be > 0");
  require(rotor.d0 > 0, "rotor.d0 must be > 0");
  require(rotor.rho > 0, "rotor.rho must be > 0");
  require(rotor.s_sol > 0, "rotor.s_sol must be > 0");
  require(rotor.A_disc > 0, "rotor.A_disc must be > 0");
  require(rotor.S_FP > 0, "rotor.S_FP must be > 0");
  require(rotor.v0 > 0, "rotor.v0 must be > 0");
  require(rotor.g > 0, "rotor.g must be > 0");

  require(static_cast<int>(w_k.size()) == K, "w_k must have K entries");
  const auto check_vec = [&](const Eigen::VectorXd& v, const char* name) {
    require(v.size() == K, std::string(name) + " must have K entries");
  };
  check_vec(P_k, "P_k");
  check_vec(chi_k, "chi_k");
  check_vec(f_l_k, "f_l_k");
  check_vec(T_k, "T_k");
  check_vec(I_k, "I_k");
  for (int k = 0; k < K; ++k) {
    require(P_k[k] > 0, "P_k must be > 0 (user " + std::to_string(k + 1) + ")");
    require(chi_k[k] > 0, "chi_k must be > 0 (user " + std::to_string(k + 1) + ")");
    require(f_l_k[k] > 0, "f_l_k must be > 0 (user " + std::to_string(k + 1) + ")");
    require(T_k[k] > 0, "T_k must be > 0 (user " + std::to_string(k + 1) + ")");
    require(I_k[k] > 0, "I_k must be > 0 (user " + std::to_string(k + 1) + ")");
    // Some server share in (0, C_o] must leave f·T_k − I_k·χ_k positive,
    // otherwise the scheduling rate floor has no meaningful value.
    require(C_o * T_k[k] - I_k[k] * chi_k[k] > 0,
            "C_o*T_k - I_k*chi_k must be > 0 (user " + std::to_string(k + 1) + ")");
  }

  require(q0.norm() <= r_d, "q0 outside tether radius");
  require(qF.norm() <= r_d, "qF outside tether radius");
  require((qF - q0).norm() <= N * delta_t * v_max, "endpoints unreachable");
}

// Paper-style default: 4 users spread on the disc opposite the server,
// 70 s mission, 4 kg U-RIS airframe.
inline ScenarioConfig default_scenario() {
  ScenarioConfig cfg;
  cfg.K = 4;
  cfg.N = 70;
  cfg.delta_t = 1.0;
  cfg.H = 100.0;
  cfg.q0 = {-600.0, 50.0};
  cfg.qF = {600.0, 50.0};
  cfg.r_d = 700.0;
  cfg.v_max = 50.0;
  cfg.a_max = 30.0;
  cfg.w_s = {0.0, 800.0};
  cfg.w_k = {{-450.0, -100.0}, {-150.0, -350.0}, {150.0, -100.0}, {450.0, -350.0}};
  cfg.B = 1e6;
  cfg.sigma2 = 1e-19;  // -160 dBm
  cfg.beta0 = 1e-4;    // -40 dB
  cfg.alpha_L = 2.0;
  cfg.Mx = 25;
  cfg.My = 40;
  cfg.lambda_c = 0.125;
  cfg.d_sep = 0.0625;
  cfg.P_k = Eigen::VectorXd::Constant(4, 0.1);
  cfg.chi_k = Eigen::VectorXd::Constant(4, 1e3);
  cfg.f_l_k = Eigen::VectorXd::Constant(4, 1e8);
  cfg.T_k = Eigen::VectorXd::Constant(4, 30.0);
  cfg.I_k = Eigen::VectorXd::Constant(4, 1e6);
  cfg.C_o = 3e9;
  cfg.phi_u = 1e-8;
  cfg.phi_s = 1e-5;
  cfg.alpha_w = 0.02;
  cfg.rotor = rotor_for_mass(4.0);  // 2 kg UAV + 2 kg RIS
  return cfg;
}

namespace detail {

inline double get_number(const nlohmann::json& doc, const std::string& key) {
  if (!doc.contains(key)) throw ScenarioError("missing field: " + key);
  const auto& v = doc.at(key);
  if (!v.is_number()) throw ScenarioError("field is not a number: " + key);
  return v.get<double>();
}

inline int get_int(const nlohmann::json& doc, const std::string& key) {
  const double x = get_number(doc, key);
  if (x != std::floor(x)) throw ScenarioError("field is not an integer: " + key);
  return static_cast<int>(x);
}

inline Eigen::Vector2d get_point(const nlohmann::json& doc, const std::string& key) {
  if (!doc.contains(key)) throw ScenarioError("missing field: " + key);
  const auto& v = doc.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ScenarioError("field is not a 2-point: " + key);
  return {v[0].get<double>(), v[1].get<double>()};
}

inline Eigen::VectorXd get_array(const nlohmann::json& doc, const std::string& key, int n) {
  if (!doc.contains(key)) throw ScenarioError("missing field: " + key);
  const auto& v = doc.at(key);
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    throw ScenarioError("field must be an array of K numbers: " + key);
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    if (!v[i].is_number()) throw ScenarioError("field must be numeric: " + key);
    out[i] = v[i].get<double>();
  }
  return out;
}

inline const std::vector<std::string>& scenario_keys() {
  static const std::vector<std::string> keys = {
      "K", "N", "delta_t", "H", "q0", "qF", "r_d", "v_max", "a_max",
      "w_s", "w_k", "B", "sigma2", "beta0", "alpha_L", "Mx", "My",
      "lambda_c", "d_sep", "P_k", "chi_k", "f_l_k", "T_k", "I_k",
      "C_o", "phi_u", "phi_s", "alpha_w", "rotor"};
  return keys;
}

inline const std::vector<std::string>& rotor_keys() {
  static const std::vector<std::string> keys = {
      "m", "P0", "P_i", "U_tip", "d0", "rho", "s_sol",
      "A_disc", "S_FP", "v0", "g"};
  return keys;
}

inline void reject_unknown(const nlohmann::json& doc,
                           const std::vector<std::string>& allowed,
                           const std::string& where) {
  for (const auto& item : doc.items()) {
    bool known = false;
    for (const auto& k : allowed)
      if (item.key() == k) { known = true; break; }
    if (!known) throw ScenarioError("unknown field" + where + ": " + item.key());
  }
}

}  // namespace detail

inline ScenarioConfig load_scenario(const nlohmann::json& doc) {
  using namespace detail;
  if (!doc.is_object()) throw ScenarioError("scenario document must be a JSON object");
  reject_unknown(doc, scenario_keys(), "");

  ScenarioConfig cfg;
  cfg.K = get_int(doc, "K");
  cfg.N = get_int(doc, "N");
  cfg.delta_t = get_number(doc, "delta_t");
  cfg.H = get_number(doc, "H");
  cfg.q0 = get_point(doc, "q0");
  cfg.qF = get_point(doc, "qF");
  cfg.r_d = get_number(doc, "r_d");
  cfg.v_max = get_number(doc, "v_max");
  cfg.a_max = get_number(doc, "a_max");
  cfg.w_s = get_point(doc, "w_s");

  if (!doc.contains("w_k")) throw ScenarioError("missing field: w_k");
  const auto& wk = doc.at("w_k");
  if (!wk.is_array() || static_cast<int>(wk.size()) != cfg.K)
    throw ScenarioError("w_k must be an array of K 2-points");
  for (int k = 0; k < cfg.K; ++k) {
    const auto& p = wk[k];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw ScenarioError("w_k entries must be 2-points");
    cfg.w_k.push_back({p[0].get<double>(), p[1].get<double>()});
  }

  cfg.B = get_number(doc, "B");
  cfg.sigma2 = get_number(doc, "sigma2");
  cfg.beta0 = get_number(doc, "beta0");
  cfg.alpha_L = get_number(doc, "alpha_L");
  cfg.Mx = get_int(doc, "Mx");
  cfg.My = get_int(doc, "My");
  cfg.lambda_c = get_number(doc, "lambda_c");
  cfg.d_sep = get_number(doc, "d_sep");
  cfg.P_k = get_array(doc, "P_k", cfg.K);
  cfg.chi_k = get_array(doc, "chi_k", cfg.K);
  cfg.f_l_k = get_array(doc, "f_l_k", cfg.K);
  cfg.T_k = get_array(doc, "T_k", cfg.K);
  cfg.I_k = get_array(doc, "I_k", cfg.K);
  cfg.C_o = get_number(doc, "C_o");
  cfg.phi_u = get_number(doc, "phi_u");
  cfg.phi_s = get_number(doc, "phi_s");
  cfg.alpha_w = get_number(doc, "alpha_w");

  if (!doc.contains("rotor")) throw ScenarioError("missing field: rotor");
  const auto& rj = doc.at("rotor");
  if (!rj.is_object()) throw ScenarioError("rotor must be an object");
  reject_unknown(rj, rotor_keys(), " in rotor");
  cfg.rotor.m = get_number(rj, "m");
  cfg.rotor.P0 = get_number(rj, "P0");
  cfg.rotor.P_i = get_number(rj, "P_i");
  cfg.rotor.U_tip = get_number(rj, "U_tip");
  cfg.rotor.d0 = get_number(rj, "d0");
  cfg.rotor.rho = get_number(rj, "rho");
  cfg.rotor.s_sol = get_number(rj, "s_sol");
  cfg.rotor.A_disc = get_number(rj, "A_disc");
  cfg.rotor.S_FP = get_number(rj, "S_FP");
  cfg.rotor.v0 = get_number(rj, "v0");
  cfg.rotor.g = get_number(rj, "g");

  cfg.validate();
  return cfg;
}

inline ScenarioConfig load_scenario_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(std::string("scenario parse failure: ") + e.what());
  }
  return load_scenario(doc);
}

inline nlohmann::ordered_json to_document(const ScenarioConfig& cfg) {
  nlohmann::ordered_json doc;
  doc["K"] = cfg.K;
  doc["N"] = cfg.N;
  doc["delta_t"] = cfg.delta_t;
  doc["H"] = cfg.H;
  doc["q0"] = {cfg.q0.x(), cfg.q0.y()};
  doc["qF"] = {cfg.qF.x(), cfg.qF.y()};
  doc["r_d"] = cfg.r_d;
  doc["v_max"] = cfg.v_max;
  doc["a_max"] = cfg.a_max;
  doc["w_s"] = {cfg.w_s.x(), cfg.w_s.y()};
  auto wk = nlohmann::ordered_json::array();
  for (const auto& w : cfg.w_k) wk.push_back({w.x(), w.y()});
  doc["w_k"] = wk;
  doc["B"] = cfg.B;
  doc["sigma2"] = cfg.sigma2;
  doc["beta0"] = cfg.beta0;
  doc["alpha_L"] = cfg.alpha_L;
  doc["Mx"] = cfg.Mx;
  doc["My"] = cfg.My;
  doc["lambda_c"] = cfg.lambda_c;
  doc["d_sep"] = cfg.d_sep;
  const auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  doc["P_k"] = vec(cfg.P_k);
  doc["chi_k"] = vec(cfg.chi_k);
  doc["f_l_k"] = vec(cfg.f_l_k);
  doc["T_k"] = vec(cfg.T_k);
  doc["I_k"] = vec(cfg.I_k);
  doc["C_o"] = cfg.C_o;
  doc["phi_u"] = cfg.phi_u;
  doc["phi_s"] = cfg.phi_s;
  doc["alpha_w"] = cfg.alpha_w;
  nlohmann::ordered_json rj;
  rj["m"] = cfg.rotor.m;
  rj["P0"] = cfg.rotor.P0;
  rj["P_i"] = cfg.rotor.P_i;
  rj["U_tip"] = cfg.rotor.U_tip;
  rj["d0"] = cfg.rotor.d0;
  rj["rho"] = cfg.rotor.rho;
  rj["s_sol"] = cfg.rotor.s_sol;
  rj["A_disc"] = cfg.rotor.A_disc;
  rj["S_FP"] = cfg.rotor.S_FP;
  rj["v0"] = cfg.rotor.v0;
  rj["g"] = cfg.rotor.g;
  doc["rotor"] = rj;
  return doc;
}

}  // namespace urismec
