#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "koopcar/vehicle.hpp"

namespace koopcar {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `name = value` store parsed from a config file. Keeps the source
/// line of every entry so downstream errors can point at it. `#` starts a
/// comment; blank lines are ignored.
class ConfigStore {
 public:
  static ConfigStore from_file(const std::string& path);
  static ConfigStore from_text(const std::string& text,
                               const std::string& origin = "<text>");

  struct Entry {
    std::string value;
    int line = 0;
  };

  const std::map<std::string, Entry>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, Entry> entries_;
  std::string origin_;
};

enum class Scale { desk, paper };

/// Every tunable of the pipeline with its embedded default. A config file
/// overrides individual keys; unknown or malformed keys fail with the file
/// line in the message.
struct AppConfig {
  // vehicle
  double vehicle_mass = 1300.0;
  double vehicle_yaw_inertia = 1600.0;
  double vehicle_l_front = 1.2;
  double vehicle_l_rear = 1.3;
  double vehicle_drag_coeff = 0.35;
  double vehicle_air_density = 1.225;
  double vehicle_frontal_area = 2.0;
  double vehicle_low_speed_guard = 0.5;
  bool vehicle_pacejka_cos_form = false;
  double vehicle_linearize_eps = 1e-5;

  // tires: peak value D = d_scale * static per-wheel load
  double tire_lat_b = 10.0, tire_lat_c = 1.9, tire_lat_d_scale = 1.2, tire_lat_e = 0.97;
  double tire_long_b = 12.0, tire_long_c = 1.65, tire_long_d_scale = 1.1, tire_long_e = 0.95;

  // sampling and datasets
  double sim_ts = 0.01;
  double gamma_energy = 5.0e5;
  int gamma_n_base = 200;
  int gamma_densify_factor = 3;
  int gamma_n_total = 0;  // 0 keeps the natural densified count
  double data_t_uncontrolled = 0.5;
  double data_t_controlled = 0.1;
  double data_kappa_r_max = 1.0;
  double data_delta_f_max_deg = 30.0;
  double data_reject_threshold = 8.3;

  // identification
  int id_n_lambda = 51;
  double id_zeta = 1e-12;
  double id_tau_min = 0.02;
  double id_tau_max = 5.0;
  bool id_greedy = false;
  int id_greedy_grid = 500;
  int id_k_neighbors = 8;
  double id_idw_power = 2.0;

  // held-out evaluation
  int eval_n_uncontrolled = 200;
  int eval_n_controlled = 200;

  // QP solver
  double qp_eps_abs = 1e-6;
  double qp_eps_rel = 1e-6;
  int qp_max_iters = 20000;
  double qp_rho = 1.0;
  double qp_sigma = 1e-6;
  double qp_alpha = 1.6;

  // MPC
  int mpc_horizon = 10;
  std::array<double, 3> mpc_qy = {1.0, 1.0, 1.0};
  std::array<double, 4> mpc_r = {0.0, 100.0, 30.0, 0.0};
  std::array<double, 3> mpc_s = {1.0e5, 1.0e5, 1.0e5};
  std::array<double, 3> mpc_y_min = {-25.0, -2.0, -2.0};
  std::array<double, 3> mpc_y_max = {25.0, 2.0, 2.0};
  std::array<double, 4> mpc_u_min = {0.0, -1.0, -0.45, 0.0};
  std::array<double, 4> mpc_u_max = {0.0, 1.0, 0.45, 0.0};
  std::array<double, 4> mpc_du_min = {0.0, -0.1, -0.8, 0.0};
  std::array<double, 4> mpc_du_max = {0.0, 0.1, 0.8, 0.0};
  std::array<double, 3> mpc_trim = {16.7, 0.0, 0.0};
  bool mpc_relinearize = false;  // baseline keeps the fixed trim when false

  // scenarios
  std::array<double, 3> drift_x0 = {2.0, 27.66, 0.0};
  std::array<double, 3> drift_ref = {16.7, 0.0, 0.0};
  double drift_t_sim = 10.0;
  std::array<double, 3> spiral_x0 = {16.7, 0.0, 0.0};
  double spiral_vx_ref = 16.7;
  double spiral_yaw_ramp_rate = 0.05;
  double spiral_yaw_max = 0.5;
  double spiral_t_sim = 10.0;
  bool spiral_zero_vy_weight = true;

  std::uint64_t seed = 1;

  /// Paper-scale preset: full trajectory count from the identification
  /// protocol, pinned to exactly 1078 starts.
  void apply_scale(Scale s);

  /// Override fields from a parsed store; throws ConfigError naming the
  /// offending line for unknown keys or unparsable values.
  void apply_store(const ConfigStore& store);

  /// Canonical `key = value` text of every field (sorted); round-trips
  /// through apply_store bit-exactly. Used as the dataset/model snapshot.
  std::string canonical_text() const;

  VehicleParams vehicle_params() const;
};

}  // namespace koopcar
