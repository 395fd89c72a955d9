#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "koopcar/vehicle.hpp"

namespace koopcar {

/// Trajectory start points sampled on a constant-kinetic-energy surface of
/// the (vx, vy, yaw_rate) space.
struct GammaSet {
  std::vector<VehicleState> points;
  double energy = 0.0;  // J
};

/// Quasi-uniform sample of the ellipsoid
///   1/2 m (vx^2 + vy^2) + 1/2 Jzz yaw_rate^2 = energy
/// via a seeded Fibonacci lattice, with sampling density multiplied by
/// `densify_factor` where |vy| > |vx| (sideways sliding, sparsely visited by
/// rollouts). `n_total > 0` trims or extends the result to an exact count.
GammaSet sample_gamma(double energy, const VehicleParams& p, int n_base,
                      int densify_factor, std::uint64_t seed, int n_total = 0);

struct Trajectory {
  std::vector<VehicleState> states;  // K+1 samples
  std::vector<ControlInput> inputs;  // K samples
  bool truncated = false;            // low-speed guard tripped mid-rollout

  const VehicleState& x0() const { return states.front(); }
  std::size_t steps() const { return inputs.size(); }
};

enum class DatasetKind : std::uint32_t { uncontrolled = 0, controlled = 1 };

struct Dataset {
  std::vector<Trajectory> trajectories;
  DatasetKind kind = DatasetKind::uncontrolled;
  double ts = 0.01;
  std::string config_snapshot;  // resolved generation config, canonical text
};

/// Zero-input rollouts of length t_horizon from every start point.
/// Trajectories that trip the low-speed guard are truncated at the last
/// valid sample and flagged, not dropped.
Dataset generate_uncontrolled(const GammaSet& gamma, const VehicleParams& p, double ts,
                              double t_horizon);

/// Rollouts with inputs redrawn every step:
/// kappa_r ~ U[-kappa_r_max, kappa_r_max], delta_f ~ U[-delta_f_max, delta_f_max],
/// kappa_f = delta_r = 0. Bit-reproducible per seed.
Dataset generate_controlled(const GammaSet& gamma, const VehicleParams& p, double ts,
                            double t_horizon, std::uint64_t seed, double kappa_r_max = 1.0,
                            double delta_f_max = 30.0 * M_PI / 180.0);

/// Drops trajectories whose start has ||x0||_2 below the threshold (the
/// evaluation-set rejection rule; the tire model is unreliable down there).
Dataset reject_low_speed(const Dataset& d, double threshold = 8.3);

void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Columns: t, vx, vy, yaw_rate, kappa_f, kappa_r, delta_f, delta_r, traj_id.
/// The final sample of each trajectory has no input; its input cells are nan.
void export_dataset_csv(const Dataset& d, const std::string& path);

}  // namespace koopcar
