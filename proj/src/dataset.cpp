#include "koopcar/dataset.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "koopcar/binio.hpp"
#include "koopcar/csvio.hpp"
#include "koopcar/parallel.hpp"
#include "koopcar/rng.hpp"

namespace koopcar {

namespace {

constexpr double kGolden = 0.6180339887498949;  // frac(golden ratio)

struct UnitPoint {
  double x, y, z;
};

// Fibonacci lattice on the unit sphere, rotated by a seeded azimuth offset
// so distinct seeds give distinct (still quasi-uniform) samples.
UnitPoint fib_point(std::size_t i, std::size_t n, double azimuth_offset) {
  const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * M_PI * (std::fmod(static_cast<double>(i) * kGolden, 1.0)) +
                     azimuth_offset;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

VehicleState on_surface(const UnitPoint& s, double a_vel, double a_yaw) {
  return {a_vel * s.x, a_vel * s.y, a_yaw * s.z};
}

bool in_dense_region(const VehicleState& s) { return std::fabs(s.vy) > std::fabs(s.vx); }

}  // namespace

GammaSet sample_gamma(double energy, const VehicleParams& p, int n_base,
                      int densify_factor, std::uint64_t seed, int n_total) {
  if (!(energy > 0.0)) throw std::invalid_argument("sample_gamma: energy must be positive");
  if (n_base < 1) throw std::invalid_argument("sample_gamma: n_base must be >= 1");
  if (densify_factor < 1) {
    throw std::invalid_argument("sample_gamma: densify_factor must be >= 1");
  }

  const double a_vel = std::sqrt(2.0 * energy / p.mass);
  const double a_yaw = std::sqrt(2.0 * energy / p.yaw_inertia);

  Rng rng(seed);
  const double off0 = rng.uniform(0.0, 2.0 * M_PI);
  const double off1 = rng.uniform(0.0, 2.0 * M_PI);
  const double off2 = rng.uniform(0.0, 2.0 * M_PI);

  GammaSet out;
  out.energy = energy;
  const std::size_t nb = static_cast<std::size_t>(n_base);

  std::size_t base_in_region = 0;
  for (std::size_t i = 0; i < nb; ++i) {
    const VehicleState s = on_surface(fib_point(i, nb, off0), a_vel, a_yaw);
    out.points.push_back(s);
    if (in_dense_region(s)) ++base_in_region;
  }

  // Extra points only inside the dense region, drawn from a denser second
  // lattice, until the region holds densify_factor times its base count.
  const std::size_t target_extra = static_cast<std::size_t>(densify_factor - 1) * base_in_region;
  if (target_extra > 0) {
    const std::size_t stream_n = 4 * target_extra + nb;
    std::size_t added = 0;
    for (std::size_t i = 0; i < stream_n && added < target_extra; ++i) {
      const VehicleState s = on_surface(fib_point(i, stream_n, off1), a_vel, a_yaw);
      if (in_dense_region(s)) {
        out.points.push_back(s);
        ++added;
      }
    }
    if (added < target_extra) {
      throw std::runtime_error("sample_gamma: densification stream exhausted");
    }
  }

  if (n_total > 0) {
    const std::size_t nt = static_cast<std::size_t>(n_total);
    if (out.points.size() > nt) {
      out.points.resize(nt);
    } else {
      const std::size_t missing = nt - out.points.size();
      for (std::size_t i = 0; i < missing; ++i) {
        out.points.push_back(on_surface(fib_point(i, missing, off2), a_vel, a_yaw));
      }
    }
  }
  return out;
}

namespace {

std::size_t horizon_steps(double ts, double t_horizon) {
  if (!(ts > 0.0)) throw std::invalid_argument("rollout: ts must be positive");
  const double steps = t_horizon / ts;
  const auto n = static_cast<std::size_t>(std::llround(steps));
  if (std::fabs(static_cast<double>(n) * ts - t_horizon) > 1e-9) {
    throw std::invalid_argument("rollout: ts must divide t_horizon");
  }
  return n;
}

// Rolls one start forward; on a guard trip the trajectory keeps the valid
// prefix and is flagged truncated.
Trajectory rollout(const VehicleState& x0, const VehicleParams& p, double ts,
                   std::size_t n_steps, const std::vector<ControlInput>& inputs) {
  Trajectory traj;
  traj.states.reserve(n_steps + 1);
  traj.states.push_back(x0);
  for (std::size_t k = 0; k < n_steps; ++k) {
    try {
      const VehicleState next = step(traj.states.back(), inputs[k], p, ts);
      traj.states.push_back(next);
      traj.inputs.push_back(inputs[k]);
    } catch (const LowSpeedError&) {
      traj.truncated = true;
      break;
    }
  }
  return traj;
}

}  // namespace

Dataset generate_uncontrolled(const GammaSet& gamma, const VehicleParams& p, double ts,
                              double t_horizon) {
  const std::size_t n_steps = horizon_steps(ts, t_horizon);
  const std::vector<ControlInput> zeros(n_steps, ControlInput{});

  Dataset d;
  d.kind = DatasetKind::uncontrolled;
  d.ts = ts;
  d.trajectories.resize(gamma.points.size());
  parallel_for(gamma.points.size(), [&](std::size_t j) {
    d.trajectories[j] = rollout(gamma.points[j], p, ts, n_steps, zeros);
  });
  return d;
}

Dataset generate_controlled(const GammaSet& gamma, const VehicleParams& p, double ts,
                            double t_horizon, std::uint64_t seed, double kappa_r_max,
                            double delta_f_max) {
  const std::size_t n_steps = horizon_steps(ts, t_horizon);

  Dataset d;
  d.kind = DatasetKind::controlled;
  d.ts = ts;
  d.trajectories.resize(gamma.points.size());
  parallel_for(gamma.points.size(), [&](std::size_t j) {
    Rng rng = Rng::substream(seed, j);
    std::vector<ControlInput> inputs(n_steps);
    for (auto& u : inputs) {
      u.kappa_r = rng.uniform(-kappa_r_max, kappa_r_max);
      u.delta_f = rng.uniform(-delta_f_max, delta_f_max);
    }
    d.trajectories[j] = rollout(gamma.points[j], p, ts, n_steps, inputs);
  });
  return d;
}

Dataset reject_low_speed(const Dataset& d, double threshold) {
  Dataset out;
  out.kind = d.kind;
  out.ts = d.ts;
  out.config_snapshot = d.config_snapshot;
  for (const Trajectory& t : d.trajectories) {
    const VehicleState& s = t.x0();
    const double norm = std::sqrt(s.vx * s.vx + s.vy * s.vy + s.yaw_rate * s.yaw_rate);
    if (norm >= threshold) out.trajectories.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence. KCDS v1: header (magic, version, kind, Ts, count, config
// snapshot), then trajectory-major little-endian float64 payload.

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write("KCDS", 4);
  binio::write_pod<std::uint32_t>(out, 1u);
  binio::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d.kind));
  binio::write_pod<double>(out, d.ts);
  binio::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d.trajectories.size()));
  binio::write_string(out, d.config_snapshot);
  for (const Trajectory& t : d.trajectories) {
    binio::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.states.size()));
    binio::write_pod<std::uint8_t>(out, t.truncated ? 1 : 0);
    for (const VehicleState& s : t.states) {
      const double row[3] = {s.vx, s.vy, s.yaw_rate};
      binio::write_f64s(out, row, 3);
    }
    for (const ControlInput& u : t.inputs) {
      const double row[4] = {u.kappa_f, u.kappa_r, u.delta_f, u.delta_r};
      binio::write_f64s(out, row, 4);
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  binio::expect_magic(in, "KCDS", "dataset");
  const auto version = binio::read_pod<std::uint32_t>(in);
  if (version != 1) throw IoError("unsupported dataset version");
  Dataset d;
  d.kind = static_cast<DatasetKind>(binio::read_pod<std::uint32_t>(in));
  d.ts = binio::read_pod<double>(in);
  const auto n_traj = binio::read_pod<std::uint32_t>(in);
  d.config_snapshot = binio::read_string(in);
  d.trajectories.resize(n_traj);
  for (Trajectory& t : d.trajectories) {
    const auto n_states = binio::read_pod<std::uint32_t>(in);
    if (n_states == 0) throw IoError("corrupt dataset: empty trajectory");
    t.truncated = binio::read_pod<std::uint8_t>(in) != 0;
    t.states.resize(n_states);
    for (VehicleState& s : t.states) {
      double row[3];
      binio::read_f64s(in, row, 3);
      s = {row[0], row[1], row[2]};
    }
    t.inputs.resize(n_states - 1);
    for (ControlInput& u : t.inputs) {
      double row[4];
      binio::read_f64s(in, row, 4);
      u = {row[0], row[1], row[2], row[3]};
    }
  }
  return d;
}

void export_dataset_csv(const Dataset& d, const std::string& path) {
  CsvWriter csv(path);
  csv.header({"t", "vx", "vy", "yaw_rate", "kappa_f", "kappa_r", "delta_f", "delta_r",
              "traj_id"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t j = 0; j < d.trajectories.size(); ++j) {
    const Trajectory& t = d.trajectories[j];
    for (std::size_t k = 0; k < t.states.size(); ++k) {
      const VehicleState& s = t.states[k];
      const bool has_input = k < t.inputs.size();
      const ControlInput u = has_input ? t.inputs[k] : ControlInput{nan, nan, nan, nan};
      csv.row({static_cast<double>(k) * d.ts, s.vx, s.vy, s.yaw_rate, u.kappa_f, u.kappa_r,
               u.delta_f, u.delta_r, static_cast<double>(j)});
    }
  }
}

}  // namespace koopcar
