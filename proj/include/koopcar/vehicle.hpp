#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>

namespace koopcar {

/// Thrown when an operation needs slip angles but |vx| is below the guard.
/// The tire model is ill-defined at low longitudinal speeds; failing loudly
/// beats returning NaN.
class LowSpeedError : public std::runtime_error {
 public:
  explicit LowSpeedError(double vx)
      : std::runtime_error("tire model undefined: |vx| below low-speed guard"),
        vx_(vx) {}
  double vx() const { return vx_; }

 private:
  double vx_;
};

/// Planar single-track state: longitudinal velocity, lateral velocity
/// and yaw rate, in body-fixed coordinates.
struct VehicleState {
  double vx = 0.0;        // m/s
  double vy = 0.0;        // m/s
  double yaw_rate = 0.0;  // rad/s
};

/// Input slots: front/rear longitudinal slip ratio, front/rear steering.
/// Slip ratios are inputs to this model (no wheel spin dynamics).
struct ControlInput {
  double kappa_f = 0.0;  // [-1, 1]
  double kappa_r = 0.0;  // [-1, 1]
  double delta_f = 0.0;  // rad
  double delta_r = 0.0;  // rad

  double operator[](int i) const {
    const double* p[4] = {&kappa_f, &kappa_r, &delta_f, &delta_r};
    return *p[i];
  }
};

/// Magic-formula coefficient set for one force direction of one tire.
struct TireCoeffs {
  double b = 10.0;    // stiffness factor
  double c = 1.9;     // shape factor
  double d = 4000.0;  // peak value, N
  double e = 0.97;    // curvature factor
};

/// Longitudinal + lateral coefficient pair for one axle's tires.
struct AxleTires {
  TireCoeffs longitudinal;
  TireCoeffs lateral;
};

struct VehicleParams {
  double mass = 1300.0;         // kg
  double yaw_inertia = 1600.0;  // kg m^2
  double l_front = 1.2;         // CG to front axle, m
  double l_rear = 1.3;          // CG to rear axle, m
  double drag_coeff = 0.35;
  double air_density = 1.225;   // kg/m^3
  double frontal_area = 2.0;    // m^2
  AxleTires tire_front;
  AxleTires tire_rear;
  double low_speed_guard = 0.5;  // m/s
  // Evaluate the magic formula as printed with cos instead of sin
  // (comparison switch; the cos variant yields nonzero force at zero slip).
  bool pacejka_cos_form = false;

  double wheelbase() const { return l_front + l_rear; }
  // Static vertical load of one wheel; the axle carries the fraction of the
  // weight proportional to the opposite axle distance, split over two wheels.
  double static_wheel_load_front() const {
    return mass * 9.81 * l_rear / (2.0 * wheelbase());
  }
  double static_wheel_load_rear() const {
    return mass * 9.81 * l_front / (2.0 * wheelbase());
  }

  /// Default parameter set with tire peak values scaled from static loads
  /// (lateral 1.2x, longitudinal 1.1x per wheel).
  static VehicleParams defaults();

  void validate() const;  // throws std::invalid_argument on nonphysical values
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct WheelSlip {
  double alpha = 0.0;  // sideslip angle, rad
  double kappa = 0.0;  // longitudinal slip ratio
};

/// Per-wheel tire forces in both frames. Wheel order: front-left,
/// front-right, rear-left, rear-right (left/right coincident in this model).
struct WheelForces {
  std::array<Vec2, 4> wheel_frame;
  std::array<Vec2, 4> body_frame;
  std::array<double, 4> steer{};
};

/// F = D sin(C atan(Bx - E(Bx - atan(Bx)))). Odd in x, |F| <= D.
double magic_formula(double x, const TireCoeffs& c);

/// The formula as printed in some references, with cos in place of sin.
/// Kept for A/B comparison only; gives F(0) != 0.
double magic_formula_cos(double x, const TireCoeffs& c);

/// Per-wheel sideslip angles and slip ratios. Throws LowSpeedError when
/// |vx| < p.low_speed_guard.
std::array<WheelSlip, 4> slip_quantities(const VehicleState& s, const ControlInput& u,
                                         const VehicleParams& p);

/// Rotate a wheel-frame force pair into the body frame by the wheel's
/// steering angle.
Vec2 wheel_to_body(const Vec2& f, double delta);

/// All four wheels' magic-formula forces, wheel and body frame.
WheelForces tire_forces(const VehicleState& s, const ControlInput& u,
                        const VehicleParams& p);

/// Continuous-time state derivative: rigid-body Newton-Euler equations with
/// tire forces, Coriolis coupling and aerodynamic drag.
VehicleState derivatives(const VehicleState& s, const ControlInput& u,
                         const VehicleParams& p);

/// One classical RK4 step of size ts. This discrete map is the plant used
/// for data generation and closed-loop simulation.
VehicleState step(const VehicleState& s, const ControlInput& u, const VehicleParams& p,
                  double ts);

/// Affine discrete-time model x+ ~ A x + B u + c around (s_bar, u_bar).
struct Linearization {
  Eigen::Matrix3d a;
  Eigen::Matrix<double, 3, 4> b;
  Eigen::Vector3d c;
};

/// Central-difference Jacobians of `step` plus the affine offset making the
/// prediction exact at the expansion point.
Linearization linearize(const VehicleState& s_bar, const ControlInput& u_bar,
                        const VehicleParams& p, double ts, double eps = 1e-5);

inline Eigen::Vector3d to_vec(const VehicleState& s) {
  return {s.vx, s.vy, s.yaw_rate};
}
inline VehicleState to_state(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
inline Eigen::Vector4d to_vec(const ControlInput& u) {
  return {u.kappa_f, u.kappa_r, u.delta_f, u.delta_r};
}
inline ControlInput to_input(const Eigen::Vector4d& v) {
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace koopcar
