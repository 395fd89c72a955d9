#include "koopcar/vehicle.hpp"

#include <cmath>

namespace koopcar {

VehicleParams VehicleParams::defaults() {
  VehicleParams p;
  const double fz_f = p.static_wheel_load_front();
  const double fz_r = p.static_wheel_load_rear();
  p.tire_front.lateral = {10.0, 1.9, 1.2 * fz_f, 0.97};
  p.tire_front.longitudinal = {12.0, 1.65, 1.1 * fz_f, 0.95};
  p.tire_rear.lateral = {10.0, 1.9, 1.2 * fz_r, 0.97};
  p.tire_rear.longitudinal = {12.0, 1.65, 1.1 * fz_r, 0.95};
  return p;
}

void VehicleParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("vehicle parameter must be positive: ") + name);
    }
  };
  positive(mass, "mass");
  positive(yaw_inertia, "yaw_inertia");
  positive(l_front, "l_front");
  positive(l_rear, "l_rear");
  positive(drag_coeff, "drag_coeff");
  positive(air_density, "air_density");
  positive(frontal_area, "frontal_area");
  positive(low_speed_guard, "low_speed_guard");
  for (const AxleTires* axle : {&tire_front, &tire_rear}) {
    for (const TireCoeffs* t : {&axle->longitudinal, &axle->lateral}) {
      positive(t->b, "tire B");
      positive(t->d, "tire D");
      if (!(t->c > 0.0 && t->c < 3.0)) throw std::invalid_argument("tire C outside (0, 3)");
      if (!(t->e <= 1.0)) throw std::invalid_argument("tire E above 1");
    }
  }
}

double magic_formula(double x, const TireCoeffs& c) {
  const double bx = c.b * x;
  return c.d * std::sin(c.c * std::atan(bx - c.e * (bx - std::atan(bx))));
}

double magic_formula_cos(double x, const TireCoeffs& c) {
  const double bx = c.b * x;
  return c.d * std::cos(c.c * std::atan(bx - c.e * (bx - std::atan(bx))));
}

namespace {

inline void check_guard(const VehicleState& s, const VehicleParams& p) {
  if (std::fabs(s.vx) < p.low_speed_guard) throw LowSpeedError(s.vx);
}

inline double tire(double x, const TireCoeffs& c, bool cos_form) {
  return cos_form ? magic_formula_cos(x, c) : magic_formula(x, c);
}

}  // namespace

std::array<WheelSlip, 4> slip_quantities(const VehicleState& s, const ControlInput& u,
                                         const VehicleParams& p) {
  check_guard(s, p);
  const double alpha_f = u.delta_f - std::atan((s.vy + p.l_front * s.yaw_rate) / s.vx);
  const double alpha_r = u.delta_r - std::atan((s.vy - p.l_rear * s.yaw_rate) / s.vx);
  return {WheelSlip{alpha_f, u.kappa_f}, WheelSlip{alpha_f, u.kappa_f},
          WheelSlip{alpha_r, u.kappa_r}, WheelSlip{alpha_r, u.kappa_r}};
}

Vec2 wheel_to_body(const Vec2& f, double delta) {
  const double cd = std::cos(delta);
  const double sd = std::sin(delta);
  return {cd * f.x - sd * f.y, sd * f.x + cd * f.y};
}

WheelForces tire_forces(const VehicleState& s, const ControlInput& u,
                        const VehicleParams& p) {
  const auto slips = slip_quantities(s, u, p);
  WheelForces out;
  for (int i = 0; i < 4; ++i) {
    const bool front = i < 2;
    const AxleTires& axle = front ? p.tire_front : p.tire_rear;
    out.steer[i] = front ? u.delta_f : u.delta_r;
    out.wheel_frame[i].x = tire(slips[i].kappa, axle.longitudinal, p.pacejka_cos_form);
    out.wheel_frame[i].y = tire(slips[i].alpha, axle.lateral, p.pacejka_cos_form);
    out.body_frame[i] = wheel_to_body(out.wheel_frame[i], out.steer[i]);
  }
  return out;
}

VehicleState derivatives(const VehicleState& s, const ControlInput& u,
                         const VehicleParams& p) {
  const WheelForces forces = tire_forces(s, u, p);

  double fx = 0.0;
  double fy = 0.0;
  double moment = 0.0;
  for (int i = 0; i < 4; ++i) {
    fx += forces.body_frame[i].x;
    fy += forces.body_frame[i].y;
    // r x F with wheel positions (+l_front, 0) and (-l_rear, 0)
    const double rx = i < 2 ? p.l_front : -p.l_rear;
    moment += rx * forces.body_frame[i].y;
  }

  const double speed = std::sqrt(s.vx * s.vx + s.vy * s.vy);
  const double drag = 0.5 * p.drag_coeff * p.air_density * p.frontal_area * speed;

  VehicleState d;
  d.vx = (fx - drag * s.vx) / p.mass + s.yaw_rate * s.vy;
  d.vy = (fy - drag * s.vy) / p.mass - s.yaw_rate * s.vx;
  d.yaw_rate = moment / p.yaw_inertia;
  return d;
}

VehicleState step(const VehicleState& s, const ControlInput& u, const VehicleParams& p,
                  double ts) {
  if (!(ts > 0.0)) throw std::invalid_argument("step: ts must be positive");

  auto add = [](const VehicleState& a, const VehicleState& b, double h) {
    return VehicleState{a.vx + h * b.vx, a.vy + h * b.vy, a.yaw_rate + h * b.yaw_rate};
  };

  const VehicleState k1 = derivatives(s, u, p);
  const VehicleState k2 = derivatives(add(s, k1, 0.5 * ts), u, p);
  const VehicleState k3 = derivatives(add(s, k2, 0.5 * ts), u, p);
  const VehicleState k4 = derivatives(add(s, k3, ts), u, p);

  VehicleState out;
  out.vx = s.vx + ts / 6.0 * (k1.vx + 2.0 * (k2.vx + k3.vx) + k4.vx);
  out.vy = s.vy + ts / 6.0 * (k1.vy + 2.0 * (k2.vy + k3.vy) + k4.vy);
  out.yaw_rate =
      s.yaw_rate + ts / 6.0 * (k1.yaw_rate + 2.0 * (k2.yaw_rate + k3.yaw_rate) + k4.yaw_rate);
  return out;
}

Linearization linearize(const VehicleState& s_bar, const ControlInput& u_bar,
                        const VehicleParams& p, double ts, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("linearize: eps must be positive");

  const Eigen::Vector3d x0 = to_vec(s_bar);
  const Eigen::Vector4d u0 = to_vec(u_bar);

  Linearization lin;
  for (int j = 0; j < 3; ++j) {
    Eigen::Vector3d xp = x0, xm = x0;
    xp[j] += eps;
    xm[j] -= eps;
    const Eigen::Vector3d fp = to_vec(step(to_state(xp), u_bar, p, ts));
    const Eigen::Vector3d fm = to_vec(step(to_state(xm), u_bar, p, ts));
    lin.a.col(j) = (fp - fm) / (2.0 * eps);
  }
  for (int j = 0; j < 4; ++j) {
    Eigen::Vector4d up = u0, um = u0;
    up[j] += eps;
    um[j] -= eps;
    const Eigen::Vector3d fp = to_vec(step(s_bar, to_input(up), p, ts));
    const Eigen::Vector3d fm = to_vec(step(s_bar, to_input(um), p, ts));
    lin.b.col(j) = (fp - fm) / (2.0 * eps);
  }
  const Eigen::Vector3d f0 = to_vec(step(s_bar, u_bar, p, ts));
  lin.c = f0 - lin.a * x0 - lin.b * u0;
  return lin;
}

}  // namespace koopcar
