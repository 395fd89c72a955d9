#include "koopcar/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace koopcar {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ConfigStore ConfigStore::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str(), path);
}

ConfigStore ConfigStore::from_text(const std::string& text, const std::string& origin) {
  ConfigStore store;
  store.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected `name = value`, got: " + stripped);
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    store.entries_[key] = Entry{value, lineno};
  }
  return store;
}

// ---------------------------------------------------------------------------
// Field registry: one table drives parsing, canonical serialization and
// unknown-key diagnostics.

namespace {

struct FieldRef {
  enum Kind { F64, I32, U64, BOOL, VEC3, VEC4 } kind;
  void* ptr;
};

using FieldMap = std::vector<std::pair<std::string, FieldRef>>;

FieldMap field_map(AppConfig& c) {
  FieldMap m;
  auto f = [&](const char* name, double& v) { m.push_back({name, {FieldRef::F64, &v}}); };
  auto i = [&](const char* name, int& v) { m.push_back({name, {FieldRef::I32, &v}}); };
  auto u = [&](const char* name, std::uint64_t& v) { m.push_back({name, {FieldRef::U64, &v}}); };
  auto b = [&](const char* name, bool& v) { m.push_back({name, {FieldRef::BOOL, &v}}); };
  auto v3 = [&](const char* name, std::array<double, 3>& v) {
    m.push_back({name, {FieldRef::VEC3, &v}});
  };
  auto v4 = [&](const char* name, std::array<double, 4>& v) {
    m.push_back({name, {FieldRef::VEC4, &v}});
  };

  f("vehicle.mass", c.vehicle_mass);
  f("vehicle.yaw_inertia", c.vehicle_yaw_inertia);
  f("vehicle.l_front", c.vehicle_l_front);
  f("vehicle.l_rear", c.vehicle_l_rear);
  f("vehicle.drag_coeff", c.vehicle_drag_coeff);
  f("vehicle.air_density", c.vehicle_air_density);
  f("vehicle.frontal_area", c.vehicle_frontal_area);
  f("vehicle.low_speed_guard", c.vehicle_low_speed_guard);
  b("vehicle.pacejka_cos_form", c.vehicle_pacejka_cos_form);
  f("vehicle.linearize_eps", c.vehicle_linearize_eps);

  f("tire.lateral.b", c.tire_lat_b);
  f("tire.lateral.c", c.tire_lat_c);
  f("tire.lateral.d_scale", c.tire_lat_d_scale);
  f("tire.lateral.e", c.tire_lat_e);
  f("tire.longitudinal.b", c.tire_long_b);
  f("tire.longitudinal.c", c.tire_long_c);
  f("tire.longitudinal.d_scale", c.tire_long_d_scale);
  f("tire.longitudinal.e", c.tire_long_e);

  f("sim.ts", c.sim_ts);
  f("gamma.energy", c.gamma_energy);
  i("gamma.n_base", c.gamma_n_base);
  i("gamma.densify_factor", c.gamma_densify_factor);
  i("gamma.n_total", c.gamma_n_total);
  f("data.t_uncontrolled", c.data_t_uncontrolled);
  f("data.t_controlled", c.data_t_controlled);
  f("data.kappa_r_max", c.data_kappa_r_max);
  f("data.delta_f_max_deg", c.data_delta_f_max_deg);
  f("data.reject_threshold", c.data_reject_threshold);

  i("id.n_lambda", c.id_n_lambda);
  f("id.zeta", c.id_zeta);
  f("id.tau_min", c.id_tau_min);
  f("id.tau_max", c.id_tau_max);
  b("id.greedy", c.id_greedy);
  i("id.greedy_grid", c.id_greedy_grid);
  i("id.k_neighbors", c.id_k_neighbors);
  f("id.idw_power", c.id_idw_power);

  i("eval.n_uncontrolled", c.eval_n_uncontrolled);
  i("eval.n_controlled", c.eval_n_controlled);

  f("qp.eps_abs", c.qp_eps_abs);
  f("qp.eps_rel", c.qp_eps_rel);
  i("qp.max_iters", c.qp_max_iters);
  f("qp.rho", c.qp_rho);
  f("qp.sigma", c.qp_sigma);
  f("qp.alpha", c.qp_alpha);

  i("mpc.horizon", c.mpc_horizon);
  v3("mpc.qy", c.mpc_qy);
  v4("mpc.r", c.mpc_r);
  v3("mpc.s", c.mpc_s);
  v3("mpc.y_min", c.mpc_y_min);
  v3("mpc.y_max", c.mpc_y_max);
  v4("mpc.u_min", c.mpc_u_min);
  v4("mpc.u_max", c.mpc_u_max);
  v4("mpc.du_min", c.mpc_du_min);
  v4("mpc.du_max", c.mpc_du_max);
  v3("mpc.trim", c.mpc_trim);
  b("mpc.relinearize", c.mpc_relinearize);

  v3("scenario.drift.x0", c.drift_x0);
  v3("scenario.drift.ref", c.drift_ref);
  f("scenario.drift.t_sim", c.drift_t_sim);
  v3("scenario.spiral.x0", c.spiral_x0);
  f("scenario.spiral.vx_ref", c.spiral_vx_ref);
  f("scenario.spiral.yaw_ramp_rate", c.spiral_yaw_ramp_rate);
  f("scenario.spiral.yaw_max", c.spiral_yaw_max);
  f("scenario.spiral.t_sim", c.spiral_t_sim);
  b("scenario.spiral.zero_vy_weight", c.spiral_zero_vy_weight);

  u("seed", c.seed);
  return m;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw ConfigError(where + ": not a number: " + s);
  }
  return v;
}

std::vector<double> parse_list(const std::string& s, std::size_t n, const std::string& where) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(parse_double(trim(item), where));
  if (out.size() != n) {
    throw ConfigError(where + ": expected " + std::to_string(n) + " comma-separated values");
  }
  return out;
}

}  // namespace

void AppConfig::apply_scale(Scale s) {
  if (s == Scale::paper) {
    gamma_n_base = 539;
    gamma_n_total = 1078;
  }
}

void AppConfig::apply_store(const ConfigStore& store) {
  FieldMap fields = field_map(*this);
  for (const auto& [key, entry] : store.entries()) {
    const std::string where =
        store.origin() + ":" + std::to_string(entry.line) + ": " + key;
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&](const auto& f) { return f.first == key; });
    if (it == fields.end()) throw ConfigError(where + ": unknown key");
    const FieldRef& ref = it->second;
    const std::string& v = entry.value;
    switch (ref.kind) {
      case FieldRef::F64:
        *static_cast<double*>(ref.ptr) = parse_double(v, where);
        break;
      case FieldRef::I32: {
        const double d = parse_double(v, where);
        const int i = static_cast<int>(d);
        if (static_cast<double>(i) != d) throw ConfigError(where + ": not an integer: " + v);
        *static_cast<int*>(ref.ptr) = i;
        break;
      }
      case FieldRef::U64: {
        char* end = nullptr;
        const unsigned long long u = std::strtoull(v.c_str(), &end, 10);
        if (end == v.c_str() || *end != '\0') {
          throw ConfigError(where + ": not an unsigned integer: " + v);
        }
        *static_cast<std::uint64_t*>(ref.ptr) = u;
        break;
      }
      case FieldRef::BOOL: {
        if (v == "true" || v == "1") {
          *static_cast<bool*>(ref.ptr) = true;
        } else if (v == "false" || v == "0") {
          *static_cast<bool*>(ref.ptr) = false;
        } else {
          throw ConfigError(where + ": expected true/false: " + v);
        }
        break;
      }
      case FieldRef::VEC3: {
        const auto vals = parse_list(v, 3, where);
        auto& arr = *static_cast<std::array<double, 3>*>(ref.ptr);
        std::copy(vals.begin(), vals.end(), arr.begin());
        break;
      }
      case FieldRef::VEC4: {
        const auto vals = parse_list(v, 4, where);
        auto& arr = *static_cast<std::array<double, 4>*>(ref.ptr);
        std::copy(vals.begin(), vals.end(), arr.begin());
        break;
      }
    }
  }
}

std::string AppConfig::canonical_text() const {
  FieldMap fields = field_map(const_cast<AppConfig&>(*this));
  std::map<std::string, std::string> lines;
  for (const auto& [name, ref] : fields) {
    std::string value;
    switch (ref.kind) {
      case FieldRef::F64:
        value = fmt_double(*static_cast<const double*>(ref.ptr));
        break;
      case FieldRef::I32:
        value = std::to_string(*static_cast<const int*>(ref.ptr));
        break;
      case FieldRef::U64:
        value = std::to_string(*static_cast<const std::uint64_t*>(ref.ptr));
        break;
      case FieldRef::BOOL:
        value = *static_cast<const bool*>(ref.ptr) ? "true" : "false";
        break;
      case FieldRef::VEC3: {
        const auto& arr = *static_cast<const std::array<double, 3>*>(ref.ptr);
        value = fmt_double(arr[0]) + "," + fmt_double(arr[1]) + "," + fmt_double(arr[2]);
        break;
      }
      case FieldRef::VEC4: {
        const auto& arr = *static_cast<const std::array<double, 4>*>(ref.ptr);
        value = fmt_double(arr[0]) + "," + fmt_double(arr[1]) + "," + fmt_double(arr[2]) +
                "," + fmt_double(arr[3]);
        break;
      }
    }
    lines[name] = value;
  }
  std::string out;
  for (const auto& [name, value] : lines) {
    out += name;
    out += " = ";
    out += value;
    out += "\n";
  }
  return out;
}

VehicleParams AppConfig::vehicle_params() const {
  VehicleParams p;
  p.mass = vehicle_mass;
  p.yaw_inertia = vehicle_yaw_inertia;
  p.l_front = vehicle_l_front;
  p.l_rear = vehicle_l_rear;
  p.drag_coeff = vehicle_drag_coeff;
  p.air_density = vehicle_air_density;
  p.frontal_area = vehicle_frontal_area;
  p.low_speed_guard = vehicle_low_speed_guard;
  p.pacejka_cos_form = vehicle_pacejka_cos_form;
  const double fz_f = p.static_wheel_load_front();
  const double fz_r = p.static_wheel_load_rear();
  p.tire_front.lateral = {tire_lat_b, tire_lat_c, tire_lat_d_scale * fz_f, tire_lat_e};
  p.tire_front.longitudinal = {tire_long_b, tire_long_c, tire_long_d_scale * fz_f, tire_long_e};
  p.tire_rear.lateral = {tire_lat_b, tire_lat_c, tire_lat_d_scale * fz_r, tire_lat_e};
  p.tire_rear.longitudinal = {tire_long_b, tire_long_c, tire_long_d_scale * fz_r, tire_long_e};
  p.validate();
  return p;
}

}  // namespace koopcar
