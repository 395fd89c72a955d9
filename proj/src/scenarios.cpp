#include "koopcar/scenarios.hpp"

#include <cmath>
#include <fstream>

#include "koopcar/binio.hpp"
#include "koopcar/csvio.hpp"

namespace koopcar {

namespace {

// Substream tags: evaluation draws must not overlap the dataset streams.
constexpr std::uint64_t kEvalUncontrolledSalt = 1u << 20;
constexpr std::uint64_t kEvalControlledSalt = 1u << 21;

Eigen::Matrix3d diag3(const std::array<double, 3>& d) {
  return Eigen::Vector3d(d[0], d[1], d[2]).asDiagonal();
}
Eigen::Matrix4d diag4(const std::array<double, 4>& d) {
  return Eigen::Vector4d(d[0], d[1], d[2], d[3]).asDiagonal();
}

}  // namespace

MpcConfig make_mpc_config(const AppConfig& cfg) {
  MpcConfig m;
  m.qy = diag3(cfg.mpc_qy);
  m.r_cost = diag4(cfg.mpc_r);
  m.s_cost = diag3(cfg.mpc_s);
  m.horizon = cfg.mpc_horizon;
  m.y_min = Eigen::Vector3d(cfg.mpc_y_min.data());
  m.y_max = Eigen::Vector3d(cfg.mpc_y_max.data());
  m.u_min = Eigen::Vector4d(cfg.mpc_u_min.data());
  m.u_max = Eigen::Vector4d(cfg.mpc_u_max.data());
  m.du_min = Eigen::Vector4d(cfg.mpc_du_min.data());
  m.du_max = Eigen::Vector4d(cfg.mpc_du_max.data());
  m.validate();
  return m;
}

QpSettings make_qp_settings(const AppConfig& cfg) {
  QpSettings s;
  s.eps_abs = cfg.qp_eps_abs;
  s.eps_rel = cfg.qp_eps_rel;
  s.max_iters = cfg.qp_max_iters;
  s.rho = cfg.qp_rho;
  s.sigma = cfg.qp_sigma;
  s.alpha = cfg.qp_alpha;
  return s;
}

ScenarioSpec drift_scenario(const AppConfig& cfg) {
  ScenarioSpec s;
  s.name = "drift";
  s.x0 = {cfg.drift_x0[0], cfg.drift_x0[1], cfg.drift_x0[2]};
  const std::array<double, 3> ref = cfg.drift_ref;
  s.reference = [ref](double) { return ref; };
  s.t_sim = cfg.drift_t_sim;
  return s;
}

ScenarioSpec spiral_scenario(const AppConfig& cfg) {
  ScenarioSpec s;
  s.name = "spiral";
  s.x0 = {cfg.spiral_x0[0], cfg.spiral_x0[1], cfg.spiral_x0[2]};
  const double vx_ref = cfg.spiral_vx_ref;
  const double rate = cfg.spiral_yaw_ramp_rate;
  const double cap = cfg.spiral_yaw_max;
  s.reference = [vx_ref, rate, cap](double t) {
    return std::array<double, 3>{vx_ref, 0.0, std::min(rate * t, cap)};
  };
  s.t_sim = cfg.spiral_t_sim;
  s.zero_vy_weight = cfg.spiral_zero_vy_weight;
  return s;
}

KoopmanModel identify(const AppConfig& cfg, const Dataset& uncontrolled,
                      const Dataset& controlled, BFitDiagnostics* diag) {
  if (uncontrolled.ts != controlled.ts) {
    throw std::invalid_argument("identify: datasets disagree on the sampling time");
  }
  const double ts = uncontrolled.ts;

  const EigenvalueSet eig =
      cfg.id_greedy
          ? select_eigenvalues_greedy(cfg.id_n_lambda, ts, uncontrolled, cfg.id_zeta,
                                      cfg.id_greedy_grid, cfg.id_tau_min, cfg.id_tau_max)
          : select_eigenvalues(cfg.id_n_lambda, ts, cfg.id_tau_min, cfg.id_tau_max);

  KoopmanModel model;
  model.ts = ts;
  model.n_outputs = 3;
  model.eigenvalues = eig;
  model.lift_params.k_neighbors = cfg.id_k_neighbors;
  model.lift_params.idw_power = cfg.id_idw_power;
  model.config_snapshot = cfg.canonical_text();

  const GTable g = fit_g(uncontrolled, eig, cfg.id_zeta);
  model.table = build_lift_table(uncontrolled, eig, g);
  model.b = fit_B(controlled, eig, model.table, model.lift_params, 3, diag);
  return model;
}

// ---------------------------------------------------------------------------
// Held-out evaluation: a fresh surface sample (seed-shifted, so it never
// matches the training lattice) rolled out by the same generators, with the
// low-speed rejection rule applied, then scored trajectory by trajectory.
// Guard-truncated rollouts are scored on their stored prefix.

namespace {

Eigen::MatrixXd states_matrix(const std::vector<VehicleState>& states) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(states.size()), 3);
  for (std::size_t k = 0; k < states.size(); ++k) {
    y(static_cast<Eigen::Index>(k), 0) = states[k].vx;
    y(static_cast<Eigen::Index>(k), 1) = states[k].vy;
    y(static_cast<Eigen::Index>(k), 2) = states[k].yaw_rate;
  }
  return y;
}

EvalStats finish_stats(std::vector<double>& values) {
  EvalStats st;
  st.count = static_cast<int>(values.size());
  if (values.empty()) return st;
  double sum = 0.0, sq = 0.0;
  st.min = values.front();
  st.max = values.front();
  for (double v : values) {
    sum += v;
    sq += v * v;
    st.min = std::min(st.min, v);
    st.max = std::max(st.max, v);
  }
  st.mean = sum / st.count;
  const double var = std::max(0.0, sq / st.count - st.mean * st.mean);
  st.stddev = std::sqrt(var);
  return st;
}

EvalStats evaluate(const KoopmanModel& model, const AppConfig& cfg, bool controlled) {
  const VehicleParams params = cfg.vehicle_params();
  const double horizon = controlled ? cfg.data_t_controlled : cfg.data_t_uncontrolled;
  const int n_starts = controlled ? cfg.eval_n_controlled : cfg.eval_n_uncontrolled;
  const std::uint64_t seed =
      cfg.seed ^ (controlled ? kEvalControlledSalt : kEvalUncontrolledSalt);

  const GammaSet starts = sample_gamma(cfg.gamma_energy, params, n_starts,
                                       cfg.gamma_densify_factor, seed, 0);
  Dataset rollouts =
      controlled ? generate_controlled(starts, params, model.ts, horizon, seed,
                                       cfg.data_kappa_r_max,
                                       cfg.data_delta_f_max_deg * M_PI / 180.0)
                 : generate_uncontrolled(starts, params, model.ts, horizon);
  rollouts = reject_low_speed(rollouts, cfg.data_reject_threshold);

  std::vector<double> errors;
  for (const Trajectory& t : rollouts.trajectories) {
    if (t.states.size() < 2) continue;
    const Eigen::VectorXd z0 = model.lift_state(t.x0());
    const Eigen::MatrixXd pred = predict(model, z0, t.inputs);
    errors.push_back(rmse_percent(states_matrix(t.states), pred));
  }
  if (errors.empty()) throw std::runtime_error("evaluate: no admissible held-out starts");
  return finish_stats(errors);
}

}  // namespace

EvalStats evaluate_uncontrolled(const KoopmanModel& model, const AppConfig& cfg) {
  return evaluate(model, cfg, false);
}

EvalStats evaluate_controlled(const KoopmanModel& model, const AppConfig& cfg) {
  return evaluate(model, cfg, true);
}

// ---------------------------------------------------------------------------
// Scenario execution

ScenarioRun run_scenario(const ScenarioSpec& spec, const KoopmanModel& model,
                         const AppConfig& cfg, const std::string& out_dir) {
  const VehicleParams params = cfg.vehicle_params();
  MpcConfig mpc_cfg = make_mpc_config(cfg);
  if (spec.zero_vy_weight) {
    mpc_cfg.qy.row(1).setZero();
    mpc_cfg.qy.col(1).setZero();
  }
  const QpSettings qps = make_qp_settings(cfg);

  ScenarioRun run;
  run.spec = spec;

  const bool want_koopman = spec.kind != ScenarioSpec::ControllerKind::linear;
  const bool want_linear = spec.kind != ScenarioSpec::ControllerKind::koopman;

  if (want_koopman) {
    ControllerOutcome out;
    try {
      KoopmanMpcController ctrl(model, mpc_cfg, qps);
      out.log = simulate_closed_loop(params, ctrl, spec.x0, spec.reference, spec.t_sim,
                                     model.ts);
      out.ran = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    run.koopman = std::move(out);
  }
  if (want_linear) {
    ControllerOutcome out;
    try {
      const VehicleState trim{cfg.mpc_trim[0], cfg.mpc_trim[1], cfg.mpc_trim[2]};
      LinearMpcController ctrl(params, trim, ControlInput{}, model.ts, mpc_cfg, qps,
                               cfg.mpc_relinearize, cfg.vehicle_linearize_eps);
      out.log = simulate_closed_loop(params, ctrl, spec.x0, spec.reference, spec.t_sim,
                                     model.ts);
      out.ran = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    run.linear = std::move(out);
  }

  if (!out_dir.empty()) {
    if (run.koopman && run.koopman->ran) {
      write_log_csv(run.koopman->log, out_dir + "/" + spec.name + "_koopman.csv");
    }
    if (run.linear && run.linear->ran) {
      write_log_csv(run.linear->log, out_dir + "/" + spec.name + "_linear.csv");
    }
  }
  return run;
}

namespace {

double state_component(const VehicleState& s, int idx) {
  switch (idx) {
    case 0: return s.vx;
    case 1: return s.vy;
    default: return s.yaw_rate;
  }
}

}  // namespace

double first_time_abs_below(const ClosedLoopLog& log, int state_index, double threshold) {
  for (std::size_t k = 0; k < log.states.size(); ++k) {
    if (std::fabs(state_component(log.states[k], state_index)) <= threshold) {
      return static_cast<double>(k) * log.ts;
    }
  }
  return -1.0;
}

double first_time_within(const ClosedLoopLog& log, int state_index, double target,
                         double tol) {
  for (std::size_t k = 0; k < log.states.size(); ++k) {
    if (std::fabs(state_component(log.states[k], state_index) - target) <= tol) {
      return static_cast<double>(k) * log.ts;
    }
  }
  return -1.0;
}

double tracking_rmse(const ClosedLoopLog& log, int state_index) {
  if (log.states.empty()) return 0.0;
  double sq = 0.0;
  for (std::size_t k = 0; k < log.states.size(); ++k) {
    const double e =
        state_component(log.states[k], state_index) - log.refs[k][state_index];
    sq += e * e;
  }
  return std::sqrt(sq / static_cast<double>(log.states.size()));
}

// ---------------------------------------------------------------------------
// Reports

void write_identify_report(const std::string& path, const KoopmanModel& model,
                           const BFitDiagnostics& diag, const EvalStats& uncontrolled,
                           const EvalStats& controlled) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "lifted model summary\n";
  out << "  ts            = " << CsvWriter::format(model.ts) << "\n";
  out << "  outputs       = " << model.n_outputs << "\n";
  out << "  eigenvalues   = " << model.eigenvalues.count() << "\n";
  out << "  lifted dim    = " << model.dim() << "\n";
  out << "  table points  = " << model.table.size() << "\n";
  out << "eigenvalues\n";
  for (double l : model.eigenvalues.lambdas) {
    out << "  " << CsvWriter::format(l) << "\n";
  }
  out << "input fit\n";
  out << "  rows          = " << diag.rows << "\n";
  out << "  cols          = " << diag.cols << "\n";
  out << "  rank          = " << diag.rank << "\n";
  out << "  objective     = " << CsvWriter::format(diag.objective) << "\n";
  out << "  objective(B=0)= " << CsvWriter::format(diag.objective_at_zero) << "\n";
  auto stats = [&](const char* name, const EvalStats& st) {
    out << name << " held-out rmse_percent\n";
    out << "  count = " << st.count << "\n";
    out << "  mean  = " << CsvWriter::format(st.mean) << "\n";
    out << "  std   = " << CsvWriter::format(st.stddev) << "\n";
    out << "  min   = " << CsvWriter::format(st.min) << "\n";
    out << "  max   = " << CsvWriter::format(st.max) << "\n";
  };
  stats("uncontrolled", uncontrolled);
  stats("controlled", controlled);
}

namespace {

void write_outcome_metrics(std::ofstream& out, const char* name,
                           const std::optional<ControllerOutcome>& outcome,
                           const AppConfig& cfg, bool drift) {
  out << name << "\n";
  if (!outcome) {
    out << "  skipped\n";
    return;
  }
  if (!outcome->ran) {
    out << "  error = " << outcome->error << "\n";
    return;
  }
  const ClosedLoopLog& log = outcome->log;
  out << "  samples = " << log.states.size() << "\n";
  out << "  early_termination = " << (log.terminated_early ? "true" : "false") << "\n";
  if (log.terminated_early) out << "  reason = " << log.termination_reason << "\n";
  if (!log.inputs.empty()) {
    out << "  initial_steering = " << CsvWriter::format(log.inputs.front().delta_f) << "\n";
  }
  if (drift) {
    out << "  time_to_vy_settle = "
        << CsvWriter::format(first_time_abs_below(log, 1, 0.5)) << "\n";
    out << "  time_to_vx_settle = "
        << CsvWriter::format(first_time_within(log, 0, cfg.drift_ref[0], 1.0)) << "\n";
  } else {
    out << "  vx_tracking_rmse = " << CsvWriter::format(tracking_rmse(log, 0)) << "\n";
    out << "  yaw_rate_tracking_rmse = " << CsvWriter::format(tracking_rmse(log, 2))
        << "\n";
  }
}

}  // namespace

void write_drift_metrics(const std::string& path, const ScenarioRun& run,
                         const AppConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "drift recovery metrics\n";
  write_outcome_metrics(out, "koopman", run.koopman, cfg, true);
  write_outcome_metrics(out, "linear", run.linear, cfg, true);
}

void write_spiral_metrics(const std::string& path, const ScenarioRun& run,
                          const AppConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "spiral tracking metrics (vy un-referenced)\n";
  write_outcome_metrics(out, "koopman", run.koopman, cfg, false);
  write_outcome_metrics(out, "linear", run.linear, cfg, false);
}

}  // namespace koopcar
