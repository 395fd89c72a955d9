#include "koopcar/mpc.hpp"

#include <cmath>

#include "koopcar/csvio.hpp"

namespace koopcar {

void MpcConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("MpcConfig: horizon must be >= 1");
  auto check_psd_diag = [](const auto& m, const char* name) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.eigenvalues().minCoeff() < -1e-10) {
      throw std::invalid_argument(std::string("MpcConfig: ") + name +
                                  " must be positive semidefinite");
    }
  };
  check_psd_diag(qy, "Qy");
  check_psd_diag(r_cost, "R");
  check_psd_diag(s_cost, "S");
  if ((y_min.array() > y_max.array()).any() || (u_min.array() > u_max.array()).any() ||
      (du_min.array() > du_max.array()).any()) {
    throw std::invalid_argument("MpcConfig: lower bound exceeds upper bound");
  }
}

void PredictorModel::validate() const {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b.rows() != n || b.cols() != 4 || c.rows() != 3 || c.cols() != n ||
      offset.size() != n) {
    throw std::invalid_argument("PredictorModel: inconsistent dimensions");
  }
}

PredictorModel predictor_from_koopman(const KoopmanModel& m) {
  PredictorModel p;
  p.a = m.dense_A();
  p.b = m.b;
  p.c = m.dense_C();
  p.offset = Eigen::VectorXd::Zero(m.dim());
  p.validate();
  return p;
}

PredictorModel predictor_from_linearization(const Linearization& lin) {
  PredictorModel p;
  p.a = lin.a;
  p.b = lin.b;
  p.c = Eigen::MatrixXd::Identity(3, 3);
  p.offset = lin.c;
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Condensation
//
// Decision vector w = (u_0..u_{N-1}, s_0..s_{N-1}), dimension 7N.
// Constraint row layout (m = 0..N-1 within each group):
//   [0,    3N)  y_m - s_m <=  y_max
//   [3N,   6N) -y_m - s_m <= -y_min
//   [6N,   9N) -s_m <= 0
//   [9N,  13N)  u_m <= u_max
//   [13N, 17N) -u_m <= -u_min
//   [17N, 21N)  u_m - u_{m-1} <= du_max   (m = 0 against u_prev)
//   [21N, 25N) -u_m + u_{m-1} <= -du_min

CondensedMpc::CondensedMpc(PredictorModel model, MpcConfig cfg)
    : model_(std::move(model)), cfg_(std::move(cfg)) {
  model_.validate();
  cfg_.validate();

  const int n_hor = cfg_.horizon;
  const Eigen::Index nu = 4 * n_hor;
  const Eigen::Index ns = 3 * n_hor;
  const Eigen::Index nw = nu + ns;

  // Input-to-output map for y_1..y_N: block (m-1, i) = C A^{m-1-i} B.
  std::vector<Eigen::Matrix<double, 3, 4>> cab(static_cast<std::size_t>(n_hor));
  Eigen::MatrixXd ab = model_.b;  // A^t B
  for (int t = 0; t < n_hor; ++t) {
    cab[static_cast<std::size_t>(t)] = model_.c * ab;
    if (t + 1 < n_hor) ab = model_.a * ab;
  }
  g_u_ = Eigen::MatrixXd::Zero(3 * n_hor, nu);
  for (int m = 1; m <= n_hor; ++m) {
    for (int i = 0; i < m; ++i) {
      g_u_.block(3 * (m - 1), 4 * i, 3, 4) = cab[static_cast<std::size_t>(m - 1 - i)];
    }
  }

  // Cost: 2 (Gu' Qbar Gu + Rbar) on u, 2 Sbar on s.
  Eigen::MatrixXd q_gu(3 * n_hor, nu);
  for (int m = 0; m < n_hor; ++m) {
    q_gu.middleRows(3 * m, 3) = cfg_.qy * g_u_.middleRows(3 * m, 3);
  }
  h_mat_ = Eigen::MatrixXd::Zero(nw, nw);
  h_mat_.topLeftCorner(nu, nu) = 2.0 * g_u_.transpose() * q_gu;
  for (int m = 0; m < n_hor; ++m) {
    h_mat_.block(4 * m, 4 * m, 4, 4) += 2.0 * cfg_.r_cost;
    h_mat_.block(nu + 3 * m, nu + 3 * m, 3, 3) = 2.0 * cfg_.s_cost;
  }
  h_mat_ = 0.5 * (h_mat_ + h_mat_.transpose().eval());  // kill rounding asymmetry

  const Eigen::Index rows = 25 * static_cast<Eigen::Index>(n_hor);
  g_mat_ = Eigen::MatrixXd::Zero(rows, nw);
  h_template_ = Eigen::VectorXd::Zero(rows);

  for (int m = 0; m < n_hor; ++m) {
    const Eigen::Index yu = 3 * m;            // y upper rows
    const Eigen::Index yl = 3 * n_hor + 3 * m; // y lower rows
    if (m >= 1) {
      g_mat_.block(yu, 0, 3, nu) = g_u_.middleRows(3 * (m - 1), 3);
      g_mat_.block(yl, 0, 3, nu) = -g_u_.middleRows(3 * (m - 1), 3);
    }
    g_mat_.block(yu, nu + 3 * m, 3, 3) = -Eigen::Matrix3d::Identity();
    g_mat_.block(yl, nu + 3 * m, 3, 3) = -Eigen::Matrix3d::Identity();

    g_mat_.block(6 * n_hor + 3 * m, nu + 3 * m, 3, 3) = -Eigen::Matrix3d::Identity();

    g_mat_.block(9 * n_hor + 4 * m, 4 * m, 4, 4) = Eigen::Matrix4d::Identity();
    g_mat_.block(13 * n_hor + 4 * m, 4 * m, 4, 4) = -Eigen::Matrix4d::Identity();

    g_mat_.block(17 * n_hor + 4 * m, 4 * m, 4, 4) = Eigen::Matrix4d::Identity();
    g_mat_.block(21 * n_hor + 4 * m, 4 * m, 4, 4) = -Eigen::Matrix4d::Identity();
    if (m >= 1) {
      g_mat_.block(17 * n_hor + 4 * m, 4 * (m - 1), 4, 4) = -Eigen::Matrix4d::Identity();
      g_mat_.block(21 * n_hor + 4 * m, 4 * (m - 1), 4, 4) = Eigen::Matrix4d::Identity();
    }

    h_template_.segment(6 * n_hor + 3 * m, 3).setZero();
    h_template_.segment(9 * n_hor + 4 * m, 4) = cfg_.u_max;
    h_template_.segment(13 * n_hor + 4 * m, 4) = -cfg_.u_min;
    if (m >= 1) {
      h_template_.segment(17 * n_hor + 4 * m, 4) = cfg_.du_max;
      h_template_.segment(21 * n_hor + 4 * m, 4) = -cfg_.du_min;
    }
  }
}

void CondensedMpc::update(const Eigen::VectorXd& z0, const ControlInput& u_prev,
                          const Eigen::MatrixXd& ref, Eigen::VectorXd& f,
                          Eigen::VectorXd& h) const {
  const int n_hor = cfg_.horizon;
  if (z0.size() != model_.state_dim()) {
    throw std::invalid_argument("condense: z0 dimension mismatch");
  }
  if (ref.rows() != n_hor || ref.cols() != 3) {
    throw std::invalid_argument("condense: reference must be horizon x 3");
  }

  const Eigen::Index nu = 4 * n_hor;
  const Eigen::Index ns = 3 * n_hor;

  // Free response with the affine offset: y_m = C z_m, z_{m+1} = A z_m + c.
  Eigen::MatrixXd free_y(n_hor + 1, 3);
  Eigen::VectorXd z = z0;
  for (int m = 0; m <= n_hor; ++m) {
    free_y.row(m) = (model_.c * z).transpose();
    if (m < n_hor) z = model_.a * z + model_.offset;
  }

  // f_u = 2 Gu' Qbar (F - r) over y_1..y_N.
  Eigen::VectorXd weighted_dev(3 * n_hor);
  for (int m = 1; m <= n_hor; ++m) {
    const Eigen::Vector3d dev = free_y.row(m).transpose() - ref.row(m - 1).transpose();
    weighted_dev.segment(3 * (m - 1), 3) = cfg_.qy * dev;
  }
  f = Eigen::VectorXd::Zero(nu + ns);
  f.head(nu) = 2.0 * g_u_.transpose() * weighted_dev;

  h = h_template_;
  for (int m = 0; m < n_hor; ++m) {
    const Eigen::Vector3d fy = free_y.row(m).transpose();
    h.segment(3 * m, 3) = cfg_.y_max - fy;
    h.segment(3 * n_hor + 3 * m, 3) = fy - cfg_.y_min;
  }
  h.segment(17 * n_hor, 4) = cfg_.du_max + to_vec(u_prev);
  h.segment(21 * n_hor, 4) = -cfg_.du_min - to_vec(u_prev);
}

QpProblem condense(const PredictorModel& model, const MpcConfig& cfg,
                   const Eigen::VectorXd& z0, const ControlInput& u_prev,
                   const Eigen::MatrixXd& ref) {
  const CondensedMpc c(model, cfg);
  QpProblem qp;
  qp.h_mat = c.cost_matrix();
  qp.g_mat = c.constraint_matrix();
  c.update(z0, u_prev, ref, qp.f, qp.h_vec);
  return qp;
}

// ---------------------------------------------------------------------------

MpcCore::MpcCore(PredictorModel model, MpcConfig cfg, QpSettings qp_settings)
    : condensed_(std::move(model), std::move(cfg)) {
  solver_.setup(condensed_.cost_matrix(), condensed_.constraint_matrix(), qp_settings);
}

void MpcCore::reset_warm_start() {
  have_prev_ = false;
  solver_.clear_warm_start();
}

ControlInput MpcCore::step(const Eigen::VectorXd& z0, const ControlInput& u_prev,
                           const Eigen::MatrixXd& ref, MpcStepInfo* info) {
  const MpcConfig& cfg = condensed_.config();
  const int n_hor = cfg.horizon;
  const Eigen::Index nu = 4 * n_hor;

  Eigen::VectorXd f, h;
  condensed_.update(z0, u_prev, ref, f, h);

  if (have_prev_) {
    // Receding-horizon shift: drop the applied input, repeat the tail.
    Eigen::VectorXd w = prev_w_;
    if (n_hor > 1) {
      w.segment(0, 4 * (n_hor - 1)) = prev_w_.segment(4, 4 * (n_hor - 1));
      w.segment(nu, 3 * (n_hor - 1)) = prev_w_.segment(nu + 3, 3 * (n_hor - 1));
    }
    solver_.set_warm_start(w, prev_mu_);
  }

  const QpSolution sol = solver_.solve(f, h);
  prev_w_ = sol.w;
  prev_mu_ = sol.mu;
  have_prev_ = true;

  if (info) {
    info->status = sol.status;
    info->iterations = sol.iterations;
    info->slack_max = std::max(0.0, sol.w.tail(3 * n_hor).maxCoeff());
  }

  // Hard bounds hold exactly on the applied input regardless of solver
  // tolerance; pinned slots come out identically zero.
  Eigen::Vector4d u0 = sol.w.head(4);
  const Eigen::Vector4d prev = to_vec(u_prev);
  for (int i = 0; i < 4; ++i) {
    double lo = std::max(cfg.u_min[i], prev[i] + cfg.du_min[i]);
    double hi = std::min(cfg.u_max[i], prev[i] + cfg.du_max[i]);
    if (lo > hi) {  // rate box detached from the input box; favor the input box
      lo = cfg.u_min[i];
      hi = cfg.u_max[i];
    }
    u0[i] = std::min(std::max(u0[i], lo), hi);
  }
  return to_input(u0);
}

KoopmanMpcController::KoopmanMpcController(const KoopmanModel& model, MpcConfig cfg,
                                           QpSettings qp_settings)
    : model_(&model), core_(predictor_from_koopman(model), std::move(cfg), qp_settings) {}

ControlInput KoopmanMpcController::step(const VehicleState& x, const ControlInput& u_prev,
                                        const Eigen::MatrixXd& ref, MpcStepInfo* info) {
  const Eigen::VectorXd z0 = model_->lift_state(x);  // re-lifted every step
  return core_.step(z0, u_prev, ref, info);
}

LinearMpcController::LinearMpcController(const VehicleParams& plant,
                                         const VehicleState& trim_state,
                                         const ControlInput& trim_input, double ts,
                                         MpcConfig cfg, QpSettings qp_settings,
                                         bool relinearize_each_step, double fd_eps)
    : plant_(plant),
      cfg_(std::move(cfg)),
      qp_settings_(qp_settings),
      ts_(ts),
      fd_eps_(fd_eps),
      relinearize_(relinearize_each_step) {
  const Linearization lin = linearize(trim_state, trim_input, plant_, ts_, fd_eps_);
  core_ = std::make_unique<MpcCore>(predictor_from_linearization(lin), cfg_, qp_settings_);
}

ControlInput LinearMpcController::step(const VehicleState& x, const ControlInput& u_prev,
                                       const Eigen::MatrixXd& ref, MpcStepInfo* info) {
  if (relinearize_) {
    const Linearization lin = linearize(x, u_prev, plant_, ts_, fd_eps_);
    core_ = std::make_unique<MpcCore>(predictor_from_linearization(lin), cfg_, qp_settings_);
  }
  return core_->step(to_vec(x), u_prev, ref, info);
}

ControlInput koopman_mpc_step(const VehicleState& x, const KoopmanModel& model,
                              const MpcConfig& cfg, const QpSettings& qp_settings,
                              const ControlInput& u_prev, const Eigen::MatrixXd& ref,
                              MpcStepInfo* info) {
  MpcCore core(predictor_from_koopman(model), cfg, qp_settings);
  return core.step(model.lift_state(x), u_prev, ref, info);
}

ControlInput linear_mpc_step(const VehicleState& x, const VehicleState& trim_state,
                             const ControlInput& trim_input, const VehicleParams& plant,
                             double ts, const MpcConfig& cfg, const QpSettings& qp_settings,
                             const ControlInput& u_prev, const Eigen::MatrixXd& ref,
                             MpcStepInfo* info) {
  const Linearization lin = linearize(trim_state, trim_input, plant, ts);
  MpcCore core(predictor_from_linearization(lin), cfg, qp_settings);
  return core.step(to_vec(x), u_prev, ref, info);
}

// ---------------------------------------------------------------------------

ClosedLoopLog simulate_closed_loop(const VehicleParams& plant, Controller& controller,
                                   const VehicleState& x0, const RefFn& ref, double t_sim,
                                   double ts) {
  if (!(ts > 0.0)) throw std::invalid_argument("simulate_closed_loop: ts must be positive");
  const double steps_d = t_sim / ts;
  const auto n_steps = static_cast<std::size_t>(std::llround(steps_d));
  if (std::fabs(static_cast<double>(n_steps) * ts - t_sim) > 1e-9) {
    throw std::invalid_argument("simulate_closed_loop: ts must divide t_sim");
  }

  const int n_hor = controller.horizon();
  ClosedLoopLog log;
  log.ts = ts;
  log.states.push_back(x0);
  log.refs.push_back(ref(0.0));

  ControlInput u_prev{};
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = static_cast<double>(k) * ts;
    const std::array<double, 3> r = ref(t);
    // Constant reference preview across the horizon.
    Eigen::MatrixXd window(n_hor, 3);
    for (int m = 0; m < n_hor; ++m) {
      window(m, 0) = r[0];
      window(m, 1) = r[1];
      window(m, 2) = r[2];
    }

    MpcStepInfo info;
    const ControlInput u = controller.step(log.states.back(), u_prev, window, &info);

    VehicleState next;
    try {
      next = step(log.states.back(), u, plant, ts);
    } catch (const LowSpeedError& e) {
      log.terminated_early = true;
      log.termination_reason =
          "low-speed guard tripped at t=" + CsvWriter::format(t) + " (vx=" +
          CsvWriter::format(e.vx()) + ")";
      break;
    }
    log.inputs.push_back(u);
    log.qp_info.push_back(info);
    log.states.push_back(next);
    log.refs.push_back(ref(static_cast<double>(k + 1) * ts));
    u_prev = u;
  }
  return log;
}

void write_log_csv(const ClosedLoopLog& log, const std::string& path) {
  CsvWriter csv(path);
  csv.header({"t", "vx", "vy", "yaw_rate", "kappa_f", "kappa_r", "delta_f", "delta_r",
              "ref_vx", "ref_vy", "ref_yaw_rate", "slack_max", "qp_status", "qp_iters"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < log.states.size(); ++k) {
    const VehicleState& s = log.states[k];
    const bool has_input = k < log.inputs.size();
    const ControlInput u = has_input ? log.inputs[k] : ControlInput{nan, nan, nan, nan};
    const std::array<double, 3>& r = log.refs[k];
    std::vector<CsvWriter::Cell> cells = {
        static_cast<double>(k) * log.ts,
        s.vx,
        s.vy,
        s.yaw_rate,
        u.kappa_f,
        u.kappa_r,
        u.delta_f,
        u.delta_r,
        r[0],
        r[1],
        r[2],
        has_input ? log.qp_info[k].slack_max : nan,
        has_input ? std::string(to_string(log.qp_info[k].status)) : std::string("none"),
        has_input ? static_cast<double>(log.qp_info[k].iterations) : nan,
    };
    csv.row(cells);
  }
}

}  // namespace koopcar
