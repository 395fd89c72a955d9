#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "koopcar/koopman.hpp"
#include "koopcar/qp.hpp"
#include "koopcar/vehicle.hpp"

namespace koopcar {

/// Tracking MPC parameterization: stage costs, horizon, soft output bounds,
/// hard input bounds and hard per-step input rate bounds.
struct MpcConfig {
  Eigen::Matrix3d qy = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d r_cost = Eigen::Vector4d(0.0, 100.0, 30.0, 0.0).asDiagonal();
  Eigen::Matrix3d s_cost = 1.0e5 * Eigen::Matrix3d::Identity();
  int horizon = 10;
  Eigen::Vector3d y_min{-25.0, -2.0, -2.0};
  Eigen::Vector3d y_max{25.0, 2.0, 2.0};
  Eigen::Vector4d u_min{0.0, -1.0, -0.45, 0.0};
  Eigen::Vector4d u_max{0.0, 1.0, 0.45, 0.0};
  Eigen::Vector4d du_min{0.0, -0.1, -0.8, 0.0};
  Eigen::Vector4d du_max{0.0, 0.1, 0.8, 0.0};

  void validate() const;
};

/// Linear predictor in either space: lifted Koopman (offset zero) or the
/// 3-state local linearization (C identity). The condensation below only
/// sees this interface.
struct PredictorModel {
  Eigen::MatrixXd a;       // n x n
  Eigen::MatrixXd b;       // n x 4
  Eigen::MatrixXd c;       // 3 x n
  Eigen::VectorXd offset;  // n, affine term of the state update

  Eigen::Index state_dim() const { return a.rows(); }
  void validate() const;
};

PredictorModel predictor_from_koopman(const KoopmanModel& m);
PredictorModel predictor_from_linearization(const Linearization& lin);

/// Condensed QP over w = (u_0..u_{N-1}, s_0..s_{N-1}): predicted outputs are
/// eliminated by forward substitution. Output constraints run m = 0..N-1
/// (no terminal output constraint); the tracking cost runs over the
/// predicted outputs y_1..y_N (y_0 is fixed by z0 and cannot change the
/// minimizer). H and G depend only on (model, config); f and h carry the
/// per-step data.
class CondensedMpc {
 public:
  CondensedMpc(PredictorModel model, MpcConfig cfg);

  /// Per-step vectors for the current lifted state, previous input and
  /// reference (horizon x 3, rows r_1..r_N).
  void update(const Eigen::VectorXd& z0, const ControlInput& u_prev,
              const Eigen::MatrixXd& ref, Eigen::VectorXd& f, Eigen::VectorXd& h) const;

  const Eigen::MatrixXd& cost_matrix() const { return h_mat_; }
  const Eigen::MatrixXd& constraint_matrix() const { return g_mat_; }
  const PredictorModel& model() const { return model_; }
  const MpcConfig& config() const { return cfg_; }
  Eigen::Index num_vars() const { return h_mat_.rows(); }
  Eigen::Index num_constraints() const { return g_mat_.rows(); }

 private:
  PredictorModel model_;
  MpcConfig cfg_;
  Eigen::MatrixXd h_mat_;
  Eigen::MatrixXd g_mat_;
  Eigen::MatrixXd g_u_;         // (3N) x (4N) input-to-output map, rows y_1..y_N
  Eigen::VectorXd h_template_;  // constant rows prefilled
};

/// One-shot condensation per the module contract. Controllers use the
/// cached CondensedMpc instead; the two paths produce identical problems.
QpProblem condense(const PredictorModel& model, const MpcConfig& cfg,
                   const Eigen::VectorXd& z0, const ControlInput& u_prev,
                   const Eigen::MatrixXd& ref);

struct MpcStepInfo {
  QpStatus status = QpStatus::optimal;
  int iterations = 0;
  double slack_max = 0.0;
};

/// Receding-horizon core bound to one closed-loop run: owns the solver and
/// the shifted warm start. Returned inputs are clamped onto the hard input
/// and rate boxes, so pinned slots are exactly zero even at solver
/// tolerance.
class MpcCore {
 public:
  MpcCore(PredictorModel model, MpcConfig cfg, QpSettings qp_settings);

  ControlInput step(const Eigen::VectorXd& z0, const ControlInput& u_prev,
                    const Eigen::MatrixXd& ref, MpcStepInfo* info = nullptr);

  const CondensedMpc& condensed() const { return condensed_; }
  void reset_warm_start();

 private:
  CondensedMpc condensed_;
  AdmmSolver solver_;
  bool have_prev_ = false;
  Eigen::VectorXd prev_w_, prev_mu_;
};

/// Controller interface for the closed loop; implementations own warm-start
/// state and are bound to a single run.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual int horizon() const = 0;
  virtual ControlInput step(const VehicleState& x, const ControlInput& u_prev,
                            const Eigen::MatrixXd& ref, MpcStepInfo* info) = 0;
};

/// Lifts the measured state through the model's table every step and solves
/// the lifted-space QP.
class KoopmanMpcController final : public Controller {
 public:
  KoopmanMpcController(const KoopmanModel& model, MpcConfig cfg, QpSettings qp_settings);

  int horizon() const override { return core_.condensed().config().horizon; }
  ControlInput step(const VehicleState& x, const ControlInput& u_prev,
                    const Eigen::MatrixXd& ref, MpcStepInfo* info) override;

 private:
  const KoopmanModel* model_;
  MpcCore core_;
};

/// Baseline: local linearization about a fixed trim, per the comparison
/// protocol. Optional per-step relinearization sits behind a flag and is
/// not used in the reproduction runs.
class LinearMpcController final : public Controller {
 public:
  LinearMpcController(const VehicleParams& plant, const VehicleState& trim_state,
                      const ControlInput& trim_input, double ts, MpcConfig cfg,
                      QpSettings qp_settings, bool relinearize_each_step = false,
                      double fd_eps = 1e-5);

  int horizon() const override { return cfg_.horizon; }
  ControlInput step(const VehicleState& x, const ControlInput& u_prev,
                    const Eigen::MatrixXd& ref, MpcStepInfo* info) override;

 private:
  VehicleParams plant_;
  MpcConfig cfg_;
  QpSettings qp_settings_;
  double ts_;
  double fd_eps_;
  bool relinearize_;
  std::unique_ptr<MpcCore> core_;
};

/// Stateless single steps matching the per-operation contracts (cold QP,
/// no warm start). The stateful controllers produce the same inputs up to
/// solver tolerance.
ControlInput koopman_mpc_step(const VehicleState& x, const KoopmanModel& model,
                              const MpcConfig& cfg, const QpSettings& qp_settings,
                              const ControlInput& u_prev, const Eigen::MatrixXd& ref,
                              MpcStepInfo* info = nullptr);
ControlInput linear_mpc_step(const VehicleState& x, const VehicleState& trim_state,
                             const ControlInput& trim_input, const VehicleParams& plant,
                             double ts, const MpcConfig& cfg, const QpSettings& qp_settings,
                             const ControlInput& u_prev, const Eigen::MatrixXd& ref,
                             MpcStepInfo* info = nullptr);

using RefFn = std::function<std::array<double, 3>(double t)>;

struct ClosedLoopLog {
  double ts = 0.01;
  std::vector<VehicleState> states;        // n+1 samples
  std::vector<ControlInput> inputs;        // n applied inputs
  std::vector<std::array<double, 3>> refs; // n+1 reference samples
  std::vector<MpcStepInfo> qp_info;        // n entries
  bool terminated_early = false;
  std::string termination_reason;

  std::size_t steps() const { return inputs.size(); }
};

/// Alternates controller and plant for t_sim seconds. The reference window
/// holds the current reference constant across the horizon. Terminates
/// early (with the reason logged) if the plant trips the low-speed guard.
ClosedLoopLog simulate_closed_loop(const VehicleParams& plant, Controller& controller,
                                   const VehicleState& x0, const RefFn& ref, double t_sim,
                                   double ts);

/// Columns: t, state, input, ref, slack_max, qp_status, qp_iters. The final
/// sample has no applied input; its numeric cells are nan and its status is
/// `none`.
void write_log_csv(const ClosedLoopLog& log, const std::string& path);

}  // namespace koopcar
