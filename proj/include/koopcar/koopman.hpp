#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "koopcar/dataset.hpp"

namespace koopcar {

/// Koopman eigenvalues, real, distinct, strictly decreasing in (0, 1].
struct EigenvalueSet {
  std::vector<double> lambdas;
  double ts = 0.01;

  int count() const { return static_cast<int>(lambdas.size()); }
  void validate() const;  // throws on ordering/range violations
};

/// Default spectrum: a constant mode (lambda = 1) plus n-1 discrete decay
/// rates exp(-ts/tau) with tau log-spaced over [tau_min, tau_max] seconds.
EigenvalueSet select_eigenvalues(int n, double ts, double tau_min = 0.02,
                                 double tau_max = 5.0);

/// Greedy refinement: grows a spectrum from a candidate grid (defaults plus
/// `grid_size` values), each pick minimizing the regularized per-trajectory
/// fit residual on `data`. Falls back to the default set when greedy does
/// not improve on it, so the result never fits worse than the default.
EigenvalueSet select_eigenvalues_greedy(int n, double ts, const Dataset& data, double zeta,
                                        int grid_size = 500, double tau_min = 0.02,
                                        double tau_max = 5.0);

/// Total regularized least-squares residual of the per-trajectory fit with
/// the given spectrum (sum over trajectories and outputs).
double gfit_residual(const Dataset& d, const EigenvalueSet& eig, double zeta);

/// Eigenfunction coefficients g[p][i][j] for output p, eigenvalue i,
/// trajectory j. Stored trajectory-major so a trajectory's block is exactly
/// the lifted vector at its start.
struct GTable {
  int n_outputs = 0;
  int n_lambda = 0;
  int n_traj = 0;
  std::vector<double> values;  // [j][p][i]

  double at(int p, int i, int j) const {
    return values[static_cast<std::size_t>(j) * n_outputs * n_lambda +
                  static_cast<std::size_t>(p) * n_lambda + i];
  }
  const double* traj_block(int j) const {
    return values.data() + static_cast<std::size_t>(j) * n_outputs * n_lambda;
  }
};

/// Ridge fit of the eigenfunction coefficients, per trajectory and output:
/// min ||L g - F||^2 + zeta ||g||^2 with L[k][i] = lambda_i^k over the
/// trajectory's stored samples. Solved in closed form via the normal
/// equations; the factorization is shared across trajectories of equal
/// length.
GTable fit_g(const Dataset& d, const EigenvalueSet& eig, double zeta = 1e-12);

/// Every trajectory sample with its lifted vector. Coordinates are stored
/// as structure-of-arrays for the k-NN distance kernel.
struct LiftTable {
  int dim = 0;  // n_outputs * n_lambda
  std::vector<double> px, py, pr;     // vx, vy, yaw_rate per sample
  std::vector<double> z;              // row-major size() x dim
  std::vector<std::int32_t> traj_id;  // provenance
  std::vector<std::int32_t> step_k;

  std::size_t size() const { return px.size(); }
  const double* z_row(std::size_t i) const { return z.data() + i * dim; }
};

/// Lifted vectors z(x_k) = Lambda^k g(x_0), propagated sample-to-sample by
/// elementwise multiplication so that z_{k+1} = Lambda z_k holds exactly in
/// floating point.
LiftTable build_lift_table(const Dataset& d, const EigenvalueSet& eig, const GTable& g);

struct LiftParams {
  int k_neighbors = 8;
  double idw_power = 2.0;
};

/// Lift an arbitrary state: inverse-distance-weighted average of the k
/// nearest table entries (Euclidean distance in state space). A table hit
/// within 1e-12 returns the stored vector.
Eigen::VectorXd lift(const LiftTable& table, const VehicleState& x, const LiftParams& lp);

/// Diagonal A (eigenvalues repeated per output block) and the ones-block C.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> assemble_AC(const EigenvalueSet& eig,
                                                        int n_outputs = 3);

struct BFitDiagnostics {
  Eigen::Index rank = 0;
  double objective = 0.0;          // sum of squared multi-step residuals at B
  double objective_at_zero = 0.0;  // same with B = 0
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Input matrix fit over whole controlled trajectories: minimizes the
/// multi-step output prediction error, which is linear in B. Solved as one
/// dense least-squares problem (minimum-norm when rank deficient). Start
/// lifts come from the table: exact hits for starts that are table points.
Eigen::MatrixXd fit_B(const Dataset& controlled, const EigenvalueSet& eig,
                      const LiftTable& table, const LiftParams& lp, int n_outputs = 3,
                      BFitDiagnostics* diag = nullptr);

/// The assembled lifted linear predictor plus everything needed to lift.
struct KoopmanModel {
  double ts = 0.01;
  int n_outputs = 3;
  EigenvalueSet eigenvalues;
  Eigen::MatrixXd b;  // dim() x 4
  LiftTable table;
  LiftParams lift_params;
  std::string config_snapshot;

  int dim() const { return n_outputs * eigenvalues.count(); }
  std::vector<double> a_diag() const;
  Eigen::MatrixXd dense_A() const;
  Eigen::MatrixXd dense_C() const;
  Eigen::VectorXd lift_state(const VehicleState& x) const {
    return lift(table, x, lift_params);
  }
};

/// Iterates z+ = A z + B u, y = C z; returns outputs y_0..y_K as a
/// (K+1) x n_outputs matrix for K inputs.
Eigen::MatrixXd predict(const KoopmanModel& m, const Eigen::VectorXd& z0,
                        const std::vector<ControlInput>& inputs);

/// 100 * ||pred - truth||_F / ||truth||_F over matched sample-major output
/// matrices. Throws when the reference has zero norm.
double rmse_percent(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred);

void save_model(const KoopmanModel& m, const std::string& path);
KoopmanModel load_model(const std::string& path);

}  // namespace koopcar
