#pragma once

#include <Eigen/Dense>

#include <string>

namespace koopcar {

/// Dense convex QP: minimize 1/2 w'Hw + f'w subject to Gw <= h.
struct QpProblem {
  Eigen::MatrixXd h_mat;  // n x n, symmetric PSD
  Eigen::VectorXd f;      // n
  Eigen::MatrixXd g_mat;  // m x n (m may be 0)
  Eigen::VectorXd h_vec;  // m

  Eigen::Index num_vars() const { return f.size(); }
  Eigen::Index num_constraints() const { return g_mat.rows(); }
  void validate() const;  // symmetry/dimension checks
};

struct QpSettings {
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  int max_iters = 20000;
  double rho = 1.0;     // initial penalty step
  double sigma = 1e-6;  // proximal regularization
  double alpha = 1.6;   // over-relaxation
  int check_interval = 10;
  // Deterministic penalty adaptation: at each residual check, rho is scaled
  // by sqrt(primal/dual residual ratio) (clamped) when the ratio drifts past
  // 5x, and the reduced system is refactorized. Fixed rho stalls on MPC
  // condensations that mix equality-pinned inputs with 1e5-weighted slacks.
  bool adaptive_rho = true;
};

enum class QpStatus { optimal, max_iters, infeasible };

const char* to_string(QpStatus s);

struct QpSolution {
  Eigen::VectorXd w;
  Eigen::VectorXd mu;  // inequality multipliers (>= 0 at optimum)
  QpStatus status = QpStatus::max_iters;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
};

/// Operator-splitting (ADMM) solver with over-relaxation and constraint-row
/// equilibration. Deterministic: fixed parameters, no adaptive steps, so
/// identical inputs give identical iterates. A solver instance owns its
/// workspace; reuse it across solves of the same problem structure (only f
/// and h changing) to keep the one-time factorization and the warm start.
class AdmmSolver {
 public:
  AdmmSolver() = default;

  /// Factorizes H + sigma I + rho G'G for the given structure.
  void setup(const Eigen::MatrixXd& h_mat, const Eigen::MatrixXd& g_mat,
             const QpSettings& settings);

  /// Solves with the current f/h. Uses the stored warm start when enabled.
  QpSolution solve(const Eigen::VectorXd& f, const Eigen::VectorXd& h_vec);

  void set_warm_start(const Eigen::VectorXd& w, const Eigen::VectorXd& mu);
  void clear_warm_start();

 private:
  using RowMajorMatrix =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  void factorize();

  QpSettings settings_;
  Eigen::Index n_ = 0, m_ = 0;
  double rho_ = 1.0;          // current penalty, persists across solves
  Eigen::MatrixXd h_;         // symmetric, so its data doubles as row-major
  RowMajorMatrix g_scaled_;   // row-equilibrated G for the iteration kernels
  Eigen::MatrixXd gtg_;       // G'G of the scaled constraints
  Eigen::VectorXd row_scale_; // e_i applied to row i of G
  Eigen::LDLT<Eigen::MatrixXd> kkt_;
  bool has_warm_ = false;
  Eigen::VectorXd warm_w_, warm_mu_;
};

/// One-shot convenience wrapper.
QpSolution solve_qp(const QpProblem& p, const QpSettings& settings = {});

struct KktResiduals {
  double primal = 0.0;          // || max(Gw - h, 0) ||_inf
  double dual = 0.0;            // || Hw + f + G'mu ||_inf
  double complementarity = 0.0; // | mu'(Gw - h) |
};

KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& w,
                           const Eigen::VectorXd& mu);

/// Debug dump of (H, f, G, h) in a small binary container for offline
/// inspection.
void dump_qp(const QpProblem& p, const std::string& path);

}  // namespace koopcar
