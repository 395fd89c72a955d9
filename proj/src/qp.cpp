#include "koopcar/qp.hpp"

#include <cmath>
#include <fstream>

#include "koopcar/binio.hpp"
#include "koopcar/kernels.hpp"

namespace koopcar {

void QpProblem::validate() const {
  const Eigen::Index n = num_vars();
  if (h_mat.rows() != n || h_mat.cols() != n) {
    throw std::invalid_argument("QpProblem: H must be n x n");
  }
  if ((h_mat - h_mat.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + h_mat.norm())) {
    throw std::invalid_argument("QpProblem: H must be symmetric");
  }
  if (g_mat.rows() != h_vec.size() || (g_mat.rows() > 0 && g_mat.cols() != n)) {
    throw std::invalid_argument("QpProblem: G/h dimensions inconsistent");
  }
}

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::max_iters: return "max_iters";
    case QpStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

void AdmmSolver::setup(const Eigen::MatrixXd& h_mat, const Eigen::MatrixXd& g_mat,
                       const QpSettings& settings) {
  settings_ = settings;
  n_ = h_mat.rows();
  m_ = g_mat.rows();
  h_ = h_mat;
  rho_ = settings.rho;
  has_warm_ = false;

  row_scale_.resize(m_);
  g_scaled_.resize(m_, n_);
  for (Eigen::Index i = 0; i < m_; ++i) {
    const double norm = g_mat.row(i).norm();
    row_scale_[i] = norm > 1e-12 ? 1.0 / norm : 1.0;
    g_scaled_.row(i) = row_scale_[i] * g_mat.row(i);
  }
  if (m_ > 0) gtg_ = g_scaled_.transpose() * g_scaled_;

  factorize();
}

void AdmmSolver::factorize() {
  Eigen::MatrixXd kkt = h_;
  kkt.diagonal().array() += settings_.sigma;
  if (m_ > 0) kkt.noalias() += rho_ * gtg_;
  kkt_.compute(kkt);
  if (kkt_.info() != Eigen::Success) {
    throw std::runtime_error("AdmmSolver: KKT factorization failed (H not PSD?)");
  }
}

void AdmmSolver::set_warm_start(const Eigen::VectorXd& w, const Eigen::VectorXd& mu) {
  if (w.size() != n_ || mu.size() != m_) {
    throw std::invalid_argument("warm start dimension mismatch");
  }
  warm_w_ = w;
  warm_mu_ = mu;
  has_warm_ = true;
}

void AdmmSolver::clear_warm_start() { has_warm_ = false; }

QpSolution AdmmSolver::solve(const Eigen::VectorXd& f, const Eigen::VectorXd& h_vec) {
  if (f.size() != n_ || h_vec.size() != m_) {
    throw std::invalid_argument("AdmmSolver::solve: dimension mismatch");
  }

  QpSolution sol;

  if (m_ == 0) {
    // Unconstrained: the stationary point solves H w = -f directly.
    Eigen::LDLT<Eigen::MatrixXd> hf(h_);
    sol.w = hf.solve(-f);
    sol.mu.resize(0);
    Eigen::VectorXd grad(n_);
    kern::matvec_row(h_.data(), static_cast<std::size_t>(n_), static_cast<std::size_t>(n_),
                     sol.w.data(), grad.data());
    grad += f;
    sol.dual_residual = kern::inf_norm(grad.data(), static_cast<std::size_t>(n_));
    sol.status = sol.w.allFinite() && sol.dual_residual < 1e-6 * (1.0 + f.norm())
                     ? QpStatus::optimal
                     : QpStatus::infeasible;
    sol.iterations = 0;
    return sol;
  }

  const double alpha = settings_.alpha;
  const double sigma = settings_.sigma;
  const auto nm = static_cast<std::size_t>(m_);
  const auto nn = static_cast<std::size_t>(n_);

  // Scaled bounds and warm duals (row i of G was multiplied by e_i).
  Eigen::VectorXd h_scaled = row_scale_.cwiseProduct(h_vec);

  Eigen::VectorXd w = has_warm_ ? warm_w_ : Eigen::VectorXd::Zero(n_);
  Eigen::VectorXd mu(m_);
  if (has_warm_) {
    mu = warm_mu_.cwiseQuotient(row_scale_);
  } else {
    mu.setZero();
  }

  Eigen::VectorXd y(m_);
  kern::matvec_row(g_scaled_.data(), nm, nn, w.data(), y.data());
  kern::clip_upper(y.data(), h_scaled.data(), nm);

  Eigen::VectorXd rhs(n_), w_tilde(n_), gw_tilde(m_), v(m_), y_new(m_);
  Eigen::VectorXd hw(n_), gw(m_), gtmu(n_), t_m(m_);

  int iter = 0;
  while (iter < settings_.max_iters) {
    ++iter;

    // w-step: (H + sigma I + rho G'G) w~ = sigma w - f + G'(rho y - mu)
    rhs = sigma * w - f;
    t_m = rho_ * y - mu;
    kern::matvec_t_accum(g_scaled_.data(), nm, nn, t_m.data(), rhs.data());
    w_tilde = kkt_.solve(rhs);
    kern::matvec_row(g_scaled_.data(), nm, nn, w_tilde.data(), gw_tilde.data());

    // over-relaxed updates
    w = alpha * w_tilde + (1.0 - alpha) * w;
    v = alpha * gw_tilde + (1.0 - alpha) * y + mu / rho_;
    y_new = v;
    kern::clip_upper(y_new.data(), h_scaled.data(), nm);
    mu = rho_ * (v - y_new);
    y = y_new;

    if (iter % settings_.check_interval == 0 || iter == settings_.max_iters) {
      kern::matvec_row(h_.data(), nn, nn, w.data(), hw.data());
      kern::matvec_row(g_scaled_.data(), nm, nn, w.data(), gw.data());
      gtmu.setZero();
      kern::matvec_t_accum(g_scaled_.data(), nm, nn, mu.data(), gtmu.data());

      // Residuals in the original row scaling (divide scaled rows by e_i).
      double r_prim = 0.0, gw_norm = 0.0, y_norm = 0.0;
      for (Eigen::Index i = 0; i < m_; ++i) {
        const double inv_e = 1.0 / row_scale_[i];
        r_prim = std::max(r_prim, std::fabs(gw[i] - y[i]) * inv_e);
        gw_norm = std::max(gw_norm, std::fabs(gw[i]) * inv_e);
        y_norm = std::max(y_norm, std::fabs(y[i]) * inv_e);
      }
      double r_dual = 0.0, hw_norm = 0.0, gtmu_norm = 0.0;
      for (Eigen::Index i = 0; i < n_; ++i) {
        r_dual = std::max(r_dual, std::fabs(hw[i] + f[i] + gtmu[i]));
        hw_norm = std::max(hw_norm, std::fabs(hw[i]));
        gtmu_norm = std::max(gtmu_norm, std::fabs(gtmu[i]));
      }
      const double f_norm = kern::inf_norm(f.data(), nn);

      const double eps_prim =
          settings_.eps_abs + settings_.eps_rel * std::max(gw_norm, y_norm);
      const double eps_dual =
          settings_.eps_abs +
          settings_.eps_rel * std::max({hw_norm, f_norm, gtmu_norm});

      sol.primal_residual = r_prim;
      sol.dual_residual = r_dual;

      if (!w.allFinite() || kern::inf_norm(w.data(), nn) > 1e13) {
        sol.status = QpStatus::infeasible;
        sol.w = w;
        sol.mu = mu.cwiseProduct(row_scale_);
        sol.iterations = iter;
        return sol;
      }
      if (r_prim <= eps_prim && r_dual <= eps_dual) {
        sol.status = QpStatus::optimal;
        sol.w = w;
        sol.mu = mu.cwiseProduct(row_scale_);
        sol.iterations = iter;
        warm_w_ = sol.w;
        warm_mu_ = sol.mu;
        has_warm_ = true;
        return sol;
      }

      if (settings_.adaptive_rho && iter < settings_.max_iters) {
        const double prim_rel = r_prim / std::max({gw_norm, y_norm, 1e-10});
        const double dual_rel = r_dual / std::max({hw_norm, f_norm, gtmu_norm, 1e-10});
        double factor = std::sqrt(prim_rel / std::max(dual_rel, 1e-300));
        factor = std::min(100.0, std::max(0.01, factor));
        if (factor > 5.0 || factor < 0.2) {
          const double rho_new = std::min(1e6, std::max(1e-6, rho_ * factor));
          if (rho_new != rho_) {
            rho_ = rho_new;
            factorize();
          }
        }
      }
    }
  }

  sol.status = QpStatus::max_iters;
  sol.w = w;
  sol.mu = mu.cwiseProduct(row_scale_);
  sol.iterations = iter;
  warm_w_ = sol.w;
  warm_mu_ = sol.mu;
  has_warm_ = true;
  return sol;
}

QpSolution solve_qp(const QpProblem& p, const QpSettings& settings) {
  p.validate();
  AdmmSolver solver;
  solver.setup(p.h_mat, p.g_mat, settings);
  return solver.solve(p.f, p.h_vec);
}

KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& w,
                           const Eigen::VectorXd& mu) {
  if (w.size() != p.num_vars() || mu.size() != p.num_constraints()) {
    throw std::invalid_argument("kkt_residuals: dimension mismatch");
  }
  KktResiduals r;
  if (p.num_constraints() > 0) {
    const Eigen::VectorXd slack = p.g_mat * w - p.h_vec;
    r.primal = slack.cwiseMax(0.0).lpNorm<Eigen::Infinity>();
    r.complementarity = std::fabs(mu.dot(slack));
    r.dual = (p.h_mat * w + p.f + p.g_mat.transpose() * mu).lpNorm<Eigen::Infinity>();
  } else {
    r.dual = (p.h_mat * w + p.f).lpNorm<Eigen::Infinity>();
  }
  return r;
}

void dump_qp(const QpProblem& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write("KCQP", 4);
  binio::write_pod<std::uint32_t>(out, 1u);
  binio::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p.num_vars()));
  binio::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(p.num_constraints()));
  binio::write_f64s(out, p.h_mat.data(), static_cast<std::size_t>(p.h_mat.size()));
  binio::write_f64s(out, p.f.data(), static_cast<std::size_t>(p.f.size()));
  binio::write_f64s(out, p.g_mat.data(), static_cast<std::size_t>(p.g_mat.size()));
  binio::write_f64s(out, p.h_vec.data(), static_cast<std::size_t>(p.h_vec.size()));
}

}  // namespace koopcar
