#include "koopcar/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "koopcar/kernels.hpp"
#include "koopcar/parallel.hpp"

namespace koopcar {

void EigenvalueSet::validate() const {
  if (lambdas.empty()) throw std::invalid_argument("eigenvalue set is empty");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0 && lambdas[i] <= 1.0)) {
      throw std::invalid_argument("eigenvalues must lie in (0, 1]");
    }
    if (i > 0 && !(lambdas[i] < lambdas[i - 1])) {
      throw std::invalid_argument("eigenvalues must be strictly decreasing");
    }
  }
}

EigenvalueSet select_eigenvalues(int n, double ts, double tau_min, double tau_max) {
  if (n < 2) throw std::invalid_argument("select_eigenvalues: n must be >= 2");
  if (!(ts > 0.0) || !(tau_min > 0.0) || !(tau_max >= tau_min)) {
    throw std::invalid_argument("select_eigenvalues: bad ts or tau range");
  }

  EigenvalueSet out;
  out.ts = ts;
  out.lambdas.push_back(1.0);
  const int m = n - 1;
  for (int i = 0; i < m; ++i) {
    // tau descending from tau_max to tau_min makes the lambdas descending.
    const double frac = m > 1 ? static_cast<double>(i) / (m - 1) : 1.0;
    const double tau = tau_max * std::pow(tau_min / tau_max, frac);
    out.lambdas.push_back(std::exp(-ts / tau));
  }
  out.validate();
  return out;
}

namespace {

// L[k][i] = lambda_i^k over `rows` samples, built row by row.
Eigen::MatrixXd decay_matrix(const std::vector<double>& lambdas, std::size_t rows) {
  const auto m = static_cast<Eigen::Index>(lambdas.size());
  Eigen::MatrixXd l(static_cast<Eigen::Index>(rows), m);
  for (Eigen::Index i = 0; i < m; ++i) l(0, i) = 1.0;
  for (Eigen::Index k = 1; k < l.rows(); ++k) {
    for (Eigen::Index i = 0; i < m; ++i) l(k, i) = l(k - 1, i) * lambdas[i];
  }
  return l;
}

struct RidgeFactor {
  Eigen::MatrixXd l;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
};

// Shared per trajectory length: the normal-equation factorization depends
// only on the sample count.
std::map<std::size_t, RidgeFactor> ridge_factors(const Dataset& d,
                                                 const std::vector<double>& lambdas,
                                                 double zeta) {
  std::map<std::size_t, RidgeFactor> factors;
  for (const Trajectory& t : d.trajectories) {
    const std::size_t rows = t.states.size();
    if (factors.count(rows)) continue;
    RidgeFactor f;
    f.l = decay_matrix(lambdas, rows);
    Eigen::MatrixXd normal = f.l.transpose() * f.l;
    normal.diagonal().array() += zeta;
    f.ldlt.compute(normal);
    if (f.ldlt.info() != Eigen::Success) {
      throw std::runtime_error("fit_g: normal equations not factorizable");
    }
    factors.emplace(rows, std::move(f));
  }
  return factors;
}

Eigen::MatrixXd trajectory_outputs(const Trajectory& t) {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(t.states.size()), 3);
  for (std::size_t k = 0; k < t.states.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    f(r, 0) = t.states[k].vx;
    f(r, 1) = t.states[k].vy;
    f(r, 2) = t.states[k].yaw_rate;
  }
  if (!f.allFinite()) throw std::runtime_error("fit_g: non-finite trajectory data");
  return f;
}

}  // namespace

GTable fit_g(const Dataset& d, const EigenvalueSet& eig, double zeta) {
  if (d.trajectories.empty()) throw std::invalid_argument("fit_g: empty dataset");
  eig.validate();
  if (!(zeta >= 0.0)) throw std::invalid_argument("fit_g: zeta must be >= 0");

  const int m = eig.count();
  const auto factors = ridge_factors(d, eig.lambdas, zeta);

  GTable g;
  g.n_outputs = 3;
  g.n_lambda = m;
  g.n_traj = static_cast<int>(d.trajectories.size());
  g.values.resize(static_cast<std::size_t>(g.n_traj) * 3 * m);

  parallel_for(d.trajectories.size(), [&](std::size_t j) {
    const Trajectory& t = d.trajectories[j];
    const RidgeFactor& f = factors.at(t.states.size());
    const Eigen::MatrixXd outputs = trajectory_outputs(t);
    const Eigen::MatrixXd sol = f.ldlt.solve(f.l.transpose() * outputs);  // m x 3
    if (!sol.allFinite()) throw std::runtime_error("fit_g: singular fit beyond ridge rescue");
    double* block = g.values.data() + j * 3 * static_cast<std::size_t>(m);
    for (int p = 0; p < 3; ++p) {
      for (int i = 0; i < m; ++i) block[p * m + i] = sol(i, p);
    }
  });
  return g;
}

double gfit_residual(const Dataset& d, const EigenvalueSet& eig, double zeta) {
  const GTable g = fit_g(d, eig, zeta);
  const int m = eig.count();

  std::map<std::size_t, Eigen::MatrixXd> lmats;
  double total = 0.0;
  for (int j = 0; j < g.n_traj; ++j) {
    const Trajectory& t = d.trajectories[static_cast<std::size_t>(j)];
    auto it = lmats.find(t.states.size());
    if (it == lmats.end()) {
      it = lmats.emplace(t.states.size(), decay_matrix(eig.lambdas, t.states.size())).first;
    }
    const Eigen::MatrixXd outputs = trajectory_outputs(t);
    for (int p = 0; p < 3; ++p) {
      Eigen::VectorXd gp(m);
      for (int i = 0; i < m; ++i) gp[i] = g.at(p, i, j);
      total += (it->second * gp - outputs.col(p)).squaredNorm() + zeta * gp.squaredNorm();
    }
  }
  return total;
}

EigenvalueSet select_eigenvalues_greedy(int n, double ts, const Dataset& data, double zeta,
                                        int grid_size, double tau_min, double tau_max) {
  if (n < 2) throw std::invalid_argument("select_eigenvalues_greedy: n must be >= 2");
  const EigenvalueSet fallback = select_eigenvalues(n, ts, tau_min, tau_max);
  if (data.trajectories.empty()) return fallback;

  // Greedy selection is quadratic in the spectrum size; a trajectory
  // subsample keeps it tractable without changing the outcome much.
  Dataset sample;
  sample.kind = data.kind;
  sample.ts = data.ts;
  const std::size_t max_traj = 50;
  const std::size_t stride = std::max<std::size_t>(1, data.trajectories.size() / max_traj);
  for (std::size_t j = 0; j < data.trajectories.size(); j += stride) {
    sample.trajectories.push_back(data.trajectories[j]);
  }

  std::vector<double> candidates = fallback.lambdas;
  for (int i = 0; i < grid_size; ++i) {
    const double frac = grid_size > 1 ? static_cast<double>(i) / (grid_size - 1) : 0.0;
    const double tau = tau_max * std::pow(tau_min / tau_max, frac);
    candidates.push_back(std::exp(-ts / tau));
  }
  std::sort(candidates.begin(), candidates.end(), std::greater<>());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::vector<double> chosen;
  for (int round = 0; round < n; ++round) {
    double best_residual = std::numeric_limits<double>::infinity();
    double best_lambda = 0.0;
    for (double cand : candidates) {
      if (std::find(chosen.begin(), chosen.end(), cand) != chosen.end()) continue;
      std::vector<double> trial = chosen;
      trial.push_back(cand);
      std::sort(trial.begin(), trial.end(), std::greater<>());
      EigenvalueSet es;
      es.ts = ts;
      es.lambdas = std::move(trial);
      const double r = gfit_residual(sample, es, zeta);
      if (r < best_residual) {
        best_residual = r;
        best_lambda = cand;
      }
    }
    chosen.push_back(best_lambda);
    std::sort(chosen.begin(), chosen.end(), std::greater<>());
  }

  EigenvalueSet greedy;
  greedy.ts = ts;
  greedy.lambdas = chosen;
  greedy.validate();

  // Refinement must never fit worse than the default spectrum.
  const double greedy_res = gfit_residual(sample, greedy, zeta);
  const double default_res = gfit_residual(sample, fallback, zeta);
  return greedy_res <= default_res ? greedy : fallback;
}

LiftTable build_lift_table(const Dataset& d, const EigenvalueSet& eig, const GTable& g) {
  eig.validate();
  const int m = eig.count();
  const int dim = g.n_outputs * m;
  if (g.n_traj != static_cast<int>(d.trajectories.size())) {
    throw std::invalid_argument("build_lift_table: g table does not match dataset");
  }

  std::vector<double> lam_rep(static_cast<std::size_t>(dim));
  for (int p = 0; p < g.n_outputs; ++p) {
    std::copy(eig.lambdas.begin(), eig.lambdas.end(), lam_rep.begin() + p * m);
  }

  std::size_t total = 0;
  for (const Trajectory& t : d.trajectories) total += t.states.size();

  LiftTable table;
  table.dim = dim;
  table.px.reserve(total);
  table.py.reserve(total);
  table.pr.reserve(total);
  table.z.reserve(total * static_cast<std::size_t>(dim));
  table.traj_id.reserve(total);
  table.step_k.reserve(total);

  std::vector<double> zk(static_cast<std::size_t>(dim));
  std::vector<double> znext(static_cast<std::size_t>(dim));
  for (int j = 0; j < g.n_traj; ++j) {
    const Trajectory& t = d.trajectories[static_cast<std::size_t>(j)];
    std::copy(g.traj_block(j), g.traj_block(j) + dim, zk.begin());
    for (std::size_t k = 0; k < t.states.size(); ++k) {
      const VehicleState& s = t.states[k];
      table.px.push_back(s.vx);
      table.py.push_back(s.vy);
      table.pr.push_back(s.yaw_rate);
      table.traj_id.push_back(j);
      table.step_k.push_back(static_cast<std::int32_t>(k));
      table.z.insert(table.z.end(), zk.begin(), zk.end());
      // z_{k+1} = Lambda z_k, elementwise: the linear-evolution identity
      // holds bit-exactly for stored consecutive samples.
      kern::cwise_mul(znext.data(), zk.data(), lam_rep.data(), zk.size());
      std::swap(zk, znext);
    }
  }
  return table;
}

Eigen::VectorXd lift(const LiftTable& table, const VehicleState& x, const LiftParams& lp) {
  const std::size_t n = table.size();
  if (n == 0) throw std::invalid_argument("lift: empty table");
  const int k = std::max(1, std::min<int>(lp.k_neighbors, static_cast<int>(n)));

  thread_local std::vector<double> d2;
  thread_local std::vector<std::uint32_t> order;
  d2.resize(n);
  kern::dist2_3d(table.px.data(), table.py.data(), table.pr.data(), n, x.vx, x.vy,
                 x.yaw_rate, d2.data());

  order.resize(n);
  std::iota(order.begin(), order.end(), 0u);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (d2[a] != d2[b]) return d2[a] < d2[b];
                      return a < b;  // deterministic tie-break
                    });

  Eigen::VectorXd z = Eigen::VectorXd::Zero(table.dim);
  if (d2[order[0]] < 1e-24) {  // exact table hit (distance < 1e-12)
    const double* row = table.z_row(order[0]);
    std::copy(row, row + table.dim, z.data());
    return z;
  }

  // Normalized inverse-distance weights; a single neighbor gets weight
  // exactly one.
  thread_local std::vector<double> weights;
  weights.resize(static_cast<std::size_t>(k));
  double wsum = 0.0;
  for (int i = 0; i < k; ++i) {
    const std::uint32_t idx = order[static_cast<std::size_t>(i)];
    weights[static_cast<std::size_t>(i)] =
        lp.idw_power == 2.0 ? 1.0 / d2[idx] : std::pow(d2[idx], -0.5 * lp.idw_power);
    wsum += weights[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < k; ++i) {
    const std::uint32_t idx = order[static_cast<std::size_t>(i)];
    kern::axpy(weights[static_cast<std::size_t>(i)] / wsum, table.z_row(idx), z.data(),
               static_cast<std::size_t>(table.dim));
  }
  return z;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> assemble_AC(const EigenvalueSet& eig,
                                                        int n_outputs) {
  eig.validate();
  const int m = eig.count();
  const int dim = n_outputs * m;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n_outputs, dim);
  for (int p = 0; p < n_outputs; ++p) {
    for (int i = 0; i < m; ++i) {
      a(p * m + i, p * m + i) = eig.lambdas[static_cast<std::size_t>(i)];
      c(p, p * m + i) = 1.0;
    }
  }
  return {std::move(a), std::move(c)};
}

Eigen::MatrixXd fit_B(const Dataset& controlled, const EigenvalueSet& eig,
                      const LiftTable& table, const LiftParams& lp, int n_outputs,
                      BFitDiagnostics* diag) {
  eig.validate();
  const int m = eig.count();
  const int dim = n_outputs * m;
  if (table.dim != dim) throw std::invalid_argument("fit_B: table dimension mismatch");

  std::size_t rows_total = 0;
  for (const Trajectory& t : controlled.trajectories) rows_total += t.steps();
  if (rows_total == 0) throw std::invalid_argument("fit_B: dataset has no transitions");

  // The multi-step residual is linear in B and identical in structure for
  // every output block, so one regressor with three right-hand sides covers
  // the whole fit. Column (c, i) holds sum_{t<k} lambda_i^{k-1-t} u_t[c].
  Eigen::MatrixXd regressor(static_cast<Eigen::Index>(rows_total), 4 * m);
  Eigen::MatrixXd rhs(static_cast<Eigen::Index>(rows_total), n_outputs);

  std::vector<double> lam_rep(static_cast<std::size_t>(dim));
  for (int p = 0; p < n_outputs; ++p) {
    std::copy(eig.lambdas.begin(), eig.lambdas.end(), lam_rep.begin() + p * m);
  }

  Eigen::Index r = 0;
  std::vector<double> zk(static_cast<std::size_t>(dim));
  std::vector<double> znext(static_cast<std::size_t>(dim));
  Eigen::MatrixXd conv(4, m);
  for (const Trajectory& t : controlled.trajectories) {
    if (t.steps() == 0) continue;
    const Eigen::VectorXd z0 = lift(table, t.x0(), lp);
    std::copy(z0.data(), z0.data() + dim, zk.begin());
    conv.setZero();
    for (std::size_t k = 1; k < t.states.size(); ++k) {
      const ControlInput& u = t.inputs[k - 1];
      const double uvec[4] = {u.kappa_f, u.kappa_r, u.delta_f, u.delta_r};
      for (int c = 0; c < 4; ++c) {
        for (int i = 0; i < m; ++i) {
          conv(c, i) = conv(c, i) * eig.lambdas[static_cast<std::size_t>(i)] + uvec[c];
        }
      }
      kern::cwise_mul(znext.data(), zk.data(), lam_rep.data(), zk.size());
      std::swap(zk, znext);  // zk = Lambda^k z0

      for (int c = 0; c < 4; ++c) {
        for (int i = 0; i < m; ++i) regressor(r, c * m + i) = conv(c, i);
      }
      const VehicleState& xk = t.states[k];
      const double out[3] = {xk.vx, xk.vy, xk.yaw_rate};
      for (int p = 0; p < n_outputs; ++p) {
        rhs(r, p) = out[p] - kern::sum(zk.data() + p * m, static_cast<std::size_t>(m));
      }
      ++r;
    }
  }

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(regressor);
  const Eigen::MatrixXd sol = cod.solve(rhs);  // (4m) x n_outputs, minimum norm

  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(dim, 4);
  for (int p = 0; p < n_outputs; ++p) {
    for (int c = 0; c < 4; ++c) {
      for (int i = 0; i < m; ++i) b(p * m + i, c) = sol(c * m + i, p);
    }
  }

  if (diag) {
    diag->rank = cod.rank();
    diag->rows = rows_total;
    diag->cols = static_cast<std::size_t>(4 * m);
    diag->objective = (regressor * sol - rhs).squaredNorm();
    diag->objective_at_zero = rhs.squaredNorm();
  }
  return b;
}

std::vector<double> KoopmanModel::a_diag() const {
  const int m = eigenvalues.count();
  std::vector<double> d(static_cast<std::size_t>(dim()));
  for (int p = 0; p < n_outputs; ++p) {
    std::copy(eigenvalues.lambdas.begin(), eigenvalues.lambdas.end(), d.begin() + p * m);
  }
  return d;
}

Eigen::MatrixXd KoopmanModel::dense_A() const { return assemble_AC(eigenvalues, n_outputs).first; }

Eigen::MatrixXd KoopmanModel::dense_C() const {
  return assemble_AC(eigenvalues, n_outputs).second;
}

Eigen::MatrixXd predict(const KoopmanModel& m, const Eigen::VectorXd& z0,
                        const std::vector<ControlInput>& inputs) {
  const int dim = m.dim();
  const int nl = m.eigenvalues.count();
  if (z0.size() != dim) throw std::invalid_argument("predict: z0 dimension mismatch");

  const std::vector<double> lam_rep = m.a_diag();
  std::vector<double> zk(z0.data(), z0.data() + dim);
  std::vector<double> znext(static_cast<std::size_t>(dim));

  Eigen::MatrixXd y(static_cast<Eigen::Index>(inputs.size()) + 1, m.n_outputs);
  auto emit = [&](Eigen::Index row) {
    for (int p = 0; p < m.n_outputs; ++p) {
      y(row, p) = kern::sum(zk.data() + p * nl, static_cast<std::size_t>(nl));
    }
  };
  emit(0);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    kern::cwise_mul(znext.data(), zk.data(), lam_rep.data(), zk.size());
    std::swap(zk, znext);
    const ControlInput& u = inputs[k];
    const double uvec[4] = {u.kappa_f, u.kappa_r, u.delta_f, u.delta_r};
    for (int c = 0; c < 4; ++c) {
      if (uvec[c] != 0.0) {
        kern::axpy(uvec[c], m.b.col(c).data(), zk.data(), static_cast<std::size_t>(dim));
      }
    }
    emit(static_cast<Eigen::Index>(k) + 1);
  }
  return y;
}

double rmse_percent(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols()) {
    throw std::invalid_argument("rmse_percent: shape mismatch");
  }
  const double denom = truth.norm();
  if (denom == 0.0) throw std::invalid_argument("rmse_percent: zero reference norm");
  return 100.0 * (pred - truth).norm() / denom;
}

}  // namespace koopcar
