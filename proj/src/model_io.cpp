#include <fstream>

#include "koopcar/binio.hpp"
#include "koopcar/koopman.hpp"

namespace koopcar {

// KCKM v1: header, eigenvalues, B (row-major), lift parameters, then the
// lift table as point coordinate arrays plus the row-major z block.

void save_model(const KoopmanModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write("KCKM", 4);
  binio::write_pod<std::uint32_t>(out, 1u);
  binio::write_pod<double>(out, m.ts);
  binio::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.n_outputs));
  binio::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.eigenvalues.count()));
  binio::write_f64s(out, m.eigenvalues.lambdas.data(), m.eigenvalues.lambdas.size());

  const Eigen::MatrixXd& b = m.b;
  for (Eigen::Index r = 0; r < b.rows(); ++r) {
    for (Eigen::Index c = 0; c < b.cols(); ++c) binio::write_pod<double>(out, b(r, c));
  }

  binio::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.lift_params.k_neighbors));
  binio::write_pod<double>(out, m.lift_params.idw_power);

  binio::write_pod<std::uint64_t>(out, m.table.size());
  binio::write_f64s(out, m.table.px.data(), m.table.px.size());
  binio::write_f64s(out, m.table.py.data(), m.table.py.size());
  binio::write_f64s(out, m.table.pr.data(), m.table.pr.size());
  binio::write_f64s(out, m.table.z.data(), m.table.z.size());
  out.write(reinterpret_cast<const char*>(m.table.traj_id.data()),
            static_cast<std::streamsize>(m.table.traj_id.size() * sizeof(std::int32_t)));
  out.write(reinterpret_cast<const char*>(m.table.step_k.data()),
            static_cast<std::streamsize>(m.table.step_k.size() * sizeof(std::int32_t)));

  binio::write_string(out, m.config_snapshot);
  if (!out) throw IoError("write failed: " + path);
}

KoopmanModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  binio::expect_magic(in, "KCKM", "model");
  const auto version = binio::read_pod<std::uint32_t>(in);
  if (version != 1) throw IoError("unsupported model version");

  KoopmanModel m;
  m.ts = binio::read_pod<double>(in);
  m.n_outputs = static_cast<int>(binio::read_pod<std::uint32_t>(in));
  const auto n_lambda = binio::read_pod<std::uint32_t>(in);
  m.eigenvalues.ts = m.ts;
  m.eigenvalues.lambdas.resize(n_lambda);
  binio::read_f64s(in, m.eigenvalues.lambdas.data(), n_lambda);

  const int dim = m.dim();
  m.b.resize(dim, 4);
  for (Eigen::Index r = 0; r < m.b.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.b.cols(); ++c) m.b(r, c) = binio::read_pod<double>(in);
  }

  m.lift_params.k_neighbors = static_cast<int>(binio::read_pod<std::uint32_t>(in));
  m.lift_params.idw_power = binio::read_pod<double>(in);

  const auto n_points = binio::read_pod<std::uint64_t>(in);
  m.table.dim = dim;
  m.table.px.resize(n_points);
  m.table.py.resize(n_points);
  m.table.pr.resize(n_points);
  m.table.z.resize(n_points * static_cast<std::size_t>(dim));
  binio::read_f64s(in, m.table.px.data(), n_points);
  binio::read_f64s(in, m.table.py.data(), n_points);
  binio::read_f64s(in, m.table.pr.data(), n_points);
  binio::read_f64s(in, m.table.z.data(), m.table.z.size());
  m.table.traj_id.resize(n_points);
  m.table.step_k.resize(n_points);
  in.read(reinterpret_cast<char*>(m.table.traj_id.data()),
          static_cast<std::streamsize>(n_points * sizeof(std::int32_t)));
  in.read(reinterpret_cast<char*>(m.table.step_k.data()),
          static_cast<std::streamsize>(n_points * sizeof(std::int32_t)));
  if (!in) throw IoError("unexpected end of file: " + path);

  m.config_snapshot = binio::read_string(in);
  return m;
}

}  // namespace koopcar
