#pragma once

// Shared helpers for the test suites: temp dirs, table builders and
// independent numeric oracles.

#include <Eigen/Dense>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "knobforge/table.hpp"

namespace kf_test {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("knobforge_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Knob columns k0.., metric columns m0.., then latency.
inline knobforge::Schema simple_schema(int knobs, int metrics, bool latency = true) {
  knobforge::Schema s;
  for (int i = 0; i < knobs; ++i) s.push_back({"k" + std::to_string(i), knobforge::ColumnKind::Knob});
  for (int i = 0; i < metrics; ++i) s.push_back({"m" + std::to_string(i), knobforge::ColumnKind::Metric});
  if (latency) s.push_back({"latency", knobforge::ColumnKind::Latency});
  return s;
}

inline knobforge::WorkloadTable make_table(const std::string& id, const knobforge::Schema& schema, const Eigen::MatrixXd& values) {
  knobforge::WorkloadTable t{id, schema, values, {}};
  for (Eigen::Index r = 0; r < values.rows(); ++r) t.origins.push_back({id, static_cast<std::size_t>(r)});
  return t;
}

inline knobforge::WorkloadRepository make_repo(const std::vector<knobforge::WorkloadTable>& tables) {
  knobforge::WorkloadRepository repo;
  if (!tables.empty()) repo.schema = tables.front().schema;
  for (const auto& t : tables) repo.tables.emplace(t.workload_id, t);
  return repo;
}

/// Cyclic Jacobi eigenvalue iteration for symmetric matrices; ascending order.
/// Written independently of Eigen's solvers to serve as an oracle.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a, double tol = 1e-14, int max_sweeps = 100) {
  const auto n = a.rows();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < tol * tol) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

/// Pearson correlation computed with plain loops (oracle for metric_correlation).
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Rows 1..m of the 8x8 Sylvester-Hadamard matrix: mutually orthogonal,
/// zero-mean +-1 vectors, so their correlation matrix is exactly the identity.
inline Eigen::MatrixXd hadamard_rows(int m) {
  Eigen::MatrixXd h(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) h(i, j) = (__builtin_popcount(static_cast<unsigned>(i & j)) % 2 == 0) ? 1.0 : -1.0;
  return h.middleRows(1, m);
}

}  // namespace kf_test
