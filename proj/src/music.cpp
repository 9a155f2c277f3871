#include "icisense/music.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace icisense {

std::vector<double> AngleGrid::points() const {
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((stop_deg - start_deg) / step_deg + 1e-9));
  out.reserve(count);
  for (long i = 0; i < count; ++i) out.push_back(start_deg + i * step_deg);
  return out;
}

SpatialCovariance build_scm(const std::vector<CMatrix>& snapshots) {
  if (snapshots.empty()) throw std::invalid_argument("build_scm: no snapshots");
  const auto nr = snapshots.front().cols();
  CMatrix r = CMatrix::Zero(nr, nr);
  for (const auto& y : snapshots) r.noalias() += y.adjoint() * y;
  r = 0.5 * (r + r.adjoint()).eval();
  return {r};
}

SpatialCovariance build_scm(const DataCube& cube) {
  const int nr = cube.n_rx();
  CMatrix r = CMatrix::Zero(nr, nr);
  // Entry (i, j) = sum over all fast/slow samples of conj(y_i) y_j.
  for (int i = 0; i < nr; ++i)
    for (int j = i; j < nr; ++j) {
      const cplx v = (cube.antennas[i].array().conjugate() * cube.antennas[j].array()).sum();
      r(i, j) = v;
      r(j, i) = std::conj(v);
    }
  for (int i = 0; i < nr; ++i) r(i, i) = r(i, i).real();
  return {r};
}

std::vector<int> pick_peaks(const std::vector<double>& v, int max_count) {
  std::vector<int> peaks;
  for (size_t i = 1; i + 1 < v.size(); ++i)
    if (v[i] > v[i - 1] && v[i] > v[i + 1]) peaks.push_back(static_cast<int>(i));
  std::stable_sort(peaks.begin(), peaks.end(), [&](int a, int b) { return v[a] > v[b]; });
  if (static_cast<int>(peaks.size()) > max_count) peaks.resize(max_count);
  return peaks;
}

AngleEstimateSet music_spectrum(const SpatialCovariance& scm, const OfdmParams& params, const AngleGrid& grid,
                                int k) {
  const auto nr = static_cast<int>(scm.r.rows());
  if (k < 1 || k >= nr) throw std::invalid_argument("music_spectrum: source count must satisfy 1 <= k < nR");

  const CMatrix r = 0.5 * (scm.r + scm.r.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(r);
  if (eig.info() != Eigen::Success) throw std::runtime_error("music_spectrum: eigendecomposition failed");
  // Eigenvalues ascend, so the noise subspace is the first nR - k columns.
  const CMatrix un = eig.eigenvectors().leftCols(nr - k);

  AngleEstimateSet out;
  out.k_used = k;
  out.eigvals = eig.eigenvalues();
  out.grid_deg = grid.points();
  out.spectrum.reserve(out.grid_deg.size());
  for (double theta : out.grid_deg) {
    const CVector a = array_steering(nr, theta, params.d_over_lambda);
    const double denom = (un.adjoint() * a.conjugate()).squaredNorm();
    out.spectrum.push_back(1.0 / std::max(denom, 1e-300));
  }
  for (int idx : pick_peaks(out.spectrum, k)) out.angles_deg.push_back(out.grid_deg[idx]);
  out.fewer_peaks_than_requested = static_cast<int>(out.angles_deg.size()) < k;
  return out;
}

std::vector<double> bartlett_spectrum(const SpatialCovariance& scm, const OfdmParams& params,
                                      const std::vector<double>& grid_deg) {
  const auto nr = static_cast<int>(scm.r.rows());
  std::vector<double> out;
  out.reserve(grid_deg.size());
  for (double theta : grid_deg) {
    const CVector a = array_steering(nr, theta, params.d_over_lambda);
    out.push_back((a.transpose() * scm.r * a.conjugate()).value().real());
  }
  return out;
}

int estimate_source_count(const SpatialCovariance& scm, double ratio) {
  const auto nr = static_cast<int>(scm.r.rows());
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(0.5 * (scm.r + scm.r.adjoint()), Eigen::EigenvaluesOnly);
  std::vector<double> ev(eig.eigenvalues().data(), eig.eigenvalues().data() + nr);
  std::vector<double> sorted = ev;
  std::sort(sorted.begin(), sorted.end());
  const double median =
      nr % 2 ? sorted[nr / 2] : 0.5 * (sorted[nr / 2 - 1] + sorted[nr / 2]);
  int count = 0;
  for (double v : ev) count += v > ratio * std::max(median, 0.0) ? 1 : 0;
  // A rank-1 noiseless SCM has a zero median; count strictly positive mass.
  if (median <= 0.0) {
    const double top = sorted.back();
    count = 0;
    for (double v : ev) count += v > 1e-9 * top ? 1 : 0;
  }
  return std::clamp(count, 1, nr - 1);
}

}  // namespace icisense
