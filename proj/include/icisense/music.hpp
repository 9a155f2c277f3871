#pragma once

#include <vector>

#include "icisense/scene.hpp"
#include "icisense/simulator.hpp"

namespace icisense {

/// R = sum_m Ybar_m^H Ybar_m over the space/fast-time snapshots.
struct SpatialCovariance {
  CMatrix r;  // nR x nR, Hermitian
};

struct AngleGrid {
  double start_deg = -90.0;
  double stop_deg = 90.0;  // exclusive
  double step_deg = 0.1;
  std::vector<double> points() const;
};

struct AngleEstimateSet {
  std::vector<double> angles_deg;
  std::vector<double> grid_deg;
  std::vector<double> spectrum;  // f(theta) on grid_deg
  Eigen::VectorXd eigvals;       // ascending
  int k_used = 0;
  bool fewer_peaks_than_requested = false;
};

SpatialCovariance build_scm(const DataCube& cube);
SpatialCovariance build_scm(const std::vector<CMatrix>& snapshots);

/// MUSIC pseudo-spectrum f(theta) = 1 / (a^T U_n U_n^H a^*) on the grid and
/// the k strongest strict interior peaks. Throws std::invalid_argument when
/// k is outside [1, nR).
AngleEstimateSet music_spectrum(const SpatialCovariance& scm, const OfdmParams& params, const AngleGrid& grid,
                                int k);

/// Conventional (Bartlett) beam power a^T R a^* on the same grid.
std::vector<double> bartlett_spectrum(const SpatialCovariance& scm, const OfdmParams& params,
                                      const std::vector<double>& grid_deg);

/// Strict interior local maxima sorted by decreasing value, at most max_count.
std::vector<int> pick_peaks(const std::vector<double>& values, int max_count);

/// Number of eigenvalues above ratio * median, clamped to [1, nR - 1].
int estimate_source_count(const SpatialCovariance& scm, double ratio = 10.0);

}  // namespace icisense
