#pragma once

#include <string>
#include <vector>

#include "icisense/apes_omp.hpp"
#include "icisense/music.hpp"
#include "icisense/scene.hpp"
#include "icisense/simulator.hpp"

namespace icisense {

/// |b^H(tau) G c(nu)|^2 / (N M) on the zero-padded delay-Doppler grid.
/// Rows are delay bins (range l dR / pad_r), columns Doppler bins in FFT
/// order; velocity_mps gives the wrapped ambiguous velocity of each column.
struct RangeDopplerMap {
  Eigen::MatrixXd power;
  std::vector<double> range_m;
  std::vector<double> velocity_mps;
  int pad_r = 1;
  int pad_d = 1;
  int cp_rows = 0;  // rows inside the CP-supported range
  double noise_floor = 0.0;  // median / ln 2 over the CP rows
};

struct CfarHit {
  int row = 0;
  int col = 0;
  double statistic = 0.0;  // cell / training mean
};

struct CfarConfig {
  double pfa = 1e-4;
  int guard = 2;
  int train = 8;
};

struct Detection {
  double range_m = 0.0;
  double velocity_ambiguous = 0.0;
  double velocity_resolved = 0.0;
  double angle_deg = 0.0;
  cplx gain{};
  double statistic = 0.0;
  std::string source;  // apes_uml | fft | fft_ici_free
  double cfo_velocity = 0.0;  // apes_uml only
};

/// F_{N,L} H: zero-padded unitary DFT of every length-L column.
CMatrix to_freq_slowtime(const CMatrix& channel, int n_subcarriers);

RangeDopplerMap periodogram(const CMatrix& g, const OfdmParams& params, int pad_r = 1, int pad_d = 2);

/// Doppler column whose bin is nearest the wrapped velocity.
int doppler_column(const RangeDopplerMap& map, double velocity_mps);

/// 10 log10 of the map over the CP rows at one Doppler column.
std::vector<double> range_profile_db(const RangeDopplerMap& map, int column);

/// CA-CFAR threshold multiplier for n_train averaged cells.
double cfar_alpha(double pfa, int n_train);

/// Cross-window CA-CFAR over the CP rows of the map, with wraparound.
/// Detections must also be the maximum of their (2 guard + 1)^2 square.
std::vector<CfarHit> ca_cfar(const RangeDopplerMap& map, const CfarConfig& config = {});
/// Same detector on a bare power matrix (every row used).
std::vector<CfarHit> ca_cfar(const Eigen::MatrixXd& power, const CfarConfig& config = {});

/// b^H(tau) G c(nu) / (N M).
cplx estimate_gain(const CMatrix& g, const OfdmParams& params, double range_m, double velocity_mps);

/// v + 2 vmax floor((v_cfo + vmax) / (2 vmax)).
double resolve_ambiguity(double velocity_ambiguous, double velocity_cfo, double vmax);

/// Wraps a velocity into [-vmax, vmax).
double wrap_velocity(double v, double vmax);

struct DelayDopplerConfig {
  int pad_r = 1;
  int pad_d = 2;
  CfarConfig cfar;
};

/// Detections from one map of G (shared by both pipelines).
std::vector<Detection> detect_on_map(const CMatrix& g, const RangeDopplerMap& map, const OfdmParams& params,
                                     const DelayDopplerConfig& config, double angle_deg, const std::string& source);

/// Beamformed fast-time/slow-time data with the symbols removed:
/// (F_N sum_i conj(a_i) Y_i / nR) .* conj(X).
CMatrix fft_frequency_grid(const DataCube& cube, const SymbolGrid& symbols, const OfdmParams& params,
                           double angle_deg);

std::vector<Detection> fft_baseline(const DataCube& cube, const SymbolGrid& symbols, const OfdmParams& params,
                                    const std::vector<double>& angles_deg, const DelayDopplerConfig& config = {},
                                    const std::string& source = "fft");

struct ApesUmlConfig {
  AngleGrid angle_grid;
  int source_count = 0;  // 0 estimates K from the eigenvalues
  OmpConfig omp;
  DelayDopplerConfig dd;
};

struct ChannelMap {
  double angle_deg = 0.0;
  double cfo_velocity = 0.0;
  int iteration = 0;
  RangeDopplerMap map;
};

struct ApesUmlResult {
  AngleEstimateSet angles;
  std::vector<OmpState> omp;  // one per angle
  std::vector<ChannelMap> maps;
  std::vector<Detection> detections;
  std::vector<std::string> warnings;
};

/// Steps 2 and 3 for a given angle set.
ApesUmlResult apes_uml_detect(const DataCube& cube, const SymbolGrid& symbols, const OfdmParams& params,
                              const std::vector<double>& angles_deg, const ApesUmlConfig& config = {});

/// Full chain: MUSIC angles, then apes_uml_detect.
ApesUmlResult apes_uml_pipeline(const DataCube& cube, const SymbolGrid& symbols, const OfdmParams& params,
                                const ApesUmlConfig& config = {});

/// MUSIC angle set with the configured (or estimated) source count.
AngleEstimateSet estimate_angles(const DataCube& cube, const OfdmParams& params, const AngleGrid& grid,
                                 int source_count);

}  // namespace icisense
