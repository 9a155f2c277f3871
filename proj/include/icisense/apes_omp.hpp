#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "icisense/scene.hpp"
#include "icisense/simulator.hpp"

namespace icisense {

/// Raised when two accepted CFOs make the stacked atom Gram singular.
class IllConditionedAtoms : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// CFO search grid in velocity. The resolution cell is c / (2 fc T).
struct CfoGridSpec {
  double span_mps = 0.0;  // search |v| <= span; 0 selects the full +-vcfo_max
  int oversample = 4;     // grid points per resolution cell
  bool refine = true;     // golden-section pass within one cell of the argmax
};

struct CfoSpectrum {
  std::vector<double> velocity_mps;  // grid, ascending
  std::vector<double> objective;     // a^H (Q*)^-1 a per grid point (NaN if skipped)
  std::vector<double> glrt_norm;     // normalized statistic per grid point
  double argmax_velocity = 0.0;      // refined when requested
  double argmax_objective = 0.0;
  double glrt_at_argmax = 0.0;
  CMatrix q_at_argmax;
  CMatrix r;                         // R of the residue
  int skipped_points = 0;
};

struct CfoChannelEstimate {
  double cfo_velocity = 0.0;
  CMatrix channel;  // L x M
  double glrt_value = 0.0;
  int iteration = 0;
};

struct OmpConfig {
  CfoGridSpec grid;
  double threshold = 0.3;
  int p_max = 5;  // capped at N / L
  int refine_cycles = 12;  // cap on CFO re-fit sweeps after each new atom; 0 is plain OMP
};

/// State after the last OMP iteration at one angle. The atom set is kept as
/// the list of accepted CFOs; atoms themselves are applied matrix-free.
struct OmpState {
  double angle_deg = 0.0;
  std::vector<CMatrix> residue;       // Ybar_m^(P), N x nR
  std::vector<double> atom_cfo_mps;   // one entry per accepted atom block
  std::vector<CfoChannelEstimate> detected;
  std::vector<CfoSpectrum> spectra;   // one per evaluated iteration
  std::vector<double> residue_energy; // trace(R^(p)) per evaluated iteration
  std::string warning;
};

/// Xbar_m v with Xbar_m = F^H diag(x) F_{N,L}; v has length L.
CVector pilot_apply(const CVector& x, const CVector& v);
/// Xbar_m^H u truncated to the first L taps; u has length N.
CVector pilot_apply_adj(const CVector& x, const CVector& u, int n_taps);
/// Dense Xbar_m (N x L), for oracles and small problems.
CMatrix pilot_matrix(const CVector& x, int n_taps);

/// CFO in subcarrier spacings for a velocity: eps = fc T 2v/c.
double cfo_from_velocity(const OfdmParams& params, double v);
double velocity_from_cfo(const OfdmParams& params, double eps);

/// R = sum_m Y_m^H Y_m (Hermitian).
CMatrix residue_covariance(const std::vector<CMatrix>& residue);

/// Q(nu) = R - sum_m A_m^H A_m with A_m = G^{-1/2} Xbar_m^H D^H(nu) Y_m.
CMatrix nullspace_scm(const std::vector<CMatrix>& residue, const SymbolGrid& symbols, const OfdmParams& params,
                      double cfo_velocity);

/// a^H (Q*)^-1 a with the relative ridge; NaN when Q is numerically singular.
double apes_objective(const CMatrix& q, const CVector& a, double ridge = 1e-10);

/// 1 - a^H (R*)^-1 a / a^H (Q*)^-1 a clamped to [0, 1].
double normalized_glrt(const CMatrix& q, const CMatrix& r, const CVector& a);

/// Unnormalized statistic (1/s2) (1/a^H R*^-1 a - 1/a^H Q*^-1 a); needs the
/// post-beamforming noise variance, which the detector never estimates.
double glrt_statistic(const CMatrix& q, const CMatrix& r, const CVector& a, double noise_var);

CfoSpectrum cfo_spectrum(const std::vector<CMatrix>& residue, const SymbolGrid& symbols, const OfdmParams& params,
                         double angle_deg, const CfoGridSpec& grid);

/// Same spectrum evaluated point by point through nullspace_scm. Slow; kept
/// as a reference for the lag-domain engine.
CfoSpectrum cfo_spectrum_direct(const std::vector<CMatrix>& residue, const SymbolGrid& symbols,
                                const OfdmParams& params, double angle_deg, const CfoGridSpec& grid);

struct JointUpdate {
  std::vector<CMatrix> channels;  // P matrices, L x M
  std::vector<CMatrix> residue;   // Y_m - Phi_m h_m a^T
  CMatrix q;                      // Q^(P)
};

/// Closed-form re-estimation of every accepted channel from the original
/// snapshots. Throws IllConditionedAtoms when the Gram condition exceeds 1e12.
JointUpdate joint_channel_update(const std::vector<CMatrix>& snapshots, const SymbolGrid& symbols,
                                 const OfdmParams& params, const std::vector<double>& cfo_velocities,
                                 double angle_deg);

/// GLRT-driven OMP at one angle.
OmpState omp_detect(const std::vector<CMatrix>& snapshots, const SymbolGrid& symbols, const OfdmParams& params,
                    double angle_deg, const OmpConfig& config = {});

}  // namespace icisense
