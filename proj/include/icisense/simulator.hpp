#pragma once

#include <string>
#include <vector>

#include "icisense/scene.hpp"

namespace icisense {

/// Space / fast-time / slow-time observations {Y_i}: one N x M matrix per
/// receive antenna (column m holds the fast-time samples of symbol m).
struct DataCube {
  std::vector<CMatrix> antennas;

  int n_rx() const { return static_cast<int>(antennas.size()); }
  int n_fast() const { return antennas.empty() ? 0 : static_cast<int>(antennas.front().rows()); }
  int n_slow() const { return antennas.empty() ? 0 : static_cast<int>(antennas.front().cols()); }

  /// Space/fast-time snapshot of symbol m (N x nR), column i = antenna i.
  CMatrix snapshot(int m) const;
  /// All M snapshots.
  std::vector<CMatrix> snapshots() const;

  DataCube& operator+=(const DataCube& other);
};

/// b(tau): element n = exp(-j 2 pi n df tau).
CVector steer_delay(const OfdmParams& params, double tau);
/// c(nu): element m = exp(-j 2 pi fc m Tsym nu).
CVector steer_doppler(const OfdmParams& params, double nu);
/// Diagonal of D(nu): element l = exp(+j 2 pi fc (T/N) l nu).
CVector ici_ramp(const OfdmParams& params, double nu);
/// Same ramp expressed through the CFO in subcarrier spacings (eps = fc T nu).
CVector ici_ramp_subcarriers(int n, double eps);

/// Circular complex Gaussian noise cube, variance noise_power per sample,
/// drawn from the scenario's noise stream (identical for both cube flavours).
DataCube generate_noise(const Scenario& scenario);

/// Noiseless echo of the scenario targets; with_ici selects between the ICI
/// model and its ICI-free counterpart.
DataCube synthesize_echoes(const Scenario& scenario, const SymbolGrid& symbols, bool with_ici);

/// Echoes with ICI plus the scenario noise.
DataCube synthesize(const Scenario& scenario, const SymbolGrid& symbols);
/// Same data with D(nu) replaced by identity; shares the noise realization.
DataCube synthesize_ici_free(const Scenario& scenario, const SymbolGrid& symbols);

/// Debug dump: 32-byte header (magic "ICICUBE1", nR, N, M and the comment
/// length as little-endian uint32, 8 zero bytes), the comment text, then
/// complex64 samples ordered (antenna, symbol, fast-time).
void write_cube(const DataCube& cube, const std::string& path, const std::string& comment = "");
DataCube read_cube(const std::string& path, std::string* comment = nullptr);

}  // namespace icisense
