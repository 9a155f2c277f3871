#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace icisense {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

/// Propagation speed used throughout (the reference numerology assumes 3e8).
inline constexpr double kSpeedOfLight = 3.0e8;
inline constexpr double kPi = 3.14159265358979323846;

/// Invalid numerology or array configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scenario that violates the discrete signal model (delay beyond the CP,
/// too many sources for the array, ...).
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OfdmParams {
  double fc = 60e9;           // carrier frequency [Hz]
  double bandwidth = 50e6;    // total bandwidth [Hz]
  int n_subcarriers = 2048;   // N
  int n_symbols = 64;         // M
  double cp_duration = 10.24e-6;
  int n_tx = 8;
  int n_rx = 8;
  double d_over_lambda = 0.5;
};

/// Quantities every other stage derives from the numerology.
struct DerivedQuantities {
  double subcarrier_spacing;  // delta f [Hz]
  double symbol_duration;     // T = 1 / delta f [s]
  double total_symbol_duration;  // Tsym = T + Tcp [s]
  int n_taps;                 // L = floor(N Tcp / T)
  double range_resolution;    // c / (2 B) [m]
  double velocity_resolution; // c / (2 fc M Tsym) [m/s]
  double max_velocity;        // slow-time unambiguous velocity c / (4 fc Tsym) [m/s]
  double max_cfo_velocity;    // fast-time unambiguous velocity c N / (4 fc T) [m/s]
  double max_range;           // c / (2 delta f) [m]
  double max_cp_range;        // max_range * Tcp / T [m]
  double cfo_cell_velocity;   // CFO resolution cell c / (2 fc T) [m/s]
};

/// Throws ConfigError on non-positive numerology or a CP too short for one tap.
DerivedQuantities derive_quantities(const OfdmParams& params);

/// Named numerology presets. "paper" is the full-scale reference setup,
/// "desk" keeps the symbol timing but uses N = 512, M = 32.
OfdmParams preset_params(const std::string& name);

struct Target {
  double range_m = 0.0;
  double velocity_mps = 0.0;  // positive = closing
  double angle_deg = 0.0;
  double snr_db = 0.0;
  std::optional<double> phase_rad;  // drawn from the scenario seed when empty
};

struct Scenario {
  OfdmParams params;
  std::vector<Target> targets;
  double noise_power = 1.0;
  double tx_steer_deg = -30.0;
  std::uint64_t seed = 1;
};

/// Physical-unit target mapped to model parameters.
struct TargetModel {
  cplx gain;         // alpha
  double delay;      // tau [s]
  double doppler;    // nu = 2 v / c
  double angle_rad;  // theta
};

/// Checks the model assumptions for every target; throws ScenarioError.
void validate_scenario(const Scenario& scenario);

/// Converts targets to (alpha, tau, nu, theta). Phases missing from the
/// scenario are drawn uniformly from the scenario seed stream.
std::vector<TargetModel> target_models(const Scenario& scenario);

enum class Modulation { Qpsk };

struct SymbolGrid {
  CMatrix symbols;  // N x M
  Modulation modulation = Modulation::Qpsk;
  bool unit_modulus() const;
};

SymbolGrid generate_symbols(const OfdmParams& params, std::uint64_t seed,
                            Modulation modulation = Modulation::Qpsk);

/// ULA steering vector [1, e^{j 2 pi d/lambda sin(theta)}, ...].
CVector array_steering(int n_elements, double angle_deg, double d_over_lambda = 0.5);

/// Transmit beamformer f_T = conj(a_T(angle)).
CVector tx_beamformer(const OfdmParams& params, double angle_deg);

/// Normalized Doppler / velocity conversions.
inline double doppler_from_velocity(double v) { return 2.0 * v / kSpeedOfLight; }
inline double velocity_from_doppler(double nu) { return nu * kSpeedOfLight / 2.0; }

/// Stateless 64-bit mixer used to derive independent seed streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

/// Scenario files are JSON with the fields fc_hz, bandwidth_hz,
/// n_subcarriers, n_symbols, cp_duration_s, n_tx, n_rx, tx_steer_deg,
/// noise_power, seed and targets[{range_m, velocity_mps, angle_deg, snr_db}].
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& json_text);
std::string scenario_to_json(const Scenario& scenario);

}  // namespace icisense
