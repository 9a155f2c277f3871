#include "icisense/scene.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace icisense {

namespace {

constexpr std::uint64_t kPhaseStream = 0x7068617365ULL;  // "phase"

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

DerivedQuantities derive_quantities(const OfdmParams& p) {
  if (!(p.bandwidth > 0.0) || p.n_subcarriers <= 0 || p.n_symbols <= 0)
    throw ConfigError("numerology requires positive bandwidth, subcarrier and symbol counts");
  if (!(p.fc > 0.0)) throw ConfigError("carrier frequency must be positive");
  if (p.cp_duration < 0.0) throw ConfigError("cyclic prefix duration must be non-negative");
  if (p.n_tx <= 0 || p.n_rx <= 0) throw ConfigError("antenna counts must be positive");

  DerivedQuantities d{};
  const double n = p.n_subcarriers;
  d.subcarrier_spacing = p.bandwidth / n;
  d.symbol_duration = 1.0 / d.subcarrier_spacing;
  d.total_symbol_duration = d.symbol_duration + p.cp_duration;
  // Tolerate round-off in N Tcp / T for exact ratios such as 2048 * 1/4.
  d.n_taps = static_cast<int>(std::floor(n * p.cp_duration / d.symbol_duration + 1e-9));
  if (d.n_taps < 1) throw ConfigError("cyclic prefix too short: no channel taps representable (L = 0)");
  d.range_resolution = kSpeedOfLight / (2.0 * p.bandwidth);
  d.velocity_resolution = kSpeedOfLight / (2.0 * p.fc * p.n_symbols * d.total_symbol_duration);
  d.max_velocity = kSpeedOfLight / (4.0 * p.fc * d.total_symbol_duration);
  d.max_cfo_velocity = kSpeedOfLight * n / (4.0 * p.fc * d.symbol_duration);
  d.max_range = kSpeedOfLight / (2.0 * d.subcarrier_spacing);
  d.max_cp_range = d.max_range * p.cp_duration / d.symbol_duration;
  d.cfo_cell_velocity = kSpeedOfLight / (2.0 * p.fc * d.symbol_duration);
  return d;
}

OfdmParams preset_params(const std::string& name) {
  OfdmParams p;
  if (name == "paper") return p;
  if (name == "desk") {
    p.n_subcarriers = 512;
    p.n_symbols = 32;
    p.bandwidth = 50e6 / 4.0;  // same subcarrier spacing as the paper preset
    return p;
  }
  throw ConfigError("unknown preset '" + name + "' (expected paper or desk)");
}

void validate_scenario(const Scenario& s) {
  const auto dq = derive_quantities(s.params);
  if (s.noise_power < 0.0) throw ScenarioError("noise power must be non-negative");
  std::set<double> angles;
  for (size_t k = 0; k < s.targets.size(); ++k) {
    const auto& t = s.targets[k];
    const double tau = 2.0 * t.range_m / kSpeedOfLight;
    if (t.range_m < 0.0) throw ScenarioError("target " + std::to_string(k) + ": negative range");
    if (tau > s.params.cp_duration * (1.0 + 1e-12))
      throw ScenarioError("target " + std::to_string(k) + ": round-trip delay exceeds the cyclic prefix");
    if (!(std::abs(t.angle_deg) < 90.0))
      throw ScenarioError("target " + std::to_string(k) + ": angle must lie in (-90, 90) deg");
    const double nu = doppler_from_velocity(t.velocity_mps);
    if (std::abs(nu) * s.params.n_subcarriers >= 0.1)
      throw ScenarioError("target " + std::to_string(k) + ": Doppler too large for the narrowband model");
    angles.insert(t.angle_deg);
  }
  if (static_cast<int>(angles.size()) >= s.params.n_rx)
    throw ScenarioError("number of distinct target angles must be below the RX antenna count");
  (void)dq;
}

std::vector<TargetModel> target_models(const Scenario& s) {
  std::vector<TargetModel> out;
  out.reserve(s.targets.size());
  for (size_t k = 0; k < s.targets.size(); ++k) {
    const auto& t = s.targets[k];
    double phase = 0.0;
    if (t.phase_rad) {
      phase = *t.phase_rad;
    } else {
      std::mt19937_64 rng(mix_seed(s.seed, kPhaseStream, k));
      phase = 2.0 * kPi * uniform01(rng);
    }
    const double amp = std::sqrt(s.noise_power > 0.0 ? s.noise_power : 1.0) *
                       std::pow(10.0, t.snr_db / 20.0);
    out.push_back({std::polar(amp, phase), 2.0 * t.range_m / kSpeedOfLight,
                   doppler_from_velocity(t.velocity_mps), t.angle_deg * kPi / 180.0});
  }
  return out;
}

bool SymbolGrid::unit_modulus() const {
  return symbols.size() > 0 && (symbols.array().abs() - 1.0).abs().maxCoeff() < 1e-12;
}

SymbolGrid generate_symbols(const OfdmParams& params, std::uint64_t seed, Modulation modulation) {
  SymbolGrid g;
  g.modulation = modulation;
  g.symbols.resize(params.n_subcarriers, params.n_symbols);
  std::mt19937_64 rng(seed);
  const double a = 1.0 / std::sqrt(2.0);
  static const cplx qpsk[4] = {{a, a}, {-a, a}, {-a, -a}, {a, -a}};
  for (Eigen::Index m = 0; m < g.symbols.cols(); ++m)
    for (Eigen::Index n = 0; n < g.symbols.rows(); ++n) g.symbols(n, m) = qpsk[rng() >> 62];
  return g;
}

CVector array_steering(int n_elements, double angle_deg, double d_over_lambda) {
  CVector a(n_elements);
  const double s = std::sin(angle_deg * kPi / 180.0);
  for (int n = 0; n < n_elements; ++n) a(n) = std::polar(1.0, 2.0 * kPi * d_over_lambda * n * s);
  return a;
}

CVector tx_beamformer(const OfdmParams& params, double angle_deg) {
  return array_steering(params.n_tx, angle_deg, params.d_over_lambda).conjugate();
}

namespace {

using nlohmann::json;

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("scenario file: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario file: bad value for '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(where + ": unknown field '" + it.key() + "'");
  }
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario file: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("scenario file: top level must be an object");
  reject_unknown(j,
                 {"fc_hz", "bandwidth_hz", "n_subcarriers", "n_symbols", "cp_duration_s", "n_tx", "n_rx",
                  "tx_steer_deg", "noise_power", "seed", "targets"},
                 "scenario file");
  Scenario s;
  s.params.fc = required<double>(j, "fc_hz");
  s.params.bandwidth = required<double>(j, "bandwidth_hz");
  s.params.n_subcarriers = required<int>(j, "n_subcarriers");
  s.params.n_symbols = required<int>(j, "n_symbols");
  s.params.cp_duration = required<double>(j, "cp_duration_s");
  s.params.n_tx = required<int>(j, "n_tx");
  s.params.n_rx = required<int>(j, "n_rx");
  s.tx_steer_deg = required<double>(j, "tx_steer_deg");
  s.noise_power = required<double>(j, "noise_power");
  s.seed = required<std::uint64_t>(j, "seed");
  const auto& targets = j.at("targets");
  if (!targets.is_array()) throw ConfigError("scenario file: 'targets' must be an array");
  for (const auto& t : targets) {
    reject_unknown(t, {"range_m", "velocity_mps", "angle_deg", "snr_db"}, "scenario target");
    Target tg;
    tg.range_m = required<double>(t, "range_m");
    tg.velocity_mps = required<double>(t, "velocity_mps");
    tg.angle_deg = required<double>(t, "angle_deg");
    tg.snr_db = required<double>(t, "snr_db");
    s.targets.push_back(tg);
  }
  derive_quantities(s.params);
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string scenario_to_json(const Scenario& s) {
  nlohmann::ordered_json j;
  j["fc_hz"] = s.params.fc;
  j["bandwidth_hz"] = s.params.bandwidth;
  j["n_subcarriers"] = s.params.n_subcarriers;
  j["n_symbols"] = s.params.n_symbols;
  j["cp_duration_s"] = s.params.cp_duration;
  j["n_tx"] = s.params.n_tx;
  j["n_rx"] = s.params.n_rx;
  j["tx_steer_deg"] = s.tx_steer_deg;
  j["noise_power"] = s.noise_power;
  j["seed"] = s.seed;
  j["targets"] = nlohmann::ordered_json::array();
  for (const auto& t : s.targets)
    j["targets"].push_back(
        {{"range_m", t.range_m}, {"velocity_mps", t.velocity_mps}, {"angle_deg", t.angle_deg}, {"snr_db", t.snr_db}});
  return j.dump(2);
}

}  // namespace icisense
