#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "icisense/delay_doppler.hpp"
#include "icisense/scene.hpp"

namespace icisense {

inline const std::vector<std::string> kAllPipelines = {"apes_uml", "fft", "fft_ici_free"};

/// Seed of the transmitted symbol grid used with a scenario seed.
std::uint64_t symbol_seed(std::uint64_t scenario_seed);

/// Splits "a,b,c" and checks every name against kAllPipelines.
std::vector<std::string> parse_pipelines(const std::string& csv);

struct AssociationTolerance {
  double range_m = 0.0;       // 0 selects one range cell
  double velocity_mps = 0.0;  // 0 selects one velocity cell
  double angle_deg = 1.0;
};

/// Classification of one pipeline's detections against the truth.
struct Association {
  std::vector<int> detection_target;  // matched target index or -1 (false alarm)
  std::vector<int> target_detection;  // detection index claiming each target or -1
  int false_alarms = 0;
};

/// Greedy nearest-neighbour matching in tolerance-normalized distance. FFT
/// sources are compared on ambiguous velocity, apes_uml on resolved velocity.
/// A detection inside the tolerance box of some target is never a false
/// alarm, even if that target was already claimed by a closer detection.
Association associate(const std::vector<Detection>& detections, const std::vector<Target>& truth,
                      const OfdmParams& params, const AssociationTolerance& tol = {});

struct TrialResult {
  int trial_id = 0;
  std::uint64_t seed = 0;
  std::vector<Target> truth;
  std::vector<double> angles_deg;
  std::map<std::string, std::vector<Detection>> detections;
  std::map<std::string, Association> association;
  bool failed = false;
  std::string error;
};

struct HarnessConfig {
  std::vector<std::string> pipelines = kAllPipelines;
  ApesUmlConfig apes;
  DelayDopplerConfig fft;
  AssociationTolerance tolerance;
  int reference_target = 1;
  bool true_source_count = true;  // K = number of distinct target angles
};

/// One paired trial: ICI and ICI-free cubes share symbols and noise; the
/// MUSIC angles of the ICI cube feed every pipeline.
TrialResult run_trial(const Scenario& scenario, std::uint64_t symbol_seed, const HarnessConfig& config,
                      int trial_id = 0);

struct MetricsReport {
  double snr_db = 0.0;
  double velocity_mps = 0.0;
  std::string pipeline;
  double pd = 0.0;
  double fdr = 0.0;
  double rmse_range_m = 0.0;     // NaN when the reference target was never hit
  double rmse_velocity_mps = 0.0;
  int n_trials = 0;              // trials that completed
  int n_failed = 0;
  long false_alarms = 0;         // V
  long reference_hits = 0;       // S
};

struct SweepSpec {
  std::vector<double> snr_db;        // reference-target SNRs; empty keeps the template
  std::vector<double> velocity_mps;  // applied to every target; empty keeps the template
};

struct MonteCarloOptions {
  int n_trials = 50;
  std::uint64_t master_seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  HarnessConfig harness;
};

/// Reports ordered by (velocity, snr, pipeline order). Output depends only on
/// the inputs and master seed, not on scheduling.
std::vector<MetricsReport> run_montecarlo(const Scenario& scenario, const SweepSpec& sweep,
                                          const MonteCarloOptions& options);

/// Aggregation of already-classified trials for one pipeline.
MetricsReport summarize(const std::vector<TrialResult>& trials, const std::string& pipeline, int reference_target);

// Scenario recipes for the figure reproductions. Ranges are given for the
// full-scale numerology and scaled with the range cell of the chosen preset,
// so every recipe keeps its geometry in resolution cells.

/// reference_range_m * dR(params) / dR(paper preset).
double scaled_range(const OfdmParams& params, double reference_range_m);

/// Three targets at 60/100/150 m, 25/30/35 deg, 30/5/0 dB, common velocity.
Scenario fig1_scenario(const OfdmParams& params, double velocity_mps);
/// Five targets: three sharing range, angle (-35 deg) and ambiguous velocity,
/// two at -25 deg and 100 m/s at different ranges. A reconstruction.
Scenario five_target_scenario(const OfdmParams& params);
/// Two targets: 40 m / -35 deg / 25 dB and the reference 80 m / -25 deg.
Scenario table2_scenario(const OfdmParams& params, double velocity_mps, double reference_snr_db);

}  // namespace icisense
