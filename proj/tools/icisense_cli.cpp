// Command-line front end: single runs, Monte Carlo campaigns and the figure
// recipes. All outputs go below --out.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "icisense/harness.hpp"
#include "icisense/io.hpp"

namespace fs = std::filesystem;
using namespace icisense;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string preset = "desk";
  std::string out = "out";
  std::string pipelines = "apes_uml,fft,fft_ici_free";
  int threads = 0;
  double pfa = 1e-4;
};

struct McFlags {
  std::string snr;
  std::string velocity;
  int trials = 0;
  int reference = -1;
  double tol_range = 0.0;
  double tol_velocity = 0.0;
  double tol_angle = 1.0;
};

// "a,b,c" or "start:step:stop".
std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  if (text.find(':') != std::string::npos) {
    double a, step, b;
    char c1, c2;
    std::istringstream is(text);
    if (!(is >> a >> c1 >> step >> c2 >> b) || c1 != ':' || c2 != ':' || step <= 0.0)
      throw ConfigError("bad range '" + text + "' (expected start:step:stop)");
    for (int k = 0; a + k * step <= b + 1e-9 * step; ++k) out.push_back(a + k * step);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "' in list '" + text + "'");
    }
  }
  return out;
}

std::string angle_tag(double deg) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f", deg);
  std::string s = buf;
  s[0] = s[0] == '-' ? 'm' : 'p';
  return s;
}

std::string velocity_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.0f", v);
  return buf;
}

class Run {
 public:
  Run(const Globals& g, std::string command) : g_(g), command_(std::move(command)) {
    fs::create_directories(g_.out);
    pipelines_ = parse_pipelines(g_.pipelines);
    params_ = preset_params(g_.preset);
  }

  Scenario scenario_or(const Scenario& fallback) const {
    Scenario s = g_.config.empty() ? fallback : load_scenario(g_.config);
    if (g_.seed_given) s.seed = g_.seed;
    return s;
  }

  const OfdmParams& params() const { return params_; }
  const std::vector<std::string>& pipelines() const { return pipelines_; }
  bool wants(const std::string& p) const { return std::find(pipelines_.begin(), pipelines_.end(), p) != pipelines_.end(); }
  std::uint64_t seed_or(std::uint64_t fallback) const { return g_.seed_given ? g_.seed : fallback; }
  int threads() const { return g_.threads; }

  DelayDopplerConfig dd() const {
    DelayDopplerConfig c;
    c.cfar.pfa = g_.pfa;
    return c;
  }

  ApesUmlConfig apes(int source_count) const {
    ApesUmlConfig c;
    c.dd = dd();
    c.source_count = source_count;
    return c;
  }

  // Hash of everything that determines the outputs besides the seed.
  void set_meta(const std::string& scenario_json, std::uint64_t seed, const std::string& extra = "") {
    std::ostringstream os;
    os << command_ << '|' << g_.preset << '|' << g_.pipelines << '|' << g_.pfa << '|' << scenario_json << '|' << extra;
    meta_ = {config_hash(os.str()), seed};
  }

  const OutputMeta& meta() const { return meta_; }
  std::string path(const std::string& name) const { return (fs::path(g_.out) / name).string(); }

 private:
  Globals g_;
  std::string command_;
  std::vector<std::string> pipelines_;
  OfdmParams params_;
  OutputMeta meta_;
};

int distinct_angle_count(const Scenario& s) {
  std::set<double> a;
  for (const auto& t : s.targets) a.insert(t.angle_deg);
  return std::max(1, static_cast<int>(a.size()));
}

struct SingleRun {
  SymbolGrid symbols;
  DataCube cube;
  DataCube clean;
  AngleEstimateSet angles;
  ApesUmlResult apes;
  std::map<std::string, std::vector<Detection>> detections;
};

SingleRun run_once(const Run& run, const Scenario& s) {
  SingleRun r;
  r.symbols = generate_symbols(s.params, symbol_seed(s.seed));
  r.cube = synthesize(s, r.symbols);
  r.clean = synthesize_ici_free(s, r.symbols);
  auto cfg = run.apes(distinct_angle_count(s));
  r.angles = estimate_angles(r.cube, s.params, cfg.angle_grid, cfg.source_count);
  if (run.wants("apes_uml")) {
    r.apes = apes_uml_detect(r.cube, r.symbols, s.params, r.angles.angles_deg, cfg);
    r.detections["apes_uml"] = r.apes.detections;
    for (const auto& w : r.apes.warnings) std::cerr << "warning: " << w << '\n';
  }
  if (run.wants("fft")) r.detections["fft"] = fft_baseline(r.cube, r.symbols, s.params, r.angles.angles_deg, run.dd(), "fft");
  if (run.wants("fft_ici_free"))
    r.detections["fft_ici_free"] = fft_baseline(r.clean, r.symbols, s.params, r.angles.angles_deg, run.dd(), "fft_ici_free");
  return r;
}

void emit_music(const Run& run, const SingleRun& r, const Scenario& s, const std::string& prefix) {
  write_music_csv(run.path(prefix + "music.csv"), run.meta(), r.angles);
  const auto bf = bartlett_spectrum(build_scm(r.cube), s.params, r.angles.grid_deg);
  const double mpk = *std::max_element(r.angles.spectrum.begin(), r.angles.spectrum.end());
  const double bpk = *std::max_element(bf.begin(), bf.end());
  PlotSeries music{"MUSIC", r.angles.grid_deg, {}}, bart{"beamforming", r.angles.grid_deg, {}};
  for (double v : r.angles.spectrum) music.y.push_back(10.0 * std::log10(v / mpk));
  for (double v : bf) bart.y.push_back(10.0 * std::log10(v / bpk));
  write_svg_plot(run.path(prefix + "music.svg"), run.meta(), {"Spatial spectrum", "angle [deg]", "normalized power [dB]", {music, bart}, {}});
}

void emit_cfo(const Run& run, const SingleRun& r, const std::string& prefix) {
  for (const auto& state : r.apes.omp) {
    PlotSpec plot{"CFO spectrum at " + angle_tag(state.angle_deg) + " deg", "velocity [m/s]", "normalized GLRT", {}, {0.3}};
    for (size_t it = 0; it < state.spectra.size(); ++it) {
      const auto& sp = state.spectra[it];
      write_cfo_csv(run.path(prefix + "cfo_" + angle_tag(state.angle_deg) + "_iter" + std::to_string(it) + ".csv"), run.meta(), sp);
      plot.series.push_back({"iteration " + std::to_string(it), sp.velocity_mps, sp.glrt_norm});
    }
    write_svg_plot(run.path(prefix + "cfo_" + angle_tag(state.angle_deg) + ".svg"), run.meta(), plot);
  }
}

// Range cuts per angle: one per APES channel map at that map's peak Doppler
// column, and the FFT benchmarks at the same column.
void emit_profiles(const Run& run, const SingleRun& r, const Scenario& s, const std::string& prefix) {
  const auto dd = run.dd();
  for (double angle : r.angles.angles_deg) {
    PlotSpec plot{"Range profiles at " + angle_tag(angle) + " deg", "range [m]", "power [dB]", {}, {}};
    int column = -1;
    int idx = 0;
    for (const auto& cm : r.apes.maps) {
      if (cm.angle_deg != angle) continue;
      Eigen::Index row, col;
      cm.map.power.topRows(cm.map.cp_rows).maxCoeff(&row, &col);
      if (column < 0) column = static_cast<int>(col);
      std::vector<double> ranges(cm.map.range_m.begin(), cm.map.range_m.begin() + cm.map.cp_rows);
      const auto prof = range_profile_db(cm.map, static_cast<int>(col));
      const std::string name = "apes_uml_cfo" + std::to_string(idx++);
      write_range_profile_csv(run.path(prefix + "range_" + angle_tag(angle) + "_" + name + ".csv"), run.meta(), ranges, prof);
      plot.series.push_back({"APES-UML, CFO " + velocity_tag(cm.cfo_velocity) + " m/s", ranges, prof});
    }
    for (const std::string name : {"fft", "fft_ici_free"}) {
      if (!run.wants(name)) continue;
      const DataCube& cube = name == "fft" ? r.cube : r.clean;
      const CMatrix g = fft_frequency_grid(cube, r.symbols, s.params, angle);
      const auto map = periodogram(g, s.params, dd.pad_r, dd.pad_d);
      int col = column;
      if (col < 0) {
        Eigen::Index rr, cc;
        map.power.topRows(map.cp_rows).maxCoeff(&rr, &cc);
        col = static_cast<int>(cc);
      }
      std::vector<double> ranges(map.range_m.begin(), map.range_m.begin() + map.cp_rows);
      const auto prof = range_profile_db(map, col);
      write_range_profile_csv(run.path(prefix + "range_" + angle_tag(angle) + "_" + name + ".csv"), run.meta(), ranges, prof);
      plot.series.push_back({name == "fft" ? "2-D FFT" : "2-D FFT (ICI-free)", ranges, prof});
    }
    write_svg_plot(run.path(prefix + "range_" + angle_tag(angle) + ".svg"), run.meta(), plot);
  }
}

void emit_detections(const Run& run, const SingleRun& r, const std::string& prefix) {
  std::vector<Detection> all;
  for (const auto& name : run.pipelines()) {
    auto it = r.detections.find(name);
    if (it != r.detections.end()) all.insert(all.end(), it->second.begin(), it->second.end());
  }
  write_detections_csv(run.path(prefix + "detections.csv"), run.meta(), all);
}

void print_detections(const SingleRun& r) {
  for (const auto& [name, dets] : r.detections) {
    std::cout << name << ": " << dets.size() << " detection(s)\n";
    for (const auto& d : dets)
      std::printf("  range %.1f m  v_amb %.2f m/s  v_res %.2f m/s  angle %.1f deg  stat %.1f\n", d.range_m,
                  d.velocity_ambiguous, d.velocity_resolved, d.angle_deg, d.statistic);
  }
}

// ---- subcommands ---------------------------------------------------------

void cmd_simulate(const Globals& g) {
  Run run(g, "simulate");
  const Scenario s = run.scenario_or(five_target_scenario(run.params()));
  validate_scenario(s);
  const auto json = scenario_to_json(s);
  run.set_meta(json, s.seed);
  const auto symbols = generate_symbols(s.params, symbol_seed(s.seed));
  const DataCube cube = synthesize(s, symbols);
  const DataCube clean = synthesize_ici_free(s, symbols);
  write_cube(cube, run.path("cube.bin"), "# " + run.meta().line());
  write_cube(clean, run.path("cube_ici_free.bin"), "# " + run.meta().line());
  {
    std::ofstream os(run.path("scenario.json"));
    os << json << '\n';
  }
  // Beamformed range cuts at every target's angle and Doppler column.
  const auto dd = run.dd();
  std::set<double> done;
  for (const auto& t : s.targets) {
    if (!done.insert(t.angle_deg).second) continue;
    PlotSpec plot{"Range profile at " + angle_tag(t.angle_deg) + " deg", "range [m]", "power [dB]", {}, {}};
    for (const std::string name : {"fft", "fft_ici_free"}) {
      const CMatrix gr = fft_frequency_grid(name == "fft" ? cube : clean, symbols, s.params, t.angle_deg);
      const auto map = periodogram(gr, s.params, dd.pad_r, dd.pad_d);
      std::vector<double> ranges(map.range_m.begin(), map.range_m.begin() + map.cp_rows);
      const auto prof = range_profile_db(map, doppler_column(map, t.velocity_mps));
      write_range_profile_csv(run.path("range_" + angle_tag(t.angle_deg) + "_" + name + ".csv"), run.meta(), ranges, prof);
      plot.series.push_back({name, ranges, prof});
    }
    write_svg_plot(run.path("range_" + angle_tag(t.angle_deg) + ".svg"), run.meta(), plot);
  }
  std::cout << "wrote " << g.out << "/cube.bin (" << cube.n_rx() << " x " << cube.n_fast() << " x " << cube.n_slow() << ")\n";
}

void cmd_detect(const Globals& g) {
  Run run(g, "detect");
  const Scenario s = run.scenario_or(five_target_scenario(run.params()));
  run.set_meta(scenario_to_json(s), s.seed);
  const auto r = run_once(run, s);
  emit_music(run, r, s, "");
  if (run.wants("apes_uml")) emit_cfo(run, r, "");
  emit_profiles(run, r, s, "");
  emit_detections(run, r, "");
  print_detections(r);
}

void emit_campaign(const Run& run, const std::vector<MetricsReport>& reports, const std::string& prefix,
                   const std::set<std::string>& plots) {
  write_pd_csv(run.path(prefix + "pd.csv"), run.meta(), reports);
  struct Metric {
    std::string key, file, label;
    double MetricsReport::*field;
  };
  const std::vector<Metric> metrics = {{"pd", "pd", "probability of detection", &MetricsReport::pd},
                                       {"fdr", "fdr", "false discovery rate", &MetricsReport::fdr},
                                       {"rmse_range", "rmse_range", "range RMSE [m]", &MetricsReport::rmse_range_m},
                                       {"rmse_velocity", "rmse_velocity", "velocity RMSE [m/s]", &MetricsReport::rmse_velocity_mps}};
  std::set<double> velocities;
  for (const auto& r : reports) velocities.insert(r.velocity_mps);
  for (const auto& m : metrics) {
    if (!plots.count(m.key)) continue;
    for (double v : velocities) {
      PlotSpec plot{m.label + " at v = " + velocity_tag(v) + " m/s", "SNR [dB]", m.label, {}, {}};
      std::map<std::string, PlotSeries> by_pipe;
      std::vector<std::string> order;
      for (const auto& r : reports) {
        if (r.velocity_mps != v) continue;
        if (!by_pipe.count(r.pipeline)) order.push_back(r.pipeline);
        auto& ser = by_pipe[r.pipeline];
        ser.name = r.pipeline;
        ser.x.push_back(r.snr_db);
        // FDR is undefined without any detection or false alarm.
        const bool empty = m.key == "fdr" && r.false_alarms + r.reference_hits == 0;
        ser.y.push_back(empty ? std::nan("") : r.*m.field);
      }
      for (const auto& p : order) plot.series.push_back(by_pipe[p]);
      write_svg_plot(run.path(prefix + m.file + "_v" + velocity_tag(v) + ".svg"), run.meta(), plot);
    }
  }
}

std::vector<MetricsReport> campaign(Run& run, const Scenario& tmpl, const SweepSpec& sweep, const McFlags& f,
                                    int default_trials) {
  MonteCarloOptions o;
  o.n_trials = f.trials > 0 ? f.trials : default_trials;
  o.master_seed = run.seed_or(tmpl.seed);
  o.threads = run.threads();
  o.harness.pipelines = run.pipelines();
  o.harness.apes = run.apes(0);
  o.harness.fft = run.dd();
  o.harness.tolerance = {f.tol_range, f.tol_velocity, f.tol_angle};
  o.harness.reference_target = f.reference >= 0 ? f.reference : std::min<int>(1, static_cast<int>(tmpl.targets.size()) - 1);
  std::ostringstream extra;
  extra << "trials=" << o.n_trials << " ref=" << o.harness.reference_target << " tol=" << f.tol_range << ','
        << f.tol_velocity << ',' << f.tol_angle << " snr=";
  for (double x : sweep.snr_db) extra << x << ';';
  extra << " v=";
  for (double x : sweep.velocity_mps) extra << x << ';';
  run.set_meta(scenario_to_json(tmpl), o.master_seed, extra.str());
  std::cerr << "running " << o.n_trials << " trial(s) per point\n";
  return run_montecarlo(tmpl, sweep, o);
}

void print_reports(const std::vector<MetricsReport>& reports) {
  std::printf("%8s %8s %-13s %6s %6s %10s %10s %6s\n", "snr_db", "v_mps", "pipeline", "pd", "fdr", "rmse_r", "rmse_v", "n");
  for (const auto& r : reports)
    std::printf("%8.1f %8.1f %-13s %6.3f %6.3f %10.3f %10.3f %6d\n", r.snr_db, r.velocity_mps, r.pipeline.c_str(), r.pd,
                r.fdr, r.rmse_range_m, r.rmse_velocity_mps, r.n_trials);
}

int default_trials(const std::string& preset) { return preset == "paper" ? 100 : 50; }

void cmd_montecarlo(const Globals& g, const McFlags& f) {
  Run run(g, "montecarlo");
  const Scenario tmpl = run.scenario_or(table2_scenario(run.params(), 120.0, 5.0));
  SweepSpec sweep{parse_list(f.snr), parse_list(f.velocity)};
  const auto reports = campaign(run, tmpl, sweep, f, default_trials(g.preset));
  emit_campaign(run, reports, "", {"pd", "fdr", "rmse_range", "rmse_velocity"});
  print_reports(reports);
}

void cmd_reproduce(const Globals& g, const std::string& fig, const McFlags& f) {
  Run run(g, "reproduce " + fig);
  const auto& p = run.params();
  if (fig == "fig1") {
    // Raw 2-D FFT range cuts of the three-target scene at low and high speed,
    // with the ICI-free cut for reference.
    for (double v : {5.0, 120.0}) {
      Scenario s = fig1_scenario(p, v);
      s.seed = run.seed_or(1);
      run.set_meta(scenario_to_json(s), s.seed);
      const auto symbols = generate_symbols(p, symbol_seed(s.seed));
      const DataCube cube = synthesize(s, symbols), clean = synthesize_ici_free(s, symbols);
      const std::string tag = "fig1_v" + velocity_tag(v) + "_";
      PlotSpec plot{"Range profile, v = " + velocity_tag(v) + " m/s", "range [m]", "power [dB]", {}, {}};
      for (const std::string name : {"fft", "fft_ici_free"}) {
        const CMatrix gr = fft_frequency_grid(name == "fft" ? cube : clean, symbols, p, s.targets[0].angle_deg);
        const auto map = periodogram(gr, p, 1, 2);
        std::vector<double> ranges(map.range_m.begin(), map.range_m.begin() + map.cp_rows);
        const auto prof = range_profile_db(map, doppler_column(map, v));
        write_range_profile_csv(run.path(tag + "range_" + name + ".csv"), run.meta(), ranges, prof);
        plot.series.push_back({name, ranges, prof});
      }
      write_svg_plot(run.path(tag + "range.svg"), run.meta(), plot);
    }
  } else if (fig == "fig4" || fig == "fig5" || fig == "fig6") {
    Scenario s = five_target_scenario(p);
    s.seed = run.seed_or(1);
    run.set_meta(scenario_to_json(s), s.seed);
    const auto r = run_once(run, s);
    if (fig == "fig4") emit_music(run, r, s, "fig4_");
    if (fig == "fig5") emit_cfo(run, r, "fig5_");
    if (fig == "fig6") emit_profiles(run, r, s, "fig6_");
    emit_detections(run, r, fig + "_");
    print_detections(r);
  } else if (fig == "fig8" || fig == "fig9" || fig == "fig10") {
    // One two-target campaign; the figures differ in the plotted metric.
    Scenario tmpl = table2_scenario(p, 20.0, 0.0);
    SweepSpec sweep{f.snr.empty() ? parse_list("-15:5:15") : parse_list(f.snr),
                    f.velocity.empty() ? std::vector<double>{20.0, 70.0, 120.0} : parse_list(f.velocity)};
    const auto reports = campaign(run, tmpl, sweep, f, default_trials(g.preset));
    const std::set<std::string> plots = fig == "fig8" ? std::set<std::string>{"pd", "fdr"}
                                        : fig == "fig9" ? std::set<std::string>{"rmse_range"}
                                                        : std::set<std::string>{"rmse_velocity"};
    emit_campaign(run, reports, fig + "_", plots);
    print_reports(reports);
  } else {
    throw ConfigError("unknown figure '" + fig + "'");
  }
  std::cout << "outputs in " << g.out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ICI-aware MIMO-OFDM radar detection"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "scenario JSON file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", g.seed, "master / scenario seed");
  app.add_option("--preset", g.preset, "numerology preset")->check(CLI::IsMember({"paper", "desk"}));
  app.add_option("--out", g.out, "output directory");
  app.add_option("--pipelines", g.pipelines, "comma-separated subset of apes_uml,fft,fft_ici_free");
  app.add_option("--threads", g.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--pfa", g.pfa, "CFAR false-alarm probability")->check(CLI::Range(1e-12, 0.5));

  McFlags f;
  auto add_mc = [&](CLI::App* sub) {
    sub->add_option("--snr", f.snr, "reference SNRs in dB: a,b,c or start:step:stop");
    sub->add_option("--velocity", f.velocity, "velocities in m/s: a,b,c or start:step:stop");
    sub->add_option("--trials", f.trials, "trials per sweep point")->check(CLI::PositiveNumber);
    sub->add_option("--reference", f.reference, "index of the reference target");
    sub->add_option("--tol-range", f.tol_range, "association range tolerance [m] (0 = one cell)");
    sub->add_option("--tol-velocity", f.tol_velocity, "association velocity tolerance [m/s] (0 = one cell)");
    sub->add_option("--tol-angle", f.tol_angle, "association angle tolerance [deg]");
  };

  auto* sim = app.add_subcommand("simulate", "synthesize one scenario and write the cube and raw range profiles");
  auto* det = app.add_subcommand("detect", "run the selected pipelines once");
  auto* mc = app.add_subcommand("montecarlo", "Monte Carlo sweep over SNR and velocity");
  add_mc(mc);
  auto* rep = app.add_subcommand("reproduce", "named figure recipes");
  std::string fig;
  rep->add_option("figure", fig, "fig1, fig4, fig5, fig6, fig8, fig9 or fig10")
      ->required()
      ->check(CLI::IsMember({"fig1", "fig4", "fig5", "fig6", "fig8", "fig9", "fig10"}));
  add_mc(rep);

  CLI11_PARSE(app, argc, argv);
  g.seed_given = seed_opt->count() > 0;
  try {
    if (sim->parsed()) cmd_simulate(g);
    if (det->parsed()) cmd_detect(g);
    if (mc->parsed()) cmd_montecarlo(g, f);
    if (rep->parsed()) cmd_reproduce(g, fig, f);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
