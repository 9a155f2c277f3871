#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "icisense/harness.hpp"
#include "icisense/io.hpp"

namespace py = pybind11;
using namespace icisense;

namespace {

// (nR, N, M) complex array from a cube.
py::array_t<cplx> cube_to_array(const DataCube& cube) {
  py::array_t<cplx> out({cube.n_rx(), cube.n_fast(), cube.n_slow()});
  auto a = out.mutable_unchecked<3>();
  for (int i = 0; i < cube.n_rx(); ++i)
    for (int n = 0; n < cube.n_fast(); ++n)
      for (int m = 0; m < cube.n_slow(); ++m) a(i, n, m) = cube.antennas[i](n, m);
  return out;
}

DataCube array_to_cube(py::array_t<cplx, py::array::c_style | py::array::forcecast> arr) {
  if (arr.ndim() != 3) throw std::invalid_argument("cube must have shape (n_rx, n_fast, n_slow)");
  auto a = arr.unchecked<3>();
  DataCube cube;
  cube.antennas.assign(a.shape(0), CMatrix(a.shape(1), a.shape(2)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t n = 0; n < a.shape(1); ++n)
      for (py::ssize_t m = 0; m < a.shape(2); ++m) cube.antennas[i](n, m) = a(i, n, m);
  return cube;
}

SymbolGrid to_symbols(const CMatrix& x) {
  SymbolGrid s;
  s.symbols = x;
  return s;
}

}  // namespace

PYBIND11_MODULE(_icisense, m) {
  m.doc() = "ICI-aware MIMO-OFDM radar detection";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ScenarioError>(m, "ScenarioError", PyExc_ValueError);
  py::register_exception<IllConditionedAtoms>(m, "IllConditionedAtoms", PyExc_RuntimeError);

  py::class_<OfdmParams>(m, "OfdmParams")
      .def(py::init<>())
      .def_readwrite("fc", &OfdmParams::fc)
      .def_readwrite("bandwidth", &OfdmParams::bandwidth)
      .def_readwrite("n_subcarriers", &OfdmParams::n_subcarriers)
      .def_readwrite("n_symbols", &OfdmParams::n_symbols)
      .def_readwrite("cp_duration", &OfdmParams::cp_duration)
      .def_readwrite("n_tx", &OfdmParams::n_tx)
      .def_readwrite("n_rx", &OfdmParams::n_rx)
      .def_readwrite("d_over_lambda", &OfdmParams::d_over_lambda);

  py::class_<DerivedQuantities>(m, "DerivedQuantities")
      .def_readonly("subcarrier_spacing", &DerivedQuantities::subcarrier_spacing)
      .def_readonly("symbol_duration", &DerivedQuantities::symbol_duration)
      .def_readonly("total_symbol_duration", &DerivedQuantities::total_symbol_duration)
      .def_readonly("n_taps", &DerivedQuantities::n_taps)
      .def_readonly("range_resolution", &DerivedQuantities::range_resolution)
      .def_readonly("velocity_resolution", &DerivedQuantities::velocity_resolution)
      .def_readonly("max_velocity", &DerivedQuantities::max_velocity)
      .def_readonly("max_cfo_velocity", &DerivedQuantities::max_cfo_velocity)
      .def_readonly("max_range", &DerivedQuantities::max_range)
      .def_readonly("max_cp_range", &DerivedQuantities::max_cp_range)
      .def_readonly("cfo_cell_velocity", &DerivedQuantities::cfo_cell_velocity);

  py::class_<Target>(m, "Target")
      .def(py::init([](double r, double v, double a, double snr, std::optional<double> phase) {
             return Target{r, v, a, snr, phase};
           }),
           py::arg("range_m") = 0.0, py::arg("velocity_mps") = 0.0, py::arg("angle_deg") = 0.0,
           py::arg("snr_db") = 0.0, py::arg("phase_rad") = py::none())
      .def_readwrite("range_m", &Target::range_m)
      .def_readwrite("velocity_mps", &Target::velocity_mps)
      .def_readwrite("angle_deg", &Target::angle_deg)
      .def_readwrite("snr_db", &Target::snr_db)
      .def_readwrite("phase_rad", &Target::phase_rad);

  py::class_<Scenario>(m, "Scenario")
      .def(py::init<>())
      .def_readwrite("params", &Scenario::params)
      .def_readwrite("targets", &Scenario::targets)
      .def_readwrite("noise_power", &Scenario::noise_power)
      .def_readwrite("tx_steer_deg", &Scenario::tx_steer_deg)
      .def_readwrite("seed", &Scenario::seed)
      .def("to_json", &scenario_to_json);

  py::class_<Detection>(m, "Detection")
      .def_readonly("range_m", &Detection::range_m)
      .def_readonly("velocity_ambiguous", &Detection::velocity_ambiguous)
      .def_readonly("velocity_resolved", &Detection::velocity_resolved)
      .def_readonly("angle_deg", &Detection::angle_deg)
      .def_readonly("gain", &Detection::gain)
      .def_readonly("statistic", &Detection::statistic)
      .def_readonly("source", &Detection::source)
      .def_readonly("cfo_velocity", &Detection::cfo_velocity)
      .def("__repr__", [](const Detection& d) {
        return "<Detection " + d.source + " r=" + format_number(d.range_m) + " v=" + format_number(d.velocity_resolved) +
               " angle=" + format_number(d.angle_deg) + ">";
      });

  py::class_<AngleEstimateSet>(m, "AngleEstimateSet")
      .def_readonly("angles_deg", &AngleEstimateSet::angles_deg)
      .def_readonly("grid_deg", &AngleEstimateSet::grid_deg)
      .def_readonly("spectrum", &AngleEstimateSet::spectrum)
      .def_readonly("eigvals", &AngleEstimateSet::eigvals)
      .def_readonly("k_used", &AngleEstimateSet::k_used);

  py::class_<CfoSpectrum>(m, "CfoSpectrum")
      .def_readonly("velocity_mps", &CfoSpectrum::velocity_mps)
      .def_readonly("glrt_norm", &CfoSpectrum::glrt_norm)
      .def_readonly("argmax_velocity", &CfoSpectrum::argmax_velocity)
      .def_readonly("glrt_at_argmax", &CfoSpectrum::glrt_at_argmax);

  py::class_<OmpState>(m, "OmpState")
      .def_readonly("angle_deg", &OmpState::angle_deg)
      .def_readonly("atom_cfo_mps", &OmpState::atom_cfo_mps)
      .def_readonly("spectra", &OmpState::spectra)
      .def_readonly("residue_energy", &OmpState::residue_energy)
      .def_readonly("warning", &OmpState::warning);

  py::class_<MetricsReport>(m, "MetricsReport")
      .def_readonly("snr_db", &MetricsReport::snr_db)
      .def_readonly("velocity_mps", &MetricsReport::velocity_mps)
      .def_readonly("pipeline", &MetricsReport::pipeline)
      .def_readonly("pd", &MetricsReport::pd)
      .def_readonly("fdr", &MetricsReport::fdr)
      .def_readonly("rmse_range_m", &MetricsReport::rmse_range_m)
      .def_readonly("rmse_velocity_mps", &MetricsReport::rmse_velocity_mps)
      .def_readonly("n_trials", &MetricsReport::n_trials)
      .def_readonly("n_failed", &MetricsReport::n_failed)
      .def_readonly("false_alarms", &MetricsReport::false_alarms)
      .def_readonly("reference_hits", &MetricsReport::reference_hits);

  m.def("preset_params", &preset_params, py::arg("name"));
  m.def("derive_quantities", &derive_quantities, py::arg("params"));
  m.def("load_scenario", &load_scenario, py::arg("path"));
  m.def("parse_scenario", &parse_scenario, py::arg("json_text"));
  m.def("fig1_scenario", &fig1_scenario, py::arg("params"), py::arg("velocity_mps"));
  m.def("five_target_scenario", &five_target_scenario, py::arg("params"));
  m.def("table2_scenario", &table2_scenario, py::arg("params"), py::arg("velocity_mps"), py::arg("reference_snr_db"));
  m.def("symbol_seed", &symbol_seed, py::arg("scenario_seed"));

  m.def("generate_symbols", [](const OfdmParams& p, std::uint64_t seed) { return generate_symbols(p, seed).symbols; },
        py::arg("params"), py::arg("seed"), "QPSK grid of shape (N, M).");
  m.def(
      "synthesize",
      [](const Scenario& s, const CMatrix& symbols, bool ici) {
        const auto grid = to_symbols(symbols);
        return cube_to_array(ici ? synthesize(s, grid) : synthesize_ici_free(s, grid));
      },
      py::arg("scenario"), py::arg("symbols"), py::arg("ici") = true, "Received cube of shape (n_rx, N, M).");

  m.def(
      "music",
      [](py::array_t<cplx> cube, const OfdmParams& p, int k, double step_deg) {
        AngleGrid grid;
        grid.step_deg = step_deg;
        return estimate_angles(array_to_cube(cube), p, grid, k);
      },
      py::arg("cube"), py::arg("params"), py::arg("k") = 0, py::arg("step_deg") = 0.1);

  m.def(
      "omp_detect",
      [](py::array_t<cplx> cube, const CMatrix& symbols, const OfdmParams& p, double angle, double threshold,
         int p_max) {
        OmpConfig cfg;
        cfg.threshold = threshold;
        cfg.p_max = p_max;
        return omp_detect(array_to_cube(cube).snapshots(), to_symbols(symbols), p, angle, cfg);
      },
      py::arg("cube"), py::arg("symbols"), py::arg("params"), py::arg("angle_deg"), py::arg("threshold") = 0.3,
      py::arg("p_max") = 5);

  m.def(
      "apes_uml",
      [](py::array_t<cplx> cube, const CMatrix& symbols, const OfdmParams& p, std::vector<double> angles, double pfa) {
        ApesUmlConfig cfg;
        cfg.dd.cfar.pfa = pfa;
        return apes_uml_detect(array_to_cube(cube), to_symbols(symbols), p, angles, cfg).detections;
      },
      py::arg("cube"), py::arg("symbols"), py::arg("params"), py::arg("angles_deg"), py::arg("pfa") = 1e-4);

  m.def(
      "fft_baseline",
      [](py::array_t<cplx> cube, const CMatrix& symbols, const OfdmParams& p, std::vector<double> angles, double pfa) {
        DelayDopplerConfig cfg;
        cfg.cfar.pfa = pfa;
        return fft_baseline(array_to_cube(cube), to_symbols(symbols), p, angles, cfg);
      },
      py::arg("cube"), py::arg("symbols"), py::arg("params"), py::arg("angles_deg"), py::arg("pfa") = 1e-4);

  m.def(
      "run_montecarlo",
      [](const Scenario& s, std::vector<double> snr_db, std::vector<double> velocity_mps, int n_trials,
         std::uint64_t seed, int threads, std::vector<std::string> pipelines) {
        MonteCarloOptions o;
        o.n_trials = n_trials;
        o.master_seed = seed;
        o.threads = threads;
        if (!pipelines.empty()) o.harness.pipelines = pipelines;
        py::gil_scoped_release release;
        return run_montecarlo(s, {snr_db, velocity_mps}, o);
      },
      py::arg("scenario"), py::arg("snr_db") = std::vector<double>{}, py::arg("velocity_mps") = std::vector<double>{},
      py::arg("n_trials") = 50, py::arg("seed") = 1, py::arg("threads") = 0,
      py::arg("pipelines") = std::vector<std::string>{});

  m.def("pilot_apply", &pilot_apply, py::arg("x"), py::arg("v"));
  m.def("pilot_matrix", &pilot_matrix, py::arg("x"), py::arg("n_taps"));
  m.def("cfar_alpha", &cfar_alpha, py::arg("pfa"), py::arg("n_train"));
  m.def(
      "ca_cfar",
      [](const Eigen::MatrixXd& power, double pfa, int guard, int train) {
        std::vector<std::tuple<int, int, double>> out;
        for (const auto& h : ca_cfar(power, CfarConfig{pfa, guard, train})) out.emplace_back(h.row, h.col, h.statistic);
        return out;
      },
      py::arg("power"), py::arg("pfa") = 1e-4, py::arg("guard") = 2, py::arg("train") = 8);
  m.def("resolve_ambiguity", &resolve_ambiguity, py::arg("velocity_ambiguous"), py::arg("velocity_cfo"), py::arg("vmax"));
  m.def("wrap_velocity", &wrap_velocity, py::arg("v"), py::arg("vmax"));
}
