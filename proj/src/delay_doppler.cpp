#include "icisense/delay_doppler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icisense/fft.hpp"

namespace icisense {

CMatrix to_freq_slowtime(const CMatrix& channel, int n_subcarriers) {
  if (channel.rows() > n_subcarriers) throw std::invalid_argument("to_freq_slowtime: more taps than subcarriers");
  Fft& fft = local_fft(n_subcarriers);
  CMatrix out(n_subcarriers, channel.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_subcarriers));
  for (Eigen::Index m = 0; m < channel.cols(); ++m) {
    fft.forward(channel.col(m), out.col(m));
    out.col(m) *= scale;
  }
  return out;
}

RangeDopplerMap periodogram(const CMatrix& g, const OfdmParams& params, int pad_r, int pad_d) {
  auto pow2 = [](int v) { return v >= 1 && (v & (v - 1)) == 0; };
  if (!pow2(pad_r) || !pow2(pad_d)) throw ConfigError("zero-padding factors must be powers of two");
  const auto dq = derive_quantities(params);
  const auto n = static_cast<int>(g.rows()), m = static_cast<int>(g.cols());
  const int rows = n * pad_r, cols = m * pad_d;

  // Delay: inverse DFT over subcarriers (conj b); Doppler: DFT over symbols (c).
  CMatrix t(rows, m);
  Fft& fr = local_fft(rows);
  for (int col = 0; col < m; ++col) fr.backward(g.col(col), t.col(col));
  RangeDopplerMap map;
  map.power.resize(rows, cols);
  Fft& fd = local_fft(cols);
  CVector in(m), out(cols);
  const double norm = 1.0 / (static_cast<double>(n) * m);
  for (int r = 0; r < rows; ++r) {
    in = t.row(r).transpose();
    fd.forward(in, out);
    map.power.row(r) = out.array().abs2().transpose() * norm;
  }

  map.pad_r = pad_r;
  map.pad_d = pad_d;
  map.cp_rows = std::min(rows, dq.n_taps * pad_r);
  for (int r = 0; r < rows; ++r) map.range_m.push_back(r * dq.range_resolution / pad_r);
  for (int k = 0; k < cols; ++k) {
    const int kk = k < cols / 2 ? k : k - cols;
    map.velocity_mps.push_back(kk * dq.velocity_resolution / pad_d);
  }
  std::vector<double> vals;
  vals.reserve(static_cast<size_t>(map.cp_rows) * cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < map.cp_rows; ++r) vals.push_back(map.power(r, c));
  std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
  map.noise_floor = vals[vals.size() / 2] / std::log(2.0);
  return map;
}

int doppler_column(const RangeDopplerMap& map, double velocity_mps) {
  const auto cols = static_cast<int>(map.velocity_mps.size());
  if (cols < 2) return 0;
  const double step = map.velocity_mps[1] - map.velocity_mps[0];
  const double vmax = 0.5 * step * cols;
  const int k = static_cast<int>(std::lround(wrap_velocity(velocity_mps, vmax) / step));
  return ((k % cols) + cols) % cols;
}

std::vector<double> range_profile_db(const RangeDopplerMap& map, int column) {
  std::vector<double> out(map.cp_rows);
  for (int r = 0; r < map.cp_rows; ++r) out[r] = 10.0 * std::log10(std::max(map.power(r, column), 1e-300));
  return out;
}

double cfar_alpha(double pfa, int n_train) {
  return n_train * (std::pow(pfa, -1.0 / n_train) - 1.0);
}

std::vector<CfarHit> ca_cfar(const Eigen::MatrixXd& p, const CfarConfig& cfg) {
  if (!(cfg.pfa > 0.0 && cfg.pfa < 1.0)) throw ConfigError("CFAR pfa must lie in (0, 1)");
  if (cfg.guard < 0 || cfg.train < 1) throw ConfigError("CFAR guard/training sizes are invalid");
  const auto rows = static_cast<int>(p.rows()), cols = static_cast<int>(p.cols());
  const int span = 2 * (cfg.guard + cfg.train) + 1;
  if (rows < span || cols < span) throw ConfigError("map is smaller than the CFAR window");
  const int n_train = 4 * cfg.train;
  const double alpha = cfar_alpha(cfg.pfa, n_train);
  auto wr = [rows](int r) { return ((r % rows) + rows) % rows; };
  auto wc = [cols](int c) { return ((c % cols) + cols) % cols; };

  std::vector<CfarHit> hits;
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) {
      const double v = p(r, c);
      double sum = 0.0;
      for (int k = cfg.guard + 1; k <= cfg.guard + cfg.train; ++k)
        sum += p(wr(r + k), c) + p(wr(r - k), c) + p(r, wc(c + k)) + p(r, wc(c - k));
      const double mean = sum / n_train;
      if (!(v > alpha * mean)) continue;
      bool peak = true;
      for (int dr = -cfg.guard; dr <= cfg.guard && peak; ++dr)
        for (int dc = -cfg.guard; dc <= cfg.guard; ++dc)
          if ((dr || dc) && p(wr(r + dr), wc(c + dc)) > v) {
            peak = false;
            break;
          }
      if (peak) hits.push_back({r, c, mean > 0.0 ? v / mean : std::numeric_limits<double>::infinity()});
    }
  return hits;
}

std::vector<CfarHit> ca_cfar(const RangeDopplerMap& map, const CfarConfig& cfg) {
  return ca_cfar(Eigen::MatrixXd(map.power.topRows(map.cp_rows)), cfg);
}

cplx estimate_gain(const CMatrix& g, const OfdmParams& params, double range_m, double velocity_mps) {
  const auto n = static_cast<int>(g.rows()), m = static_cast<int>(g.cols());
  OfdmParams p = params;
  p.n_subcarriers = n;
  p.n_symbols = m;
  const CVector b = steer_delay(p, 2.0 * range_m / kSpeedOfLight);
  const CVector c = steer_doppler(p, doppler_from_velocity(velocity_mps));
  return (b.adjoint() * g * c).value() / (static_cast<double>(n) * m);
}

double resolve_ambiguity(double v, double v_cfo, double vmax) {
  return v + 2.0 * vmax * std::floor((v_cfo + vmax) / (2.0 * vmax));
}

double wrap_velocity(double v, double vmax) {
  return v - 2.0 * vmax * std::floor((v + vmax) / (2.0 * vmax));
}

std::vector<Detection> detect_on_map(const CMatrix& g, const RangeDopplerMap& map, const OfdmParams& params,
                                     const DelayDopplerConfig& config, double angle_deg, const std::string& source) {
  std::vector<Detection> out;
  for (const auto& hit : ca_cfar(map, config.cfar)) {
    Detection d;
    d.range_m = map.range_m[hit.row];
    d.velocity_ambiguous = map.velocity_mps[hit.col];
    d.velocity_resolved = d.velocity_ambiguous;
    d.angle_deg = angle_deg;
    d.gain = estimate_gain(g, params, d.range_m, d.velocity_ambiguous);
    d.statistic = hit.statistic;
    d.source = source;
    out.push_back(d);
  }
  return out;
}

CMatrix fft_frequency_grid(const DataCube& cube, const SymbolGrid& symbols, const OfdmParams& params,
                           double angle_deg) {
  const int nr = cube.n_rx(), n = cube.n_fast();
  const CVector a = array_steering(nr, angle_deg, params.d_over_lambda);
  CMatrix y = CMatrix::Zero(n, cube.n_slow());
  for (int i = 0; i < nr; ++i) y += std::conj(a(i)) * cube.antennas[i];
  y /= static_cast<double>(nr);
  CMatrix g = to_freq_slowtime(y, n);
  return g.cwiseProduct(symbols.symbols.conjugate());
}

std::vector<Detection> fft_baseline(const DataCube& cube, const SymbolGrid& symbols, const OfdmParams& params,
                                    const std::vector<double>& angles_deg, const DelayDopplerConfig& config,
                                    const std::string& source) {
  std::vector<Detection> out;
  for (double angle : angles_deg) {
    const CMatrix g = fft_frequency_grid(cube, symbols, params, angle);
    const auto map = periodogram(g, params, config.pad_r, config.pad_d);
    auto dets = detect_on_map(g, map, params, config, angle, source);
    out.insert(out.end(), dets.begin(), dets.end());
  }
  return out;
}

AngleEstimateSet estimate_angles(const DataCube& cube, const OfdmParams& params, const AngleGrid& grid,
                                 int source_count) {
  const auto scm = build_scm(cube);
  const int k = source_count > 0 ? source_count : estimate_source_count(scm);
  return music_spectrum(scm, params, grid, k);
}

ApesUmlResult apes_uml_detect(const DataCube& cube, const SymbolGrid& symbols, const OfdmParams& params,
                              const std::vector<double>& angles_deg, const ApesUmlConfig& config) {
  const auto dq = derive_quantities(params);
  const auto snapshots = cube.snapshots();
  ApesUmlResult res;
  res.angles.angles_deg = angles_deg;
  for (double angle : angles_deg) {
    OmpState state;
    try {
      state = omp_detect(snapshots, symbols, params, angle, config.omp);
    } catch (const std::exception& e) {
      res.warnings.push_back("angle " + std::to_string(angle) + ": " + e.what());
      continue;
    }
    if (!state.warning.empty()) res.warnings.push_back("angle " + std::to_string(angle) + ": " + state.warning);
    for (const auto& est : state.detected) {
      const CMatrix g = to_freq_slowtime(est.channel, params.n_subcarriers);
      auto map = periodogram(g, params, config.dd.pad_r, config.dd.pad_d);
      for (auto d : detect_on_map(g, map, params, config.dd, angle, "apes_uml")) {
        d.cfo_velocity = est.cfo_velocity;
        d.velocity_resolved = resolve_ambiguity(d.velocity_ambiguous, est.cfo_velocity, dq.max_velocity);
        res.detections.push_back(d);
      }
      res.maps.push_back({angle, est.cfo_velocity, est.iteration, std::move(map)});
    }
    res.omp.push_back(std::move(state));
  }
  return res;
}

ApesUmlResult apes_uml_pipeline(const DataCube& cube, const SymbolGrid& symbols, const OfdmParams& params,
                                const ApesUmlConfig& config) {
  auto angles = estimate_angles(cube, params, config.angle_grid, config.source_count);
  auto res = apes_uml_detect(cube, symbols, params, angles.angles_deg, config);
  if (angles.fewer_peaks_than_requested) res.warnings.push_back("MUSIC returned fewer peaks than requested");
  res.angles = std::move(angles);
  return res;
}

}  // namespace icisense
