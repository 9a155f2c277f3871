#include "icisense/simulator.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "icisense/fft.hpp"

namespace icisense {

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;  // "noise"
constexpr char kCubeMagic[8] = {'I', 'C', 'I', 'C', 'U', 'B', 'E', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }
float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace

CMatrix DataCube::snapshot(int m) const {
  CMatrix s(n_fast(), n_rx());
  for (int i = 0; i < n_rx(); ++i) s.col(i) = antennas[i].col(m);
  return s;
}

std::vector<CMatrix> DataCube::snapshots() const {
  std::vector<CMatrix> out;
  out.reserve(n_slow());
  for (int m = 0; m < n_slow(); ++m) out.push_back(snapshot(m));
  return out;
}

DataCube& DataCube::operator+=(const DataCube& other) {
  if (antennas.empty()) {
    antennas = other.antennas;
    return *this;
  }
  for (size_t i = 0; i < antennas.size(); ++i) antennas[i] += other.antennas.at(i);
  return *this;
}

CVector steer_delay(const OfdmParams& params, double tau) {
  const double df = params.bandwidth / params.n_subcarriers;
  CVector b(params.n_subcarriers);
  for (int n = 0; n < params.n_subcarriers; ++n) b(n) = std::polar(1.0, -2.0 * kPi * n * df * tau);
  return b;
}

CVector steer_doppler(const OfdmParams& params, double nu) {
  const auto dq = derive_quantities(params);
  CVector c(params.n_symbols);
  for (int m = 0; m < params.n_symbols; ++m)
    c(m) = std::polar(1.0, -2.0 * kPi * params.fc * m * dq.total_symbol_duration * nu);
  return c;
}

CVector ici_ramp_subcarriers(int n, double eps) {
  CVector d(n);
  for (int l = 0; l < n; ++l) d(l) = std::polar(1.0, 2.0 * kPi * eps * l / n);
  return d;
}

CVector ici_ramp(const OfdmParams& params, double nu) {
  const auto dq = derive_quantities(params);
  return ici_ramp_subcarriers(params.n_subcarriers, params.fc * dq.symbol_duration * nu);
}

DataCube generate_noise(const Scenario& s) {
  const int n = s.params.n_subcarriers, m = s.params.n_symbols, nr = s.params.n_rx;
  DataCube cube;
  cube.antennas.assign(nr, CMatrix::Zero(n, m));
  if (s.noise_power <= 0.0) return cube;
  std::mt19937_64 rng(mix_seed(s.seed, kNoiseStream));
  std::normal_distribution<double> gauss(0.0, std::sqrt(s.noise_power / 2.0));
  for (int i = 0; i < nr; ++i)
    for (int col = 0; col < m; ++col)
      for (int row = 0; row < n; ++row) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        cube.antennas[i](row, col) = {re, im};
      }
  return cube;
}

DataCube synthesize_echoes(const Scenario& s, const SymbolGrid& symbols, bool with_ici) {
  validate_scenario(s);
  const auto& p = s.params;
  const int n = p.n_subcarriers, m_count = p.n_symbols, nr = p.n_rx;
  if (symbols.symbols.rows() != n || symbols.symbols.cols() != m_count)
    throw ScenarioError("symbol grid shape does not match the numerology");

  DataCube cube;
  cube.antennas.assign(nr, CMatrix::Zero(n, m_count));
  const CVector f_t = tx_beamformer(p, s.tx_steer_deg);
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  Fft fft(n);
  CVector buf(n);

  for (const auto& tgt : target_models(s)) {
    const double angle_deg = tgt.angle_rad * 180.0 / kPi;
    const CVector a_r = array_steering(nr, angle_deg, p.d_over_lambda);
    const cplx tx_gain = array_steering(p.n_tx, angle_deg, p.d_over_lambda).transpose() * f_t;
    const CVector b = steer_delay(p, tgt.delay);
    const CVector c = steer_doppler(p, tgt.doppler);
    const CVector ramp = with_ici ? ici_ramp(p, tgt.doppler) : CVector::Ones(n);
    for (int m = 0; m < m_count; ++m) {
      buf = symbols.symbols.col(m).cwiseProduct(b);
      fft.backward(buf, buf);
      buf = buf.cwiseProduct(ramp) * (inv_sqrt_n * std::conj(c(m)) * tgt.gain * tx_gain);
      for (int i = 0; i < nr; ++i) cube.antennas[i].col(m) += a_r(i) * buf;
    }
  }
  return cube;
}

DataCube synthesize(const Scenario& s, const SymbolGrid& symbols) {
  DataCube cube = synthesize_echoes(s, symbols, true);
  cube += generate_noise(s);
  return cube;
}

DataCube synthesize_ici_free(const Scenario& s, const SymbolGrid& symbols) {
  DataCube cube = synthesize_echoes(s, symbols, false);
  cube += generate_noise(s);
  return cube;
}

void write_cube(const DataCube& cube, const std::string& path, const std::string& comment) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write cube file '" + path + "'");
  os.write(kCubeMagic, 8);
  put_u32(os, static_cast<std::uint32_t>(cube.n_rx()));
  put_u32(os, static_cast<std::uint32_t>(cube.n_fast()));
  put_u32(os, static_cast<std::uint32_t>(cube.n_slow()));
  put_u32(os, static_cast<std::uint32_t>(comment.size()));
  const char zeros[8] = {};
  os.write(zeros, 8);
  os.write(comment.data(), static_cast<std::streamsize>(comment.size()));
  for (const auto& y : cube.antennas)
    for (Eigen::Index m = 0; m < y.cols(); ++m)
      for (Eigen::Index l = 0; l < y.rows(); ++l) {
        put_f32(os, static_cast<float>(y(l, m).real()));
        put_f32(os, static_cast<float>(y(l, m).imag()));
      }
  if (!os) throw std::runtime_error("I/O error while writing cube file '" + path + "'");
}

DataCube read_cube(const std::string& path, std::string* comment) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open cube file '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCubeMagic, 8) != 0) throw std::runtime_error("'" + path + "' is not a cube file");
  const auto nr = get_u32(is), n = get_u32(is), m = get_u32(is);
  const auto comment_len = get_u32(is);
  is.ignore(8);
  std::string text(comment_len, '\0');
  is.read(text.data(), comment_len);
  if (comment) *comment = std::move(text);
  DataCube cube;
  cube.antennas.assign(nr, CMatrix(n, m));
  for (auto& y : cube.antennas)
    for (Eigen::Index col = 0; col < y.cols(); ++col)
      for (Eigen::Index l = 0; l < y.rows(); ++l) {
        const float re = get_f32(is);
        const float im = get_f32(is);
        y(l, col) = {re, im};
      }
  if (!is) throw std::runtime_error("truncated cube file '" + path + "'");
  return cube;
}

}  // namespace icisense
