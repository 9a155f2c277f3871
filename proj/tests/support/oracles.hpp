#pragma once

// Independent reference computations for the tests. Everything here is
// written from the signal model directly (dense matrices, explicit sums) and
// never calls the FFT-based fast paths it is used to check.

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "icisense/scene.hpp"

namespace oracle {

using icisense::cplx;
using icisense::CMatrix;
using icisense::CVector;
constexpr double pi = 3.14159265358979323846;
constexpr double c0 = 3.0e8;

// Unitary DFT, [F]_{l,n} = exp(-j 2 pi n l / N) / sqrt(N).
inline CMatrix dft(int n) {
  CMatrix f(n, n);
  for (int l = 0; l < n; ++l)
    for (int k = 0; k < n; ++k) f(l, k) = std::polar(1.0 / std::sqrt(double(n)), -2.0 * pi * double(k) * l / n);
  return f;
}

// F^H diag(x) F_{N,L}.
inline CMatrix pilot(const CVector& x, int taps) {
  const int n = static_cast<int>(x.size());
  const CMatrix f = dft(n);
  return f.adjoint() * x.asDiagonal() * f.leftCols(taps);
}

// Diagonal of D(eps) with the CFO in subcarrier spacings.
inline CVector ramp(int n, double eps) {
  CVector d(n);
  for (int l = 0; l < n; ++l) d(l) = std::polar(1.0, 2.0 * pi * eps * l / n);
  return d;
}

inline CVector steering(int n, double deg, double d_over_lambda = 0.5) {
  CVector a(n);
  for (int i = 0; i < n; ++i) a(i) = std::polar(1.0, 2.0 * pi * d_over_lambda * i * std::sin(deg * pi / 180.0));
  return a;
}

inline cplx tx_gain(const icisense::OfdmParams& p, double target_deg, double steer_deg) {
  cplx g = 0.0;
  for (int n = 0; n < p.n_tx; ++n)
    g += std::polar(1.0, 2.0 * pi * p.d_over_lambda * n * (std::sin(target_deg * pi / 180.0) - std::sin(steer_deg * pi / 180.0)));
  return g;
}

// Complex gain with an explicit phase and |alpha|^2 / sigma^2 = SNR; a
// noiseless scene keeps the unit reference power.
inline cplx alpha(const icisense::Target& t, double noise_power) {
  const double ref = noise_power > 0.0 ? noise_power : 1.0;
  return std::polar(std::sqrt(ref) * std::pow(10.0, t.snr_db / 20.0), t.phase_rad.value_or(0.0));
}

// Noiseless received samples by explicit double sum over subcarriers n and
// fast-time samples l:
// y_{i,m}[l] = alpha^{(i)} e^{j2pi fc m Tsym nu} e^{j2pi fc T (l/N) nu}
//              (1/sqrt N) sum_n x_{n,m} e^{j2pi n l/N} e^{-j2pi n df tau}
inline std::vector<CMatrix> brute_force_cube(const icisense::Scenario& s, const CMatrix& x, bool ici = true) {
  const auto& p = s.params;
  const int n = p.n_subcarriers, m_count = p.n_symbols;
  const double df = p.bandwidth / n, t_sym = 1.0 / df, t_tot = t_sym + p.cp_duration;
  std::vector<CMatrix> y(p.n_rx, CMatrix::Zero(n, m_count));
  for (const auto& t : s.targets) {
    const cplx a = alpha(t, s.noise_power) * tx_gain(p, t.angle_deg, s.tx_steer_deg);
    const double tau = 2.0 * t.range_m / c0, nu = 2.0 * t.velocity_mps / c0;
    for (int i = 0; i < p.n_rx; ++i) {
      const cplx ai = a * std::polar(1.0, 2.0 * pi * p.d_over_lambda * i * std::sin(t.angle_deg * pi / 180.0));
      for (int m = 0; m < m_count; ++m)
        for (int l = 0; l < n; ++l) {
          cplx acc = 0.0;
          for (int k = 0; k < n; ++k)
            acc += x(k, m) * std::polar(1.0, 2.0 * pi * double(k) * l / n - 2.0 * pi * k * df * tau);
          const double ici_phase = ici ? 2.0 * pi * p.fc * t_sym * (double(l) / n) * nu : 0.0;
          y[i](l, m) += ai * std::polar(1.0, 2.0 * pi * p.fc * m * t_tot * nu + ici_phase) * acc / std::sqrt(double(n));
        }
    }
  }
  return y;
}

// Q(eps) = sum_m Y_m^H D P_perp D^H Y_m with a dense projector.
inline CMatrix nullspace_scm(const std::vector<CMatrix>& y, const CMatrix& x, int taps, double eps) {
  const int n = static_cast<int>(x.rows());
  const CVector d = ramp(n, eps);
  CMatrix q = CMatrix::Zero(y.front().cols(), y.front().cols());
  for (size_t m = 0; m < y.size(); ++m) {
    const CMatrix xb = pilot(x.col(static_cast<Eigen::Index>(m)), taps);
    const CMatrix proj = CMatrix::Identity(n, n) - xb * (xb.adjoint() * xb).inverse() * xb.adjoint();
    const CMatrix dy = d.conjugate().asDiagonal() * y[m];
    q += dy.adjoint() * proj * dy;
  }
  return q;
}

// Large-sample SCM for unit-power symbols and well separated targets:
// N M sum_k |alpha_k|^2 |a_T^T f_T|^2 a_R^*(theta_k) a_R^T(theta_k) + N M sigma^2 I.
inline CMatrix scm_model(const icisense::Scenario& s) {
  const auto& p = s.params;
  const double nm = double(p.n_subcarriers) * p.n_symbols;
  CMatrix r = nm * s.noise_power * CMatrix::Identity(p.n_rx, p.n_rx);
  for (const auto& t : s.targets) {
    const double beta = std::norm(alpha(t, s.noise_power)) * std::norm(tx_gain(p, t.angle_deg, s.tx_steer_deg));
    const CVector a = steering(p.n_rx, t.angle_deg, p.d_over_lambda);
    r += nm * beta * a.conjugate() * a.transpose();
  }
  return r;
}

inline CMatrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  CMatrix a(rows, cols);
  for (int i = 0; i < a.size(); ++i) a(i) = {g(rng), g(rng)};
  return a;
}

inline CVector random_qpsk(int n, std::mt19937_64& rng) {
  CVector x(n);
  const double h = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < n; ++i) x(i) = {(rng() & 1) ? h : -h, (rng() & 2) ? h : -h};
  return x;
}

inline double rel_err(const CMatrix& a, const CMatrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Small numerology with the reference subcarrier spacing and CP ratio.
inline icisense::OfdmParams small_params(int n, int m, int n_rx) {
  icisense::OfdmParams p;
  p.n_subcarriers = n;
  p.n_symbols = m;
  p.bandwidth = 50e6 / 2048.0 * n;
  p.n_rx = n_rx;
  return p;
}

}  // namespace oracle
