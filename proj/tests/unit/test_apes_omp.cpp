#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "icisense/apes_omp.hpp"
#include "icisense/delay_doppler.hpp"
#include "icisense/harness.hpp"
#include "oracles.hpp"

using namespace icisense;

namespace {

SymbolGrid grid_of(const CMatrix& x) {
  SymbolGrid g;
  g.symbols = x;
  return g;
}

std::vector<CMatrix> random_snapshots(int n, int m, int nr, std::mt19937_64& rng) {
  std::vector<CMatrix> out;
  for (int k = 0; k < m; ++k) out.push_back(oracle::random_matrix(n, nr, rng));
  return out;
}

struct Run {
  Scenario scenario;
  SymbolGrid symbols;
  DataCube cube;
};

Run simulate(Scenario s) {
  Run r{s, generate_symbols(s.params, symbol_seed(s.seed)), {}};
  r.cube = synthesize(s, r.symbols);
  return r;
}

Scenario make(const OfdmParams& p, std::vector<Target> t, double noise = 1.0) {
  Scenario s;
  s.params = p;
  s.targets = std::move(t);
  s.noise_power = noise;
  return s;
}

// OMP on the five-target scene at -35 deg, shared by several cases.
const OmpState& five_target_omp() {
  static const OmpState state = [] {
    const auto r = simulate(five_target_scenario(preset_params("desk")));
    return omp_detect(r.cube.snapshots(), r.symbols, r.scenario.params, -35.0);
  }();
  return state;
}

}  // namespace

TEST_CASE("pilot operator on the first tap") {
  const auto p = oracle::small_params(32, 4, 4);
  const CVector x = generate_symbols(p, 1).symbols.col(0);
  CVector e0 = CVector::Zero(8);
  e0(0) = 1.0;
  // F_{N,L} e_0 = 1 / sqrt(N), so the result is F^H x / sqrt(N)
  const CVector expected = oracle::dft(32).adjoint() * x / std::sqrt(32.0);
  CHECK((pilot_apply(x, e0) - expected).norm() < 1e-12);
}

TEST_CASE("pilot operator against the dense matrix") {
  std::mt19937_64 rng(4);
  const CVector x = oracle::random_qpsk(32, rng);
  const CMatrix dense = oracle::pilot(x, 8);
  CHECK(oracle::rel_err(pilot_matrix(x, 8), dense) < 1e-12);
  const CVector v = oracle::random_matrix(8, 1, rng);
  const CVector u = oracle::random_matrix(32, 1, rng);
  CHECK((pilot_apply(x, v) - dense * v).norm() < 1e-12 * (dense * v).norm());
  CHECK((pilot_apply_adj(x, u, 8) - dense.adjoint() * u).norm() < 1e-12 * u.norm());

  // general symbols too
  const CVector g = oracle::random_matrix(64, 1, rng);
  CHECK(oracle::rel_err(pilot_matrix(g, 16), oracle::pilot(g, 16)) < 1e-12);
}

TEST_CASE("pilot gram identity for unit-modulus symbols") {
  std::mt19937_64 rng(5);
  const CVector x = generate_symbols(preset_params("desk"), 3).symbols.col(7);
  for (int trial = 0; trial < 5; ++trial) {
    const CVector v = oracle::random_matrix(128, 1, rng);
    CHECK((pilot_apply_adj(x, pilot_apply(x, v), 128) - v).norm() < 1e-10 * v.norm());
  }
}

TEST_CASE("projector idempotence") {
  std::mt19937_64 rng(6);
  const CVector x = oracle::random_qpsk(64, rng);
  auto perp = [&](const CVector& u) -> CVector { return u - pilot_apply(x, pilot_apply_adj(x, u, 16)); };
  const CVector u = oracle::random_matrix(64, 1, rng);
  const CVector once = perp(u);
  CHECK((perp(once) - once).norm() < 1e-10 * u.norm());
}

TEST_CASE("cfo conversions") {
  const auto p = preset_params("paper");
  const auto d = derive_quantities(p);
  // one CFO cell is one subcarrier spacing
  CHECK(cfo_from_velocity(p, d.cfo_cell_velocity) == doctest::Approx(1.0));
  CHECK(velocity_from_cfo(p, cfo_from_velocity(p, 123.4)) == doctest::Approx(123.4));
}

TEST_CASE("null-space covariance against the dense projector") {
  const auto p = oracle::small_params(32, 4, 4);
  std::mt19937_64 rng(7);
  const auto y = random_snapshots(32, 4, 4, rng);
  const double v = 37.0;
  const double eps = cfo_from_velocity(p, v);

  const auto qpsk = generate_symbols(p, 2);
  const CMatrix dense = oracle::nullspace_scm(y, qpsk.symbols, 8, eps);
  CHECK(oracle::rel_err(nullspace_scm(y, qpsk, p, v), dense) < 1e-9);

  // non-constant modulus takes the Gram path
  const CMatrix gauss = oracle::random_matrix(32, 4, rng);
  const auto grid = grid_of(gauss);
  REQUIRE_FALSE(grid.unit_modulus());
  CHECK(oracle::rel_err(nullspace_scm(y, grid, p, v), oracle::nullspace_scm(y, gauss, 8, eps)) < 1e-9);

  std::vector<CMatrix> zero(4, CMatrix::Zero(32, 4));
  CHECK(nullspace_scm(zero, qpsk, p, v).norm() == 0.0);
}

TEST_CASE("null-space covariance never exceeds the residue covariance") {
  const auto p = preset_params("desk");
  const auto r = simulate(five_target_scenario(p));
  const auto snaps = r.cube.snapshots();
  const CMatrix rr = residue_covariance(snaps);
  for (double v : {-300.0, -10.0, 0.0, 10.0, 205.0, 4000.0}) {
    const CMatrix q = nullspace_scm(snaps, r.symbols, p, v);
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(rr - q);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-9 * rr.trace().real());
    // implied beamformer is distortionless
    const CVector a = array_steering(p.n_rx, -35.0);
    const CVector qa = q.conjugate().ldlt().solve(a);
    const CVector w = qa / (a.adjoint() * qa).value();
    CHECK(std::abs((w.adjoint() * a).value() - 1.0) < 1e-10);
  }
}

TEST_CASE("objective diverges at the true cfo of a noiseless target") {
  const auto p = preset_params("desk");
  const auto r = simulate(make(p, {{240.0, 70.0, -35.0, 20.0, {}}}, 0.0));
  const auto snaps = r.cube.snapshots();
  const CVector a = array_steering(p.n_rx, -35.0);
  const double on = apes_objective(nullspace_scm(snaps, r.symbols, p, 70.0), a);
  const double off = apes_objective(nullspace_scm(snaps, r.symbols, p, 150.0), a);
  CHECK((std::isnan(on) || on > 1e6 * off));
  const CMatrix q = nullspace_scm(snaps, r.symbols, p, 70.0);
  CHECK(normalized_glrt(q, residue_covariance(snaps), a) > 0.999);
}

TEST_CASE("normalized glrt limits") {
  std::mt19937_64 rng(8);
  const CMatrix z = oracle::random_matrix(8, 8, rng);
  const CMatrix r = z * z.adjoint();
  const CVector a = array_steering(8, 10.0);
  CHECK(normalized_glrt(r, r, a) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::isfinite(glrt_statistic(r * 0.5, r, a, 1.0)));
  CHECK(std::isnan(apes_objective(CMatrix::Zero(8, 8), a)));
}

TEST_CASE("lag-domain spectrum equals the direct evaluation") {
  const auto p = preset_params("desk");
  const auto r = simulate(make(p, {{240.0, 70.0, -35.0, 10.0, {}}}));
  const auto snaps = r.cube.snapshots();
  CfoGridSpec spec;
  spec.span_mps = 400.0;
  const auto fast = cfo_spectrum(snaps, r.symbols, p, -35.0, spec);
  const auto slow = cfo_spectrum_direct(snaps, r.symbols, p, -35.0, spec);
  REQUIRE(fast.objective.size() == slow.objective.size());
  for (size_t k = 0; k < fast.objective.size(); ++k)
    CHECK(fast.objective[k] == doctest::Approx(slow.objective[k]).epsilon(1e-8));
  CHECK(fast.argmax_velocity == doctest::Approx(slow.argmax_velocity).epsilon(1e-6));
}

TEST_CASE("cfo argmax of a single target") {
  const auto p = preset_params("desk");
  const auto d = derive_quantities(p);
  const auto r = simulate(make(p, {{240.0, 70.0, -35.0, 20.0, {}}}));
  const auto spec = cfo_spectrum(r.cube.snapshots(), r.symbols, p, -35.0, {});
  const double half_cell = 0.5 * d.cfo_cell_velocity / 4.0;
  CHECK(std::abs(spec.argmax_velocity - 70.0) < half_cell);
  CHECK(spec.glrt_at_argmax > 0.3);
  CHECK(spec.velocity_mps.front() == doctest::Approx(-d.max_cfo_velocity).epsilon(1e-9));
  for (double g : spec.glrt_norm)
    if (!std::isnan(g)) CHECK((g >= 0.0 && g <= 1.0));
}

TEST_CASE("noise-only cfo spectrum stays under the threshold") {
  const auto p = preset_params("desk");
  for (std::uint64_t seed : {1, 2, 3}) {
    auto s = make(p, {});
    s.seed = seed;
    const auto r = simulate(s);
    const auto spec = cfo_spectrum(r.cube.snapshots(), r.symbols, p, -35.0, {});
    CHECK(spec.glrt_at_argmax < 0.3);
    CHECK(omp_detect(r.cube.snapshots(), r.symbols, p, -35.0).detected.empty());
  }
}

TEST_CASE("cfo spectrum isolates angles") {
  const auto p = preset_params("desk");
  const auto d = derive_quantities(p);
  const auto r = simulate(make(p, {{240.0, 70.0, -35.0, 15.0, {}}, {480.0, -150.0, 0.0, 15.0, {}}}));
  const auto spec = cfo_spectrum(r.cube.snapshots(), r.symbols, p, -35.0, {});
  for (size_t k = 0; k < spec.glrt_norm.size(); ++k)
    if (spec.glrt_norm[k] > 0.3) CHECK(std::abs(spec.velocity_mps[k] - 70.0) < 1.5 * d.cfo_cell_velocity);
}

TEST_CASE("single-atom joint update recovers the channel") {
  const auto p = preset_params("desk");
  // on-grid delay so the channel is exactly L taps long
  const Target t{240.0, 70.0, -35.0, 20.0, 0.5};
  const auto s = make(p, {t}, 0.0);
  const auto r = simulate(s);
  const auto upd = joint_channel_update(r.cube.snapshots(), r.symbols, p, {70.0}, -35.0);
  REQUIRE(upd.channels.size() == 1);
  const auto m = target_models(s)[0];
  const cplx bar_alpha = m.gain * oracle::tx_gain(p, -35.0, s.tx_steer_deg);
  const CMatrix expected = bar_alpha * steer_delay(p, m.delay) * steer_doppler(p, m.doppler).adjoint();
  CHECK(oracle::rel_err(to_freq_slowtime(upd.channels[0], p.n_subcarriers), expected) < 1e-6);
}

TEST_CASE("single-atom joint update matches the closed form") {
  const auto p = oracle::small_params(64, 8, 4);
  const auto r = simulate(make(p, {{300.0, 90.0, 20.0, 5.0, {}}}));
  const auto snaps = r.cube.snapshots();
  const double v = 85.0;
  const auto upd = joint_channel_update(snaps, r.symbols, p, {v}, 20.0);
  const int taps = derive_quantities(p).n_taps;
  const double eps = cfo_from_velocity(p, v);
  const CMatrix q = oracle::nullspace_scm(snaps, r.symbols.symbols, taps, eps);
  const CVector a = oracle::steering(p.n_rx, 20.0);
  const CVector qa = q.lu().solve(CVector(a.conjugate()));
  const cplx denom = (a.transpose() * qa).value();
  const CVector ramp_c = oracle::ramp(p.n_subcarriers, eps).conjugate();
  CHECK(oracle::rel_err(upd.q, q) < 1e-9);
  for (int m = 0; m < p.n_symbols; ++m) {
    const CMatrix xb = oracle::pilot(r.symbols.symbols.col(m), taps);
    const CVector h = (xb.adjoint() * xb).inverse() * xb.adjoint() * ramp_c.asDiagonal() * snaps[m] * qa / denom;
    CHECK((upd.channels[0].col(m) - h).norm() < 1e-8 * h.norm());
  }
}

TEST_CASE("two-atom joint update separates the channels") {
  const auto p = preset_params("desk");
  const auto d = derive_quantities(p);
  const double v1 = 10.0, v2 = 10.0 + 2 * d.cfo_cell_velocity;
  const auto r = simulate(make(p, {{120.0, v1, -35.0, 15.0, {}}, {360.0, v2, -35.0, 15.0, {}}}));
  const auto upd = joint_channel_update(r.cube.snapshots(), r.symbols, p, {v1, v2}, -35.0);
  REQUIRE(upd.channels.size() == 2);
  const double ranges[2] = {120.0, 360.0}, vels[2] = {v1, v2};
  for (int k = 0; k < 2; ++k) {
    const auto map = periodogram(to_freq_slowtime(upd.channels[k], p.n_subcarriers), p, 1, 2);
    Eigen::Index row = 0, col = 0;
    map.power.topRows(map.cp_rows).maxCoeff(&row, &col);
    CHECK(map.range_m[row] == doctest::Approx(ranges[k]));
    CHECK(col == doctest::Approx(doppler_column(map, vels[k])));
  }
  CHECK_THROWS_AS(joint_channel_update(r.cube.snapshots(), r.symbols, p, {v1, v1}, -35.0), IllConditionedAtoms);
}

TEST_CASE("five-target omp at -35 deg") {
  const auto p = preset_params("desk");
  const auto d = derive_quantities(p);
  const auto& st = five_target_omp();
  REQUIRE(st.detected.size() == 3);
  CHECK(st.spectra.size() == 4);

  // first iteration locks onto the strongest (20 dB) target
  CHECK(std::abs(st.spectra[0].argmax_velocity - 10.0) < 0.5 * d.cfo_cell_velocity / 4.0);
  for (const auto& det : st.detected) CHECK(det.glrt_value > 0.3);
  CHECK(st.spectra.back().glrt_at_argmax < 0.3);

  const double wrap = 2 * d.max_velocity;
  std::vector<double> truth{10.0, 10.0 + 4 * wrap, 10.0 - 4 * wrap};
  for (double v : truth) {
    double best = 1e9;
    for (double c : st.atom_cfo_mps) best = std::min(best, std::abs(c - v));
    CHECK(best < d.max_velocity);
  }
  for (size_t k = 1; k < st.residue_energy.size(); ++k) CHECK(st.residue_energy[k] < st.residue_energy[k - 1]);
  for (const auto& det : st.detected) {
    CHECK(det.channel.rows() == d.n_taps);
    CHECK(det.channel.cols() == p.n_symbols);
  }
}

TEST_CASE("omp respects the sparsity cap") {
  const auto p = preset_params("desk");
  const auto r = simulate(five_target_scenario(p));
  OmpConfig cfg;
  cfg.p_max = 1;
  CHECK(omp_detect(r.cube.snapshots(), r.symbols, p, -35.0, cfg).detected.size() == 1);
  cfg.p_max = 0;
  CHECK_THROWS_AS(omp_detect(r.cube.snapshots(), r.symbols, p, -35.0, cfg), std::invalid_argument);
  CfoGridSpec bad;
  bad.oversample = 0;
  CHECK_THROWS_AS(cfo_spectrum(r.cube.snapshots(), r.symbols, p, -35.0, bad), ConfigError);
}
