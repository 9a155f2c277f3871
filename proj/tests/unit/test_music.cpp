#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "icisense/harness.hpp"
#include "icisense/music.hpp"
#include "oracles.hpp"

using namespace icisense;

namespace {

DataCube cube_for(const Scenario& s) { return synthesize(s, generate_symbols(s.params, symbol_seed(s.seed))); }

Scenario make(const OfdmParams& p, std::vector<Target> t, double noise = 1.0, std::uint64_t seed = 1) {
  Scenario s;
  s.params = p;
  s.targets = std::move(t);
  s.noise_power = noise;
  s.seed = seed;
  return s;
}

double nearest(const std::vector<double>& v, double x) {
  double best = 1e9;
  for (double a : v) best = std::min(best, std::abs(a - x));
  return best;
}

}  // namespace

TEST_CASE("noise-only covariance") {
  const auto p = preset_params("paper");
  const auto scm = build_scm(cube_for(make(p, {})));
  const double nm = double(p.n_subcarriers) * p.n_symbols;
  REQUIRE(nm >= 1e5);
  const CMatrix r = scm.r / nm;
  for (int i = 0; i < p.n_rx; ++i) {
    CHECK(r(i, i).real() == doctest::Approx(1.0).epsilon(0.05));
    for (int j = 0; j < p.n_rx; ++j)
      if (i != j) CHECK(std::abs(r(i, j)) < 0.05);
  }
  CHECK(estimate_source_count(scm) == 1);
}

TEST_CASE("covariance is hermitian and psd") {
  const auto s = five_target_scenario(preset_params("desk"));
  const auto scm = build_scm(cube_for(s));
  CHECK((scm.r - scm.r.adjoint()).cwiseAbs().maxCoeff() <= 1e-12 * scm.r.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(scm.r);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-9 * scm.r.trace().real());
}

TEST_CASE("single noiseless target gives a rank-one covariance") {
  const auto p = preset_params("desk");
  const auto scm = build_scm(cube_for(make(p, {{200.0, 30.0, 25.0, 10.0, {}}}, 0.0)));
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(scm.r);
  const auto ev = eig.eigenvalues();
  CHECK(ev(p.n_rx - 2) / ev(p.n_rx - 1) < 1e-10);
  CHECK(estimate_source_count(scm) == 1);

  const auto est = music_spectrum(scm, p, {}, 1);
  REQUIRE(est.angles_deg.size() == 1);
  CHECK(std::abs(est.angles_deg[0] - 25.0) <= 0.05);
  CHECK(std::all_of(est.spectrum.begin(), est.spectrum.end(), [](double f) { return f > 0.0; }));

  // noise-subspace projection of the true steering vector
  const CMatrix un = eig.eigenvectors().leftCols(p.n_rx - 1);
  const CVector a = oracle::steering(p.n_rx, 25.0);
  const double proj = (a.transpose() * un * un.adjoint() * a.conjugate())(0).real();
  CHECK(proj <= 1e-8 * p.n_rx);
}

TEST_CASE("covariance model for two separated targets") {
  auto p = preset_params("paper");
  p.n_subcarriers = 1024;
  const auto d = derive_quantities(p);
  // five Doppler bins apart
  const auto s = make(p, {{90.0, 10.0, -20.0, 10.0, {}}, {300.0, 10.0 + 5 * d.velocity_resolution, 30.0, 5.0, {}}});
  const auto scm = build_scm(cube_for(s));
  const CMatrix model = oracle::scm_model(s);
  CHECK((scm.r - model).norm() / model.norm() <= 0.1);
}

TEST_CASE("five-target angles") {
  const auto p = preset_params("desk");
  const auto s = five_target_scenario(p);
  const auto est = music_spectrum(build_scm(cube_for(s)), p, {}, 2);
  REQUIRE(est.angles_deg.size() == 2);
  CHECK(nearest(est.angles_deg, -35.0) <= 0.1 + 1e-9);
  CHECK(nearest(est.angles_deg, -25.0) <= 0.1 + 1e-9);
  CHECK(estimate_source_count(build_scm(cube_for(s))) == 2);
}

TEST_CASE("music resolves targets one degree apart") {
  const auto p = preset_params("desk");
  const auto s = make(p, {{150.0, 5.0, 10.0, 20.0, {}}, {400.0, -8.0, 11.0, 20.0, {}}});
  const auto scm = build_scm(cube_for(s));
  const auto est = music_spectrum(scm, p, {}, 2);
  REQUIRE(est.angles_deg.size() == 2);
  CHECK(nearest(est.angles_deg, 10.0) <= 0.2);
  CHECK(nearest(est.angles_deg, 11.0) <= 0.2);

  const auto bart = bartlett_spectrum(scm, p, est.grid_deg);
  int local_peaks = 0;
  for (int idx : pick_peaks(bart, 100))
    if (std::abs(est.grid_deg[idx] - 10.5) < 5.0) ++local_peaks;
  CHECK(local_peaks == 1);
}

TEST_CASE("music is invariant to scaling the data") {
  const auto p = preset_params("desk");
  const auto s = make(p, {{150.0, 5.0, -40.0, 5.0, {}}, {400.0, -8.0, 20.0, 0.0, {}}});
  DataCube cube = cube_for(s);
  const auto a = music_spectrum(build_scm(cube), p, {}, 2);
  for (auto& y : cube.antennas) y *= cplx(-3.0, 7.0);
  const auto b = music_spectrum(build_scm(cube), p, {}, 2);
  CHECK(a.angles_deg == b.angles_deg);
}

TEST_CASE("music argument checks") {
  const auto p = preset_params("desk");
  const auto scm = build_scm(cube_for(make(p, {})));
  CHECK_THROWS_AS(music_spectrum(scm, p, {}, 0), std::invalid_argument);
  CHECK_THROWS_AS(music_spectrum(scm, p, {}, p.n_rx), std::invalid_argument);
  // a narrow window around one source holds a single peak
  const auto noiseless = build_scm(cube_for(make(p, {{200.0, 0.0, 0.0, 10.0, {}}}, 0.0)));
  const auto est = music_spectrum(noiseless, p, {-1.0, 1.0, 0.1}, 2);
  CHECK(est.angles_deg.size() == 1);
  CHECK(est.fewer_peaks_than_requested);
}

TEST_CASE("source count for two strong sources") {
  const auto p = preset_params("desk");
  const auto s = make(p, {{150.0, 5.0, -40.0, 20.0, {}}, {400.0, -8.0, 20.0, 20.0, {}}});
  CHECK(estimate_source_count(build_scm(cube_for(s))) == 2);
}

TEST_CASE("peak picking") {
  const std::vector<double> v{0, 3, 1, 5, 5, 2, 4, 1};
  // the plateau at 5 is not a strict maximum
  CHECK(pick_peaks(v, 5) == std::vector<int>{6, 1});
  CHECK(pick_peaks(v, 1) == std::vector<int>{6});
  const AngleGrid g{-1.0, 1.0, 0.5};
  CHECK(g.points().size() == 4);
}
