#include "icisense/apes_omp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "icisense/fft.hpp"

namespace icisense {

namespace {

constexpr double kRidge = 1e-10;
constexpr double kMaxGramCondition = 1e12;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

// xi = F^H x / sqrt(N), so that Xbar[p, l] = xi[(p - l) mod N].
CVector pilot_kernel(const CVector& x) {
  const auto n = static_cast<int>(x.size());
  CVector xi(n);
  local_fft(n).backward(x, xi);
  return xi / static_cast<double>(n);
}

// Column l of Xbar: xi circularly delayed by l samples.
CVector shifted(const CVector& xi, int l) {
  const auto n = static_cast<int>(xi.size());
  CVector out(n);
  out.tail(n - l) = xi.head(n - l);
  out.head(l) = xi.tail(l);
  return out;
}

CMatrix hermitian_part(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }

CMatrix pilot_gram(const CVector& x, int n_taps) {
  const CMatrix xb = pilot_matrix(x, n_taps);
  return xb.adjoint() * xb;
}

// Xbar^H D^H(eps) Y column by column (L x nR).
CMatrix project_taps(const CVector& x, const CMatrix& y, const CVector& ramp_conj, int n_taps) {
  CMatrix b(n_taps, y.cols());
  for (Eigen::Index i = 0; i < y.cols(); ++i)
    b.col(i) = pilot_apply_adj(x, ramp_conj.cwiseProduct(y.col(i)), n_taps);
  return b;
}

struct GridPoint {
  double eps;
  int fft_index;  // position in the zero-padded FFT grid
};

// Grid in subcarrier units eps = k / oversample, ascending, restricted to span.
std::vector<GridPoint> cfo_grid(const OfdmParams& params, const CfoGridSpec& spec, int fft_len) {
  if (spec.oversample < 1) throw ConfigError("CFO grid oversample must be >= 1");
  const auto dq = derive_quantities(params);
  const double span = spec.span_mps > 0.0 ? spec.span_mps : dq.max_cfo_velocity;
  if (span > dq.max_cfo_velocity * (1.0 + 1e-12)) throw ConfigError("CFO span exceeds the fast-time unambiguous velocity");
  const int n = params.n_subcarriers;
  const int stride = fft_len / (spec.oversample * n);
  std::vector<GridPoint> out;
  for (int k = -fft_len / 2; k < fft_len / 2; k += stride) {
    const double eps = static_cast<double>(k) * n / fft_len;
    if (std::abs(velocity_from_cfo(params, eps)) <= span * (1.0 + 1e-12))
      out.push_back({eps, k < 0 ? k + fft_len : k});
  }
  if (out.empty()) throw ConfigError("CFO grid is empty");
  return out;
}

int fft_grid_length(const OfdmParams& params, const CfoGridSpec& spec) {
  return std::max(spec.oversample, 2) * params.n_subcarriers;
}

// Golden-section search for the maximum of f on [lo, hi]; NaN counts as -inf.
double golden_max(const std::function<double(double)>& f_raw, double lo, double hi, double tol) {
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  auto f = [&](double e) {
    const double j = f_raw(e);
    return std::isnan(j) ? -std::numeric_limits<double>::infinity() : j;
  };
  double x1 = hi - golden * (hi - lo), x2 = lo + golden * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > tol) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + golden * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - golden * (hi - lo);
      f1 = f(x1);
    }
  }
  return 0.5 * (lo + hi);
}

// Null-space SCM as a function of CFO for unit-modulus symbols.
// S(phi) = sum_{m,l} Z_{m,l}(phi)^H Z_{m,l}(phi), where Z is the DTFT of
// conj(Xbar_m[:, l]) .* Y_m. S has lag support |d| < N, so 2N samples of it
// fix the lag coefficients, which then give the search grid and any
// off-grid point.
class LagModel {
 public:
  LagModel(const std::vector<CMatrix>& residue, const SymbolGrid& symbols, const OfdmParams& params)
      : n_(params.n_subcarriers), nr_(static_cast<int>(residue.front().cols())) {
    const int l_taps = derive_quantities(params).n_taps;
    for (int i = 0; i < nr_; ++i)
      for (int j = i; j < nr_; ++j) pairs_.emplace_back(i, j);
    const int acc_len = 2 * n_;
    std::vector<Eigen::ArrayXcd> s(pairs_.size(), Eigen::ArrayXcd::Zero(acc_len));
    Fft& fft_acc = local_fft(acc_len);
    Eigen::MatrixXcd z(acc_len, nr_);
    CVector tmp(n_);
    for (size_t m = 0; m < residue.size(); ++m) {
      const CVector xi_conj = pilot_kernel(symbols.symbols.col(static_cast<Eigen::Index>(m))).conjugate();
      for (int l = 0; l < l_taps; ++l) {
        const CVector col = shifted(xi_conj, l);
        for (int i = 0; i < nr_; ++i) {
          tmp = col.cwiseProduct(residue[m].col(i));
          fft_acc.forward(tmp, z.col(i));
        }
        for (size_t k = 0; k < pairs_.size(); ++k)
          s[k] += z.col(pairs_[k].first).array().conjugate() * z.col(pairs_[k].second).array();
      }
    }
    lags_.assign(pairs_.size(), Eigen::ArrayXcd(2 * n_ - 1));
    CVector buf(acc_len);
    for (size_t k = 0; k < pairs_.size(); ++k) {
      fft_acc.backward(CVector(s[k].matrix()), buf);
      for (int d = -(n_ - 1); d <= n_ - 1; ++d) lags_[k](d + n_ - 1) = buf((d + acc_len) % acc_len) / double(acc_len);
    }
    r_ = residue_covariance(residue);
  }

  const CMatrix& r() const { return r_; }

  // Q at eps = index * N / fft_len; the grid FFT is computed once per length.
  CMatrix on_grid(int index, int fft_len) const {
    if (grid_len_ != fft_len) {
      grid_len_ = fft_len;
      grid_.assign(pairs_.size(), Eigen::ArrayXcd(fft_len));
      Fft& fft_grid = local_fft(fft_len);
      CVector padded(fft_len), out(fft_len);
      for (size_t k = 0; k < pairs_.size(); ++k) {
        padded.setZero();
        for (int d = -(n_ - 1); d <= n_ - 1; ++d) padded((d + fft_len) % fft_len) = lags_[k](d + n_ - 1);
        fft_grid.forward(padded, out);
        grid_[k] = out.array();
      }
    }
    return assemble([&](size_t k) { return grid_[k](index); });
  }

  CMatrix at(double eps) const {
    const double phi = 2.0 * kPi * eps / n_;
    Eigen::ArrayXcd e(2 * n_ - 1);
    for (int d = -(n_ - 1); d <= n_ - 1; ++d) e(d + n_ - 1) = std::polar(1.0, -phi * d);
    return assemble([&](size_t k) { return (lags_[k] * e).sum(); });
  }

 private:
  template <class F>
  CMatrix assemble(F&& value) const {
    CMatrix q = r_;
    for (size_t k = 0; k < pairs_.size(); ++k) {
      const auto [i, j] = pairs_[k];
      const cplx v = value(k);
      q(i, j) -= v;
      if (i != j) q(j, i) -= std::conj(v);
    }
    for (int i = 0; i < nr_; ++i) q(i, i) = q(i, i).real();
    return q;
  }

  int n_, nr_;
  std::vector<std::pair<int, int>> pairs_;
  std::vector<Eigen::ArrayXcd> lags_;
  CMatrix r_;
  mutable int grid_len_ = 0;
  mutable std::vector<Eigen::ArrayXcd> grid_;
};

// Shared tail of both spectrum engines: evaluate the objective on the grid,
// pick the argmax and optionally refine it.
CfoSpectrum scan(const OfdmParams& params, const CMatrix& r, const CVector& a, const std::vector<GridPoint>& grid,
                 double cell_eps, bool refine, const std::function<CMatrix(const GridPoint&)>& q_on_grid,
                 const std::function<CMatrix(double)>& q_at) {
  CfoSpectrum out;
  out.r = r;
  const double jr = apes_objective(r, a);
  int best = -1;
  for (size_t g = 0; g < grid.size(); ++g) {
    const CMatrix q = q_on_grid(grid[g]);
    const double j = apes_objective(q, a);
    out.velocity_mps.push_back(velocity_from_cfo(params, grid[g].eps));
    out.objective.push_back(j);
    if (std::isnan(j)) {
      ++out.skipped_points;
      out.glrt_norm.push_back(kNaN);
      continue;
    }
    out.glrt_norm.push_back(std::isnan(jr) ? 0.0 : std::clamp(1.0 - jr / j, 0.0, 1.0));
    if (best < 0 || j > out.objective[best]) best = static_cast<int>(g);
  }
  if (best < 0) {
    out.argmax_objective = kNaN;
    return out;
  }
  double eps_best = grid[best].eps;
  double j_best = out.objective[best];
  if (refine) {
    const double lo = std::max(eps_best - cell_eps, grid.front().eps);
    const double hi = std::min(eps_best + cell_eps, grid.back().eps);
    const double e = golden_max([&](double x) { return apes_objective(q_at(x), a); }, lo, hi, 1e-6 * cell_eps);
    const double j = apes_objective(q_at(e), a);
    if (j > j_best) {
      eps_best = e;
      j_best = j;
    }
  }
  out.argmax_velocity = velocity_from_cfo(params, eps_best);
  out.argmax_objective = j_best;
  out.q_at_argmax = q_at(eps_best);
  out.glrt_at_argmax = normalized_glrt(out.q_at_argmax, r, a);
  return out;
}

}  // namespace

CVector pilot_apply(const CVector& x, const CVector& v) {
  const auto n = static_cast<int>(x.size());
  Fft& fft = local_fft(n);
  CVector buf(n);
  fft.forward(v, buf);
  buf = buf.cwiseProduct(x);
  fft.backward(buf, buf);
  return buf / static_cast<double>(n);
}

CVector pilot_apply_adj(const CVector& x, const CVector& u, int n_taps) {
  const auto n = static_cast<int>(x.size());
  Fft& fft = local_fft(n);
  CVector buf(n);
  fft.forward(u, buf);
  buf = buf.cwiseProduct(x.conjugate());
  fft.backward(buf, buf);
  return buf.head(n_taps) / static_cast<double>(n);
}

CMatrix pilot_matrix(const CVector& x, int n_taps) {
  const CVector xi = pilot_kernel(x);
  CMatrix xb(x.size(), n_taps);
  for (int l = 0; l < n_taps; ++l) xb.col(l) = shifted(xi, l);
  return xb;
}

double cfo_from_velocity(const OfdmParams& params, double v) {
  return params.fc * derive_quantities(params).symbol_duration * doppler_from_velocity(v);
}

double velocity_from_cfo(const OfdmParams& params, double eps) {
  return velocity_from_doppler(eps / (params.fc * derive_quantities(params).symbol_duration));
}

CMatrix residue_covariance(const std::vector<CMatrix>& residue) {
  CMatrix r = CMatrix::Zero(residue.front().cols(), residue.front().cols());
  for (const auto& y : residue) r.noalias() += y.adjoint() * y;
  return hermitian_part(r);
}

CMatrix nullspace_scm(const std::vector<CMatrix>& residue, const SymbolGrid& symbols, const OfdmParams& params,
                      double cfo_velocity) {
  const int n = params.n_subcarriers, l = derive_quantities(params).n_taps;
  const CVector ramp_conj = ici_ramp_subcarriers(n, cfo_from_velocity(params, cfo_velocity)).conjugate();
  const bool unit = symbols.unit_modulus();
  CMatrix q = residue_covariance(residue);
  for (size_t m = 0; m < residue.size(); ++m) {
    const CVector x = symbols.symbols.col(static_cast<Eigen::Index>(m));
    const CMatrix b = project_taps(x, residue[m], ramp_conj, l);
    if (unit) {
      q.noalias() -= b.adjoint() * b;
    } else {
      Eigen::LLT<CMatrix> llt(pilot_gram(x, l));
      q.noalias() -= b.adjoint() * llt.solve(b);
    }
  }
  return hermitian_part(q);
}

double apes_objective(const CMatrix& q, const CVector& a, double ridge) {
  const auto nr = q.rows();
  const double tr = q.trace().real();
  if (!(tr > 0.0)) return kNaN;
  const CMatrix qr = q + CMatrix::Identity(nr, nr) * (ridge * tr / static_cast<double>(nr));
  Eigen::LDLT<CMatrix> ldlt(qr);
  if (ldlt.info() != Eigen::Success) return kNaN;
  // a^H (Q*)^-1 a = conj(a^T Q^-1 a*), real for Hermitian Q.
  const CVector y = ldlt.solve(a.conjugate());
  const double j = (a.transpose() * y).value().real();
  return std::isfinite(j) && j > 0.0 ? j : kNaN;
}

double normalized_glrt(const CMatrix& q, const CMatrix& r, const CVector& a) {
  const double jr = apes_objective(r, a);
  if (std::isnan(jr)) return 0.0;
  const double jq = apes_objective(q, a);
  if (std::isnan(jq)) return 1.0;
  return std::clamp(1.0 - jr / jq, 0.0, 1.0);
}

double glrt_statistic(const CMatrix& q, const CMatrix& r, const CVector& a, double noise_var) {
  return (1.0 / apes_objective(r, a) - 1.0 / apes_objective(q, a)) / noise_var;
}

CfoSpectrum cfo_spectrum_direct(const std::vector<CMatrix>& residue, const SymbolGrid& symbols,
                                const OfdmParams& params, double angle_deg, const CfoGridSpec& spec) {
  const int fft_len = fft_grid_length(params, spec);
  const auto grid = cfo_grid(params, spec, fft_len);
  const CVector a = array_steering(params.n_rx, angle_deg, params.d_over_lambda);
  auto q_at = [&](double eps) { return nullspace_scm(residue, symbols, params, velocity_from_cfo(params, eps)); };
  return scan(params, residue_covariance(residue), a, grid, 1.0 / spec.oversample, spec.refine,
              [&](const GridPoint& g) { return q_at(g.eps); }, q_at);
}

CfoSpectrum cfo_spectrum(const std::vector<CMatrix>& residue, const SymbolGrid& symbols, const OfdmParams& params,
                         double angle_deg, const CfoGridSpec& spec) {
  if (!symbols.unit_modulus()) return cfo_spectrum_direct(residue, symbols, params, angle_deg, spec);

  const auto nr = static_cast<int>(residue.front().cols());
  const int fft_len = fft_grid_length(params, spec);
  const auto grid = cfo_grid(params, spec, fft_len);
  const CVector a = array_steering(nr, angle_deg, params.d_over_lambda);
  const LagModel lm(residue, symbols, params);
  auto q_on_grid = [&](const GridPoint& g) { return lm.on_grid(g.fft_index, fft_len); };
  auto q_at = [&](double eps) { return lm.at(eps); };
  return scan(params, lm.r(), a, grid, 1.0 / spec.oversample, spec.refine, q_on_grid, q_at);
}

JointUpdate joint_channel_update(const std::vector<CMatrix>& snapshots, const SymbolGrid& symbols,
                                 const OfdmParams& params, const std::vector<double>& cfo_velocities,
                                 double angle_deg) {
  const int n = params.n_subcarriers, l_taps = derive_quantities(params).n_taps;
  const auto p_count = static_cast<int>(cfo_velocities.size());
  const auto m_count = static_cast<int>(snapshots.size());
  const auto nr = static_cast<int>(snapshots.front().cols());
  if (p_count < 1) throw std::invalid_argument("joint_channel_update: no atoms");
  if (l_taps * p_count > n) throw std::invalid_argument("joint_channel_update: L * P exceeds N");
  const int dim = l_taps * p_count;

  std::vector<double> eps(p_count);
  std::vector<CVector> ramps(p_count);
  for (int p = 0; p < p_count; ++p) {
    eps[p] = cfo_from_velocity(params, cfo_velocities[p]);
    ramps[p] = ici_ramp_subcarriers(n, eps[p]);
  }
  const CVector a = array_steering(nr, angle_deg, params.d_over_lambda);

  const bool unit = symbols.unit_modulus();
  std::vector<CMatrix> w(m_count);  // G^-1 B per symbol
  CMatrix q = CMatrix::Zero(nr, nr);
  for (int m = 0; m < m_count; ++m) {
    const CVector x = symbols.symbols.col(m);
    const CVector xi = pilot_kernel(x);
    CMatrix g(dim, dim);
    const CMatrix diag_block = unit ? CMatrix(CMatrix::Identity(l_taps, l_taps)) : pilot_gram(x, l_taps);
    for (int p = 0; p < p_count; ++p) {
      g.block(p * l_taps, p * l_taps, l_taps, l_taps) = diag_block;
      for (int pq = p + 1; pq < p_count; ++pq) {
        // Xbar^H D(eps_q - eps_p) Xbar, one column at a time.
        const CVector ramp = ici_ramp_subcarriers(n, eps[pq] - eps[p]);
        CMatrix blk(l_taps, l_taps);
        for (int l = 0; l < l_taps; ++l) blk.col(l) = pilot_apply_adj(x, ramp.cwiseProduct(shifted(xi, l)), l_taps);
        g.block(p * l_taps, pq * l_taps, l_taps, l_taps) = blk;
        g.block(pq * l_taps, p * l_taps, l_taps, l_taps) = blk.adjoint();
      }
    }
    CMatrix b(dim, nr);
    for (int p = 0; p < p_count; ++p)
      b.middleRows(p * l_taps, l_taps) = project_taps(x, snapshots[m], ramps[p].conjugate(), l_taps);

    Eigen::LLT<CMatrix> llt(g);
    if (llt.info() != Eigen::Success) throw IllConditionedAtoms("atom Gram is not positive definite");
    const Eigen::VectorXd d = CMatrix(llt.matrixL()).diagonal().real();
    const double cond = std::pow(d.maxCoeff() / d.minCoeff(), 2);
    if (!(cond <= kMaxGramCondition)) throw IllConditionedAtoms("atom Gram condition number exceeds 1e12");
    w[m] = llt.solve(b);
    q.noalias() += snapshots[m].adjoint() * snapshots[m] - b.adjoint() * w[m];
  }
  q = hermitian_part(q);

  const double tr = q.trace().real();
  const CMatrix qr = q + CMatrix::Identity(nr, nr) * (kRidge * std::max(tr, 0.0) / nr);
  const CVector y = Eigen::LDLT<CMatrix>(qr).solve(a.conjugate());
  const cplx denom = (a.transpose() * y).value();

  JointUpdate out;
  out.q = q;
  out.channels.assign(p_count, CMatrix(l_taps, m_count));
  out.residue.resize(m_count);
  for (int m = 0; m < m_count; ++m) {
    const CVector h = w[m] * y / denom;
    const CVector x = symbols.symbols.col(m);
    CVector fit = CVector::Zero(n);
    for (int p = 0; p < p_count; ++p) {
      out.channels[p].col(m) = h.segment(p * l_taps, l_taps);
      fit += ramps[p].cwiseProduct(pilot_apply(x, h.segment(p * l_taps, l_taps)));
    }
    out.residue[m] = snapshots[m] - fit * a.transpose();
  }
  return out;
}

namespace {

// Cyclic re-estimation of the accepted CFOs: each atom is re-fitted against
// the residue with its own contribution restored, within one grid step of
// its current value, and the channels are then re-solved jointly.
JointUpdate refine_atoms(const std::vector<CMatrix>& snapshots, const SymbolGrid& symbols, const OfdmParams& params,
                         double angle_deg, const OmpConfig& config, std::vector<double>& cfo_mps, JointUpdate upd) {
  const int n = params.n_subcarriers;
  const auto nr = static_cast<int>(snapshots.front().cols());
  const CVector a = array_steering(nr, angle_deg, params.d_over_lambda);
  const double step = 1.0 / std::max(config.grid.oversample, 1);
  const double eps_lim = cfo_from_velocity(params, derive_quantities(params).max_cfo_velocity);
  for (int cycle = 0; cycle < config.refine_cycles; ++cycle) {
    std::vector<double> next = cfo_mps;
    for (size_t p = 0; p < cfo_mps.size(); ++p) {
      const double eps = cfo_from_velocity(params, cfo_mps[p]);
      const CVector ramp = ici_ramp_subcarriers(n, eps);
      std::vector<CMatrix> partial(upd.residue.size());
      for (size_t m = 0; m < partial.size(); ++m) {
        const CVector fit = ramp.cwiseProduct(
            pilot_apply(symbols.symbols.col(static_cast<Eigen::Index>(m)), upd.channels[p].col(static_cast<Eigen::Index>(m))));
        partial[m] = upd.residue[m] + fit * a.transpose();
      }
      const double lo = std::max(eps - step, -eps_lim), hi = std::min(eps + step, eps_lim);
      std::function<double(double)> objective;
      std::optional<LagModel> lm;
      if (symbols.unit_modulus()) {
        lm.emplace(partial, symbols, params);
        objective = [&](double e) { return apes_objective(lm->at(e), a); };
      } else {
        objective = [&](double e) {
          return apes_objective(nullspace_scm(partial, symbols, params, velocity_from_cfo(params, e)), a);
        };
      }
      const double e = golden_max(objective, lo, hi, 1e-6 * step);
      if (objective(e) > objective(eps)) next[p] = velocity_from_cfo(params, e);
    }
    double moved = 0.0;
    for (size_t p = 0; p < next.size(); ++p)
      moved = std::max(moved, std::abs(cfo_from_velocity(params, next[p]) - cfo_from_velocity(params, cfo_mps[p])));
    upd = joint_channel_update(snapshots, symbols, params, next, angle_deg);
    cfo_mps = std::move(next);
    if (moved < 1e-4) break;
  }
  return upd;
}

}  // namespace

OmpState omp_detect(const std::vector<CMatrix>& snapshots, const SymbolGrid& symbols, const OfdmParams& params,
                    double angle_deg, const OmpConfig& config) {
  const auto dq = derive_quantities(params);
  if (config.p_max < 1) throw std::invalid_argument("omp_detect: P_max must be at least 1");
  // The stacked atoms need L * P <= N.
  const int p_max = std::min(config.p_max, params.n_subcarriers / dq.n_taps);

  OmpState state;
  state.angle_deg = angle_deg;
  state.residue = snapshots;
  std::vector<double> glrt_values;
  while (static_cast<int>(state.atom_cfo_mps.size()) < p_max) {
    CfoSpectrum spec = cfo_spectrum(state.residue, symbols, params, angle_deg, config.grid);
    state.residue_energy.push_back(spec.r.trace().real());
    const double stat = spec.glrt_at_argmax;
    const double v = spec.argmax_velocity;
    const bool valid = !std::isnan(spec.argmax_objective);
    state.spectra.push_back(std::move(spec));
    if (!valid || !(stat > config.threshold)) break;

    state.atom_cfo_mps.push_back(v);
    JointUpdate upd;
    try {
      upd = joint_channel_update(snapshots, symbols, params, state.atom_cfo_mps, angle_deg);
    } catch (const IllConditionedAtoms& e) {
      state.atom_cfo_mps.pop_back();
      state.warning = e.what();
      break;
    }
    glrt_values.push_back(stat);
    if (state.atom_cfo_mps.size() > 1 && config.refine_cycles > 0) {
      try {
        upd = refine_atoms(snapshots, symbols, params, angle_deg, config, state.atom_cfo_mps, std::move(upd));
      } catch (const IllConditionedAtoms& e) {
        state.warning = e.what();
      }
    }
    state.residue = std::move(upd.residue);
    state.detected.clear();
    for (size_t p = 0; p < state.atom_cfo_mps.size(); ++p)
      state.detected.push_back({state.atom_cfo_mps[p], std::move(upd.channels[p]), glrt_values[p], static_cast<int>(p)});
  }
  return state;
}

}  // namespace icisense
