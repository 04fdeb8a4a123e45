#include "spdecomp/em.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "spdecomp/errors.hpp"
#include "spdecomp/parallel.hpp"

namespace spdecomp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

// Symmetric PSD square root; eigenvalues below zero are clamped (they can
// only arise from roundoff — the M-step produces averages of PSD terms).
Matrix psd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) {
    throw NumericError("eigendecomposition of M failed");
  }
  Vector roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() *
         es.eigenvectors().transpose();
}

void check_parameters(const Matrix& m, Index K, double sigma2) {
  if (m.rows() != K || m.cols() != K) {
    throw NumericError("M has shape " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", expected K=" +
                       std::to_string(K));
  }
  if (!(sigma2 > 0) || !std::isfinite(sigma2)) {
    throw NumericError("invalid parameter: sigma2 must be positive");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const double floor = -1e-10 * std::max(m.trace(), 0.0) - 1e-300;
  if (es.eigenvalues().minCoeff() < floor) {
    throw NumericError("invalid parameter: M is not nonnegative-definite");
  }
}

// Cholesky of T = sigma2 I + R A R for one patient (A sliced to KxK).
Eigen::LLT<Matrix> factor_T(const Matrix& r, const PatientStats& s, Index K,
                            double sigma2) {
  Matrix t = r * s.A.topLeftCorner(K, K) * r;
  t.diagonal().array() += sigma2;
  Eigen::LLT<Matrix> llt(t);
  if (llt.info() != Eigen::Success) {
    // T is sigma2 I + PSD in exact arithmetic; a tiny relative ridge heals
    // roundoff-induced indefiniteness.
    t.diagonal().array() += 1e-14 * t.trace() / static_cast<double>(K);
    llt.compute(t);
    if (llt.info() != Eigen::Success) {
      throw NumericError("Cholesky factorization of the patient system failed");
    }
  }
  return llt;
}

double patient_loglik(const Eigen::LLT<Matrix>& llt, const Matrix& r,
                      const PatientStats& s, Index K, double sigma2) {
  const double nj = static_cast<double>(s.n);
  const Vector u = r * s.b.head(K);
  const double logdet_t =
      2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double quad = (s.c - u.dot(llt.solve(u))) / sigma2;
  return -0.5 * (nj * kLog2Pi + (nj - static_cast<double>(K)) *
                                    std::log(sigma2) +
                 logdet_t + quad);
}

struct ExpectationPass {
  double loglik = 0;
  Matrix sum_ww_Q;   // sum_j (w_j w_j' + Q_j)
  Vector bw;         // per-patient b_j' w_j, for the sigma2 update
};

ExpectationPass e_step(const FitData& data, Index K, const Matrix& m,
                       double sigma2) {
  const Matrix r = psd_sqrt(m);
  ExpectationPass out;
  out.sum_ww_Q = Matrix::Zero(K, K);
  out.bw.resize(data.N);
  for (Index j = 0; j < data.N; ++j) {
    const PatientStats& s = data.stats[static_cast<size_t>(j)];
    const Eigen::LLT<Matrix> llt = factor_T(r, s, K, sigma2);
    out.loglik += patient_loglik(llt, r, s, K, sigma2);
    const Matrix tinv_r = llt.solve(r);             // T^{-1} R
    const Vector w = r * (tinv_r * s.b.head(K));    // R T^{-1} R b
    out.sum_ww_Q.noalias() += w * w.transpose();
    out.sum_ww_Q.noalias() += sigma2 * (r * tinv_r);  // Q_j
    out.bw(j) = s.b.head(K).dot(w);
  }
  out.sum_ww_Q = (0.5 * (out.sum_ww_Q + out.sum_ww_Q.transpose())).eval();
  return out;
}

}  // namespace

FitData prepare_fit_data(std::span<const DetrendedPatient> patients,
                         const BasisSet& basis, Index K_cap, int threads) {
  if (patients.empty()) throw DataError("no patients to fit");
  if (K_cap == 0) K_cap = basis.kmax;
  if (K_cap < 1 || K_cap > basis.kmax) {
    throw DataError("K_cap must lie in [1, kmax]");
  }
  const Matrix f = basis.domain_matrix(K_cap);
  FitData data;
  data.K_cap = K_cap;
  data.N = static_cast<Index>(patients.size());
  data.stats.resize(patients.size());
  parallel_for(data.N, threads, [&](Index j) {
    const DetrendedPatient& p = patients[static_cast<size_t>(j)];
    if (p.n_obs() == 0) {
      throw DataError("patient '" + p.id + "' has no observations");
    }
    PatientStats s;
    s.n = p.n_obs();
    Matrix fj(s.n, K_cap);
    for (Index i = 0; i < s.n; ++i) {
      const Index row = p.indices[static_cast<size_t>(i)];
      if (row < 0 || row >= basis.n()) {
        throw DataError("patient '" + p.id +
                        "' references a location outside the domain");
      }
      fj.row(i) = f.row(row);
    }
    s.A.noalias() = fj.transpose() * fj;
    s.b.noalias() = fj.transpose() * p.z_tilde;
    s.c = p.z_tilde.squaredNorm();
    data.stats[static_cast<size_t>(j)] = std::move(s);
  });
  double sum_c = 0;
  for (const PatientStats& s : data.stats) {
    data.total_obs += static_cast<double>(s.n);
    sum_c += s.c;
  }
  data.pooled_var = sum_c / data.total_obs;
  return data;
}

double log_likelihood(const FitData& data, Index K, const Matrix& m,
                      double sigma2) {
  if (K < 1 || K > data.K_cap) throw DataError("K out of range");
  check_parameters(m, K, sigma2);
  const Matrix r = psd_sqrt(m);
  double ll = 0;
  for (const PatientStats& s : data.stats) {
    const Eigen::LLT<Matrix> llt = factor_T(r, s, K, sigma2);
    ll += patient_loglik(llt, r, s, K, sigma2);
  }
  return ll;
}

Index model_df(Index K, Index N) {
  if (K <= N) return K * (K + 1) / 2 + 1;
  return K * N + 1 - N * (N - 1) / 2;
}

double aic_value(double loglik, Index df) {
  return -2.0 * loglik + 2.0 * static_cast<double>(df);
}

ModelFit em_fit(const FitData& data, Index K, const EmOptions& options,
                EmPath* path, const Matrix* M_init, const double* sigma2_init) {
  if (K < 1 || K > data.K_cap) {
    throw DataError("K must lie in [1, K_cap] = [1, " +
                    std::to_string(data.K_cap) + "]; got " + std::to_string(K));
  }
  if (!(data.pooled_var > 0)) {
    throw NumericError(
        "all detrended intensities are zero; noise variance is not "
        "identifiable");
  }

  // Sum of A_j once: the sigma2 update needs only tr(A_j M) summed over j.
  Matrix a_sum = Matrix::Zero(K, K);
  for (const PatientStats& s : data.stats) a_sum += s.A.topLeftCorner(K, K);

  Matrix m = M_init ? *M_init
                    : Matrix((0.5 * data.pooled_var / static_cast<double>(K)) *
                             Matrix::Identity(K, K));
  double sigma2 = sigma2_init ? *sigma2_init : 0.5 * data.pooled_var;
  check_parameters(m, K, sigma2);

  const double sigma2_floor = 1e-12 * data.pooled_var;
  bool clamped = false;
  double ll_prev = 0;
  bool have_prev = false;
  int iterations = 0;
  bool converged = false;
  double ll_final = 0;

  // The loop head evaluates the log-likelihood at the current iterate, so the
  // path gets one entry per iterate: index i = after i parameter updates.
  auto record = [&](double ll, const Matrix& mm) {
    if (!path) return;
    path->logliks.push_back(ll);
    Eigen::SelfAdjointEigenSolver<Matrix> es(mm, Eigen::EigenvaluesOnly);
    path->min_eig_M.push_back(es.eigenvalues().minCoeff());
    path->asymmetry_M.push_back((mm - mm.transpose()).cwiseAbs().maxCoeff());
  };

  while (true) {
    ExpectationPass e = e_step(data, K, m, sigma2);
    record(e.loglik, m);
    if (have_prev &&
        std::abs(e.loglik - ll_prev) < options.tol * (1.0 + std::abs(ll_prev))) {
      converged = true;
      ll_final = e.loglik;
      break;
    }
    if (iterations >= options.max_iter) {
      ll_final = e.loglik;
      break;
    }
    ll_prev = e.loglik;
    have_prev = true;

    // M-step (the sigma2 update uses the pooled new M, as specified).
    m = e.sum_ww_Q / static_cast<double>(data.N);
    double rss = 0;
    for (Index j = 0; j < data.N; ++j) {
      rss += data.stats[static_cast<size_t>(j)].c - 2.0 * e.bw(j);
    }
    rss += a_sum.cwiseProduct(m).sum();
    sigma2 = rss / data.total_obs;
    if (!(sigma2 > 0)) {
      sigma2 = sigma2_floor;
      clamped = true;
    }
    ++iterations;
  }

  ModelFit fit;
  fit.K = K;
  fit.M = std::move(m);
  fit.sigma2 = sigma2;
  fit.loglik = ll_final;
  fit.N = data.N;
  fit.df = model_df(K, data.N);
  fit.aic = aic_value(ll_final, fit.df);
  fit.iterations = iterations;
  fit.converged = converged && !clamped;
  return fit;
}

ModelFit em_fit(std::span<const DetrendedPatient> patients,
                const BasisSet& basis, Index K, const EmOptions& options,
                EmPath* path) {
  const FitData data = prepare_fit_data(patients, basis, K);
  return em_fit(data, K, options, path);
}

std::vector<Index> ladder_candidates(int d, Index kmax) {
  std::vector<Index> out{static_cast<Index>(d + 1)};
  for (Index v = kmax; v > d + 1; v = (v + 1) / 2) out.push_back(v);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

ModelFit fit_candidate(const FitData& data, Index K, const SelectOptions& opt,
                       const std::map<Index, ModelFit>& done) {
  const Matrix* m_init = nullptr;
  const double* s2_init = nullptr;
  Matrix m_pad;
  double s2_prev = 0;
  if (opt.warm_start) {
    // Warm start from the largest already-fitted K below this one.
    auto it = done.lower_bound(K);
    if (it != done.begin()) {
      --it;
      const ModelFit& prev = it->second;
      s2_prev = prev.sigma2;
      m_pad = Matrix::Zero(K, K);
      m_pad.topLeftCorner(prev.K, prev.K) = prev.M;
      for (Index i = prev.K; i < K; ++i) m_pad(i, i) = 0.5 * prev.sigma2;
      m_init = &m_pad;
      s2_init = &s2_prev;
    }
  }
  return em_fit(data, K, opt.em, nullptr, m_init, s2_init);
}

}  // namespace

SelectResult select_K(const FitData& data, int d, const SelectOptions& opt) {
  const Index kmin = d + 1;
  const Index kmax = data.K_cap;
  if (kmax < kmin) throw DataError("K_cap is below d+1");

  std::vector<Index> grid;
  bool refine = false;
  if (!opt.candidates.empty()) {
    grid = opt.candidates;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    for (Index k : grid) {
      if (k < kmin || k > kmax) {
        throw DataError("candidate K=" + std::to_string(k) +
                        " outside [d+1, kmax]");
      }
    }
  } else if (opt.mode == ScanMode::full) {
    for (Index k = kmin; k <= kmax; ++k) grid.push_back(k);
  } else {
    grid = ladder_candidates(d, kmax);
    refine = true;
  }
  if (grid.empty()) throw DataError("empty candidate list");

  std::map<Index, ModelFit> fits;
  for (Index k : grid) fits.emplace(k, fit_candidate(data, k, opt, fits));

  auto argmin = [&]() {
    Index best = fits.begin()->first;
    double best_aic = fits.begin()->second.aic;
    for (const auto& [k, f] : fits) {
      if (f.aic < best_aic) {
        best = k;
        best_aic = f.aic;
      }
    }
    return best;
  };

  if (refine) {
    while (true) {
      const Index kb = argmin();
      std::vector<Index> next;
      auto it = fits.find(kb);
      if (it != fits.begin()) {
        const Index lo = std::prev(it)->first;
        if (kb - lo >= 2) next.push_back(lo + (kb - lo) / 2);
      }
      if (std::next(it) != fits.end()) {
        const Index hi = std::next(it)->first;
        if (hi - kb >= 2) next.push_back(kb + (hi - kb) / 2);
      }
      std::erase_if(next, [&](Index k) { return fits.count(k) > 0; });
      if (next.empty()) break;
      for (Index k : next) fits.emplace(k, fit_candidate(data, k, opt, fits));
    }
  }

  SelectResult result;
  result.K_star = argmin();
  result.best = fits.at(result.K_star);
  for (const auto& [k, f] : fits) {
    result.diagnostics.push_back(
        {k, f.loglik, f.df, f.aic, f.iterations, f.converged});
  }
  return result;
}

SelectResult select_K(std::span<const DetrendedPatient> patients,
                      const BasisSet& basis, const SelectOptions& opt) {
  const FitData data = prepare_fit_data(patients, basis, basis.kmax);
  return select_K(data, basis.dim, opt);
}

}  // namespace spdecomp
