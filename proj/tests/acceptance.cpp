// Acceptance harness: each criterion prints one line
//   criterion N: PASS — detail (X.Y s)
// and the process exits 0 only if every requested criterion passes.
// Tolerances and budgets are pinned in-code next to each criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "spdecomp/basis.hpp"
#include "spdecomp/domain.hpp"
#include "spdecomp/em.hpp"
#include "spdecomp/features.hpp"
#include "spdecomp/io.hpp"
#include "spdecomp/simulate.hpp"

using namespace spdecomp;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string pct(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

// Dense marginal log-likelihood straight from the model definition,
// Sigma_j = sigma2 I + F_j M F_j', used as the n x n oracle.
double dense_loglik(const std::vector<DetrendedPatient>& patients,
                    const BasisSet& basis, const Matrix& m, double sigma2) {
  const Index k = m.rows();
  const Matrix f = basis.domain_matrix(k);
  double ll = 0;
  for (const auto& p : patients) {
    const Index nj = p.n_obs();
    Matrix fj(nj, k);
    for (Index i = 0; i < nj; ++i) {
      fj.row(i) = f.row(p.indices[static_cast<size_t>(i)]);
    }
    Matrix cov = fj * m * fj.transpose();
    cov.diagonal().array() += sigma2;
    const Eigen::LLT<Matrix> llt(cov);
    const Vector alpha = llt.solve(p.z_tilde);
    double logdet = 0;
    for (Index i = 0; i < nj; ++i) {
      logdet += 2.0 * std::log(llt.matrixL()(i, i));
    }
    ll += -0.5 * (static_cast<double>(nj) * kLog2Pi + logdet +
                  p.z_tilde.dot(alpha));
  }
  return ll;
}

// Nelder-Mead minimizer (standard reflection/expansion/contraction/shrink),
// used only as an independent optimization oracle for criterion 3.
Vector nelder_mead(const std::function<double(const Vector&)>& f, Vector x0,
                   double step, int max_iter, double ftol) {
  const Index n = x0.size();
  std::vector<Vector> xs(static_cast<size_t>(n + 1), x0);
  std::vector<double> fs(static_cast<size_t>(n + 1));
  for (Index i = 0; i < n; ++i) xs[static_cast<size_t>(i + 1)](i) += step;
  for (size_t i = 0; i < xs.size(); ++i) fs[i] = f(xs[i]);

  for (int it = 0; it < max_iter; ++it) {
    std::vector<size_t> order(xs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return fs[a] < fs[b]; });
    const size_t best = order.front(), worst = order.back();
    const size_t second_worst = order[order.size() - 2];
    if (std::abs(fs[worst] - fs[best]) <=
        ftol * (1.0 + std::abs(fs[best]))) {
      break;
    }

    Vector centroid = Vector::Zero(n);
    for (size_t i : order) {
      if (i != worst) centroid += xs[i];
    }
    centroid /= static_cast<double>(n);

    const Vector refl = centroid + (centroid - xs[worst]);
    const double f_refl = f(refl);
    if (f_refl < fs[best]) {
      const Vector exp_pt = centroid + 2.0 * (centroid - xs[worst]);
      const double f_exp = f(exp_pt);
      if (f_exp < f_refl) {
        xs[worst] = exp_pt;
        fs[worst] = f_exp;
      } else {
        xs[worst] = refl;
        fs[worst] = f_refl;
      }
    } else if (f_refl < fs[second_worst]) {
      xs[worst] = refl;
      fs[worst] = f_refl;
    } else {
      const Vector contr = centroid + 0.5 * (xs[worst] - centroid);
      const double f_contr = f(contr);
      if (f_contr < fs[worst]) {
        xs[worst] = contr;
        fs[worst] = f_contr;
      } else {
        for (size_t i : order) {
          if (i == best) continue;
          xs[i] = xs[best] + 0.5 * (xs[i] - xs[best]);
          fs[i] = f(xs[i]);
        }
      }
    }
  }
  size_t best = 0;
  for (size_t i = 1; i < fs.size(); ++i) {
    if (fs[i] < fs[best]) best = i;
  }
  return xs[best];
}

// ---------------------------------------------------------------------------
// Criterion 1: basis orthonormality / poly-orthogonality / descending
// eigenvalues / interpolation identity, 20 x 2D (n=200) + 5 x 3D (n=300),
// everything to 1e-8, under 60 s.
// ---------------------------------------------------------------------------
bool criterion_1(std::string& detail) {
  constexpr double kTol = 1e-8;
  std::mt19937_64 rng(101);
  double worst_gram = 0, worst_poly = 0, worst_interp = 0;
  bool ordered = true;

  auto check_domain = [&](int d, Index n) {
    const Domain dom = testutil::random_domain(n, d, rng);
    const BasisSet basis = build_basis(dom);
    const Index kmax = basis.kmax;

    const Matrix f = basis.domain_matrix(kmax);
    worst_gram = std::max(
        worst_gram, (f.transpose() * f - Matrix::Identity(kmax, kmax))
                        .cwiseAbs()
                        .maxCoeff());

    Matrix x(n, d + 1);
    x.col(0).setOnes();
    x.rightCols(d) = dom.locations;
    worst_poly = std::max(worst_poly, (x.transpose() *
                                       f.rightCols(basis.n_eig()))
                                          .cwiseAbs()
                                          .maxCoeff());

    for (Index i = 1; i < basis.alphas.size(); ++i) {
      if (basis.alphas(i) > basis.alphas(i - 1)) ordered = false;
      if (basis.alphas(i) <= 0) ordered = false;
    }

    // Kernel-formula evaluation at the domain points must reproduce the
    // stored eigenvectors (interpolation identity), without the lookup
    // shortcut.
    const Matrix f_eval = basis.matrix_at(dom.locations, kmax, false);
    worst_interp =
        std::max(worst_interp, (f_eval - f).cwiseAbs().maxCoeff());
  };

  for (int i = 0; i < 20; ++i) check_domain(2, 200);
  for (int i = 0; i < 5; ++i) check_domain(3, 300);

  std::ostringstream ss;
  ss << "max |F'F-I| " << fmt(worst_gram) << ", |X'S| " << fmt(worst_poly)
     << ", interp " << fmt(worst_interp) << ", alphas "
     << (ordered ? "descending" : "OUT OF ORDER") << " (tol 1e-8)";
  detail = ss.str();
  return ordered && worst_gram < kTol && worst_poly < kTol &&
         worst_interp < kTol;
}

// ---------------------------------------------------------------------------
// Criterion 2: EM log-likelihood ascent within -1e-8 relative slack and
// symmetric PSD M at every iteration, 20 random instances with N in [3,10],
// n in [20,100], K in [3,8], under 60 s.
// ---------------------------------------------------------------------------
bool criterion_2(std::string& detail) {
  std::mt19937_64 rng(202);
  double worst_drop = 0;       // most negative slack-normalized loglik step
  double worst_eig = 0;        // most negative eigenvalue of any iterate
  double worst_asym = 0;
  int iterations = 0;

  for (int inst = 0; inst < 20; ++inst) {
    const Index N = 3 + static_cast<Index>(rng() % 8);       // [3, 10]
    const Index n = 20 + static_cast<Index>(rng() % 81);     // [20, 100]
    const Index K = 3 + static_cast<Index>(rng() % 6);       // [3, 8]

    const Domain dom = testutil::random_domain(n, 2, rng);
    const BasisSet basis = build_basis(dom, std::min<Index>(n, K + 4));
    const Matrix m_true = testutil::random_psd(K, 4.0, rng);
    const auto patients = testutil::model_patients(basis, N, m_true, 1.0, rng);

    EmOptions opt;
    opt.tol = 1e-10;
    opt.max_iter = 300;
    opt.record_path = true;
    EmPath path;
    em_fit(patients, basis, K, opt, &path);

    for (size_t i = 1; i < path.logliks.size(); ++i) {
      const double slack = 1.0 + std::abs(path.logliks[i - 1]);
      const double step = (path.logliks[i] - path.logliks[i - 1]) / slack;
      worst_drop = std::min(worst_drop, step);
    }
    for (size_t i = 0; i < path.min_eig_M.size(); ++i) {
      worst_eig = std::min(worst_eig, path.min_eig_M[i]);
      worst_asym = std::max(worst_asym, path.asymmetry_M[i]);
    }
    iterations += static_cast<int>(path.logliks.size()) - 1;
  }

  std::ostringstream ss;
  ss << iterations << " iterations; worst relative loglik step "
     << fmt(worst_drop) << " (slack -1e-8), min eig " << fmt(worst_eig)
     << ", max asymmetry " << fmt(worst_asym);
  detail = ss.str();
  return worst_drop >= -1e-8 && worst_eig >= -1e-8 && worst_asym == 0.0;
}

// ---------------------------------------------------------------------------
// Criterion 3: on a fixed tiny instance (N=3, n=5, K=2) the EM fixed point
// is within 1e-3 of a direct Cholesky-parametrized maximization, and the
// K x K likelihood matches the dense n x n form to 1e-8 along the EM path.
// ---------------------------------------------------------------------------
bool criterion_3(std::string& detail) {
  // Fixed instance (seed 4): all patients observe the full 5-point domain,
  // which gives an interior maximum-likelihood point that EM reaches from
  // its default initialization. (Heterogeneous tiny incidence patterns at
  // N=3 often have boundary stationary points distinct from the maximum.)
  std::mt19937_64 rng(4);
  const Domain dom = testutil::random_domain(5, 2, rng);
  const BasisSet basis = build_basis(dom, 4);

  Matrix m_true(2, 2);
  m_true << 2.0, 0.3, 0.3, 1.0;
  std::vector<DetrendedPatient> patients;
  {
    const Matrix f = basis.domain_matrix(2);
    Eigen::LLT<Matrix> llt(m_true);
    std::normal_distribution<double> g(0.0, 1.0);
    const std::vector<std::vector<Index>> index_sets{
        {0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}};
    for (size_t j = 0; j < index_sets.size(); ++j) {
      DetrendedPatient p;
      p.id = "t" + std::to_string(j);
      p.indices = index_sets[j];
      Vector w(2);
      w << g(rng), g(rng);
      w = llt.matrixL() * w;
      p.z_tilde.resize(static_cast<Index>(p.indices.size()));
      for (size_t i = 0; i < p.indices.size(); ++i) {
        p.z_tilde(static_cast<Index>(i)) =
            f.row(p.indices[i]).dot(w) + std::sqrt(0.5) * g(rng);
      }
      patients.push_back(std::move(p));
    }
  }
  const FitData data = prepare_fit_data(patients, basis, 2);

  // K x K versus dense likelihood along the EM iterate path (and at the
  // initialization), absolute tolerance 1e-8.
  double worst_gap = 0;
  for (int t = 0; t <= 9; ++t) {
    EmOptions opt;
    opt.max_iter = t;
    opt.tol = 0.0;  // never converge early: land exactly on iterate t
    const ModelFit it = em_fit(data, 2, opt);
    const double kxk = log_likelihood(data, 2, it.M, it.sigma2);
    const double dense = dense_loglik(patients, basis, it.M, it.sigma2);
    worst_gap = std::max(worst_gap, std::abs(kxk - dense));
  }

  // EM fixed point.
  EmOptions em_opt;
  em_opt.tol = 1e-13;
  em_opt.max_iter = 1000000;
  const ModelFit fit = em_fit(data, 2, em_opt);

  // Independent direct maximization over (L11, L21, L22, log sigma2).
  auto objective = [&](const Vector& x) {
    Matrix l = Matrix::Zero(2, 2);
    l(0, 0) = x(0);
    l(1, 0) = x(1);
    l(1, 1) = x(2);
    const double s2 = std::exp(x(3));
    if (!std::isfinite(s2) || s2 <= 0) return 1e30;
    try {
      return -log_likelihood(data, 2, Matrix(l * l.transpose()), s2);
    } catch (...) {
      return 1e30;
    }
  };

  double best_direct = 1e30;
  {
    // Start at the EM solution itself plus 60 random restarts.
    Eigen::LLT<Matrix> llt(fit.M +
                           1e-12 * fit.M.trace() * Matrix::Identity(2, 2));
    Vector x0(4);
    x0 << llt.matrixL()(0, 0), llt.matrixL()(1, 0), llt.matrixL()(1, 1),
        std::log(fit.sigma2);
    std::vector<Vector> starts{x0};
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> ut(-3.0, 1.5);
    for (int s = 0; s < 60; ++s) {
      Vector x(4);
      x << 1.5 * g(rng), 1.5 * g(rng), 1.5 * g(rng), ut(rng);
      starts.push_back(x);
    }
    for (const Vector& start : starts) {
      const Vector xb = nelder_mead(objective, start, 0.25, 2000, 1e-13);
      best_direct = std::min(best_direct, objective(xb));
    }
  }
  const double ll_direct = -best_direct;
  const double shortfall = ll_direct - fit.loglik;  // >0: EM fell short

  std::ostringstream ss;
  ss << "EM loglik " << fmt(fit.loglik) << ", direct max " << fmt(ll_direct)
     << ", shortfall " << fmt(shortfall) << " (tol 1e-3); dense gap "
     << fmt(worst_gap) << " (tol 1e-8)";
  detail = ss.str();
  return shortfall <= 1e-3 && worst_gap <= 1e-8;
}

// ---------------------------------------------------------------------------
// Criterion 4: desk-scale trend grid, N=30, tau=2, L in {3,4,5},
// p in {0,2,4,6}, 30 replicates per cell: (a) median H* <= 1 at p=0;
// (b) medians non-decreasing in p per L and in L per p>0, at most one
// inversion per row/column. Under 30 min.
// ---------------------------------------------------------------------------
bool criterion_4(std::string& detail) {
  const std::vector<int> Ls{3, 4, 5};
  const std::vector<int> ps{0, 2, 4, 6};
  std::vector<SimConfig> cells;
  for (int L : Ls) {
    for (int p : ps) {
      SimConfig c;
      c.N = 30;
      c.L = L;
      c.tau = 2.0;
      c.p = p;
      c.replicates = 30;
      c.seed = 404;
      cells.push_back(c);
    }
  }
  ExperimentOptions opt;
  opt.threads = 1;
  // One basis budget for the whole grid so only the sampling resolution
  // varies across L.  50 equals the automatic choice at L = 3; letting the
  // budget track n would let K reach min_j n_j at the coarsest resolution,
  // where the zero-noise interpolation regime inflates H* arbitrarily.
  opt.kmax = 50;
  const auto summaries = run_experiment(cells, opt);

  std::map<std::pair<int, int>, double> median;  // (L, p) -> median H*
  int failures = 0;
  for (const CellSummary& c : summaries) {
    median[{c.config.L, c.config.p}] = c.median_H;
    failures += c.failures;
  }

  bool p0_ok = true;
  for (int L : Ls) p0_ok = p0_ok && median[{L, 0}] <= 1.0;

  int worst_row_inv = 0;
  for (int L : Ls) {
    int inv = 0;
    for (size_t i = 1; i < ps.size(); ++i) {
      if (median[{L, ps[i]}] < median[{L, ps[i - 1]}]) ++inv;
    }
    worst_row_inv = std::max(worst_row_inv, inv);
  }
  int worst_col_inv = 0;
  for (size_t pi = 1; pi < ps.size(); ++pi) {  // p > 0 only
    int inv = 0;
    for (size_t i = 1; i < Ls.size(); ++i) {
      if (median[{Ls[i], ps[pi]}] < median[{Ls[i - 1], ps[pi]}]) ++inv;
    }
    worst_col_inv = std::max(worst_col_inv, inv);
  }

  std::ostringstream ss;
  ss << "medians";
  for (int L : Ls) {
    ss << " L" << L << ":[";
    for (size_t i = 0; i < ps.size(); ++i) {
      ss << (i ? " " : "") << median[{L, ps[i]}];
    }
    ss << "]";
  }
  ss << "; max inversions row " << worst_row_inv << " col " << worst_col_inv
     << "; failures " << failures;
  detail = ss.str();
  return p0_ok && worst_row_inv <= 1 && worst_col_inv <= 1 && failures == 0;
}

// Shared pipeline for criteria 5 and 6: one simulated replicate fitted end
// to end. Reuses the basis when consecutive replicates share a domain.
struct FittedReplicate {
  SimTruth truth;
  Domain domain;
  std::shared_ptr<const BasisSet> basis;
  Decomposition dec;
  std::vector<DetrendedPatient> detrended;
};

FittedReplicate fit_replicate(const SimConfig& config, int replicate,
                              std::shared_ptr<const BasisSet>* cache) {
  FittedReplicate out;
  std::mt19937_64 rng = replicate_stream(config, replicate);
  out.truth = generate_signal(config, rng);

  std::vector<RawPatient> raws;
  for (Index j = 0; j < config.N; ++j) {
    RawPatient raw;
    raw.id = "p" + std::to_string(j);
    raw.locations = out.truth.patients[static_cast<size_t>(j)].locations;
    raw.values = out.truth.patients[static_cast<size_t>(j)].z;
    raws.push_back(std::move(raw));
  }
  out.domain = build_domain(raws);
  if (*cache && (*cache)->domain.locations.rows() ==
                    out.domain.locations.rows() &&
      (*cache)->domain.locations == out.domain.locations) {
    out.basis = *cache;
  } else {
    out.basis = std::make_shared<const BasisSet>(build_basis(out.domain));
    *cache = out.basis;
  }

  for (const RawPatient& raw : raws) {
    out.detrended.push_back(detrend(bind_patient(raw, out.domain)));
  }
  const SelectResult sel = select_K(out.detrended, *out.basis);
  out.dec = decompose(sel.best, *out.basis);
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 5: N=60, L=5, p=4, tau=2: at least 70% of pairwise absolute
// feature correlations in [0, 0.1) and at least 90% in [0, 0.3). Under
// 10 min.
// ---------------------------------------------------------------------------
SimConfig criterion_5_config() {
  SimConfig c;
  c.N = 60;
  c.L = 5;
  c.tau = 2.0;
  c.p = 4;
  c.replicates = 20;
  c.seed = 505;
  return c;
}

bool criterion_5(std::string& detail) {
  std::shared_ptr<const BasisSet> cache;
  const FittedReplicate rep = fit_replicate(criterion_5_config(), 0, &cache);
  const Index h = rep.dec.H_star;
  if (h < 2) {
    detail = "H* = " + std::to_string(h) + ": no feature pairs to correlate";
    return false;
  }

  Matrix thetas(60, h);
  for (Index j = 0; j < 60; ++j) {
    thetas.row(j) =
        extract_features(rep.dec, rep.detrended[static_cast<size_t>(j)])
            .theta.transpose();
  }
  const CorrelationReport report = correlation_report({{"features", thetas}});
  const auto& sec = report.sections.front();
  const double pairs = static_cast<double>(sec.pairs);
  const double in_01 = static_cast<double>(sec.counts[0]) / pairs;
  const double in_03 =
      static_cast<double>(sec.counts[0] + sec.counts[1]) / pairs;

  std::ostringstream ss;
  ss << "H* " << h << "; " << pct(in_01) << " of " << sec.pairs
     << " pairs in [0,0.1) (need 70%), " << pct(in_03)
     << " in [0,0.3) (need 90%)";
  detail = ss.str();
  return in_01 >= 0.70 && in_03 >= 0.90;
}

// ---------------------------------------------------------------------------
// Criterion 6: criterion-5 configuration, 20 independent replicates: the
// fitted predictor beats the raw observation against the noiseless truth
// (MSE at the observed pixels) in at least 95% of patient-replicates.
// ---------------------------------------------------------------------------
bool criterion_6(std::string& detail) {
  const SimConfig config = criterion_5_config();
  std::shared_ptr<const BasisSet> cache;
  int wins = 0, total = 0;
  for (int replicate = 0; replicate < 20; ++replicate) {
    const FittedReplicate rep = fit_replicate(config, replicate, &cache);
    for (Index j = 0; j < config.N; ++j) {
      const SimPatient& p = rep.truth.patients[static_cast<size_t>(j)];
      const Vector yhat = predict_y(
          rep.dec, rep.detrended[static_cast<size_t>(j)], p.locations);
      const double mse_fit = (yhat - p.y_true).squaredNorm() /
                             static_cast<double>(p.y_true.size());
      const double mse_obs = (p.z - p.y_true).squaredNorm() /
                             static_cast<double>(p.y_true.size());
      wins += mse_fit < mse_obs ? 1 : 0;
      ++total;
    }
  }
  const double rate = static_cast<double>(wins) / total;
  std::ostringstream ss;
  ss << wins << "/" << total << " patient-replicates improved ("
     << pct(rate) << ", need 95%)";
  detail = ss.str();
  return rate >= 0.95;
}

// ---------------------------------------------------------------------------
// Criterion 7: composition identity (1e-10), score/extract agreement on
// training patients (1e-10), and save/load round-trip score drift (1e-12).
// ---------------------------------------------------------------------------
bool criterion_7(std::string& detail) {
  SimConfig config;
  config.N = 12;
  config.L = 4;
  config.tau = 2.0;
  config.p = 3;
  config.replicates = 1;
  config.seed = 707;
  std::mt19937_64 rng = replicate_stream(config, 0);
  const SimTruth truth = generate_signal(config, rng);

  std::vector<RawPatient> raws;
  for (Index j = 0; j < config.N; ++j) {
    RawPatient raw;
    raw.id = "p" + std::to_string(j);
    raw.locations = truth.patients[static_cast<size_t>(j)].locations;
    raw.values = truth.patients[static_cast<size_t>(j)].z;
    raws.push_back(std::move(raw));
  }
  const Domain domain = build_domain(raws);
  const BasisSet basis = build_basis(domain, 30);
  std::vector<DetrendedPatient> detrended;
  for (const RawPatient& raw : raws) {
    detrended.push_back(detrend(bind_patient(raw, domain)));
  }
  const SelectResult sel = select_K(detrended, basis);
  const Decomposition dec = decompose(sel.best, basis);
  if (dec.H_star < 1) {
    detail = "H* = 0: nothing to compose";
    return false;
  }

  // Mixed targets: observed pixels plus off-grid points.
  std::mt19937_64 target_rng(7070);
  Matrix targets(40, 2);
  targets.topRows(20) = domain.locations.topRows(20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index i = 20; i < 40; ++i) {
    targets(i, 0) = u(target_rng);
    targets(i, 1) = u(target_rng);
  }

  double worst_compose = 0, worst_score = 0;
  for (Index j = 0; j < config.N; ++j) {
    const auto& det = detrended[static_cast<size_t>(j)];
    const FeatureVector fv = extract_features(dec, det);
    const Vector direct = predict_y(dec, det, targets);
    const Vector composed =
        (component_matrix(dec, targets) * fv.theta).array() + fv.mu_hat;
    worst_compose = std::max(
        worst_compose, (direct - composed).cwiseAbs().maxCoeff());

    const FeatureVector scored =
        score_new_patient(dec, raws[static_cast<size_t>(j)]);
    worst_score = std::max(
        worst_score,
        (scored.theta - fv.theta).cwiseAbs().maxCoeff());
    worst_score = std::max(worst_score, std::abs(scored.mu_hat - fv.mu_hat));
  }

  // Save/load round trip preserves scores (both payload encodings).
  const ModelFile model =
      make_model_file(basis, sel.best, dec, sel.diagnostics, false);
  double worst_drift = 0;
  for (bool binary : {false, true}) {
    const std::string path =
        "acceptance_model_" + std::string(binary ? "bin" : "txt") + ".json";
    save_model(model, path, binary);
    const ModelFile back = load_model(path);
    const Decomposition dec2 = back.decomposition();
    for (Index j = 0; j < config.N; ++j) {
      const FeatureVector a =
          score_new_patient(dec, raws[static_cast<size_t>(j)]);
      const FeatureVector b =
          score_new_patient(dec2, raws[static_cast<size_t>(j)]);
      worst_drift = std::max(
          worst_drift, (a.theta - b.theta).cwiseAbs().maxCoeff());
    }
    std::remove(path.c_str());
  }

  std::ostringstream ss;
  ss << "H* " << dec.H_star << "; compose " << fmt(worst_compose)
     << " (tol 1e-10), score-extract " << fmt(worst_score)
     << " (tol 1e-10), round-trip drift " << fmt(worst_drift)
     << " (tol 1e-12)";
  detail = ss.str();
  return worst_compose <= 1e-10 && worst_score <= 1e-10 &&
         worst_drift <= 1e-12;
}

// ---------------------------------------------------------------------------
// Criterion 8: exact degrees-of-freedom values and the AIC identity.
// ---------------------------------------------------------------------------
bool criterion_8(std::string& detail) {
  const bool df_ok = model_df(3, 22) == 7 && model_df(10, 10) == 56 &&
                     model_df(30, 22) == 430;
  const bool aic_ok = aic_value(-100.0, 7) == 214.0 &&
                      aic_value(-12.5, 3) == 31.0;
  std::ostringstream ss;
  ss << "df(3,22)=" << model_df(3, 22) << " df(10,10)=" << model_df(10, 10)
     << " df(30,22)=" << model_df(30, 22) << " (want 7/56/430); AIC "
     << (aic_ok ? "exact" : "WRONG");
  detail = ss.str();
  return df_ok && aic_ok;
}

struct Criterion {
  std::function<bool(std::string&)> run;
  double time_limit_s;  // 0: no limit pinned by the criterion
};

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, Criterion> criteria{
      {1, {criterion_1, 60.0}},  {2, {criterion_2, 60.0}},
      {3, {criterion_3, 0.0}},   {4, {criterion_4, 1800.0}},
      {5, {criterion_5, 600.0}}, {6, {criterion_6, 0.0}},
      {7, {criterion_7, 0.0}},   {8, {criterion_8, 0.0}},
  };

  std::vector<int> to_run;
  if (argc <= 1) {
    for (const auto& [id, c] : criteria) to_run.push_back(id);
  } else {
    for (int i = 1; i < argc; ++i) {
      const int id = std::atoi(argv[i]);
      if (!criteria.count(id)) {
        std::cerr << "unknown criterion '" << argv[i] << "' (valid: 1-8)\n";
        return 2;
      }
      to_run.push_back(id);
    }
  }

  bool all_pass = true;
  for (int id : to_run) {
    const Criterion& c = criteria.at(id);
    std::string detail;
    bool pass = false;
    const auto start = std::chrono::steady_clock::now();
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      pass = false;
      detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (pass && c.time_limit_s > 0 && seconds > c.time_limit_s) {
      pass = false;
      detail += "; runtime " + fmt(seconds) + " s exceeds the " +
                fmt(c.time_limit_s) + " s budget";
    }
    char line[1024];
    std::snprintf(line, sizeof line, "criterion %d: %s — %s (%.1f s)", id,
                  pass ? "PASS" : "FAIL", detail.c_str(), seconds);
    std::cout << line << std::endl;
    all_pass = all_pass && pass;
  }
  return all_pass ? 0 : 1;
}
