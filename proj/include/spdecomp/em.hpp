#pragma once

#include <span>
#include <vector>

#include "spdecomp/basis.hpp"
#include "spdecomp/types.hpp"

namespace spdecomp {

// Per-patient sufficient statistics at a fixed column budget K_cap:
// A = F_j'F_j, b = F_j'z_tilde, c = z_tilde'z_tilde. Fits at any K <= K_cap
// slice the leading KxK / K blocks, so the statistics are computed once.
struct PatientStats {
  Index n = 0;
  Matrix A;
  Vector b;
  double c = 0;
};

struct FitData {
  Index K_cap = 0;
  Index N = 0;
  double total_obs = 0;
  double pooled_var = 0;  // sum_j c_j / sum_j n_j
  std::vector<PatientStats> stats;
};

// Assembles the sufficient statistics for all patients against the basis.
FitData prepare_fit_data(std::span<const DetrendedPatient> patients,
                         const BasisSet& basis, Index K_cap = 0,
                         int threads = 1);

// Fitted variance parameters at a fixed K.
struct ModelFit {
  Index K = 0;
  Matrix M;           // KxK symmetric nonnegative-definite weight covariance
  double sigma2 = 0;  // noise variance
  double loglik = 0;
  Index df = 0;
  double aic = 0;
  int iterations = 0;
  bool converged = false;
  Index N = 0;  // patients used in the fit (df and diagnostics context)
};

struct EmOptions {
  double tol = 1e-6;  // stop when |loglik change| < tol * (1 + |loglik|)
  int max_iter = 500;
  bool record_path = false;  // fill EmPath diagnostics
};

// Per-iteration diagnostics (index 0 = initialization).
struct EmPath {
  std::vector<double> logliks;
  std::vector<double> min_eig_M;    // smallest eigenvalue of M after update
  std::vector<double> asymmetry_M;  // max |M - M'| after update
};

// Marginal Gaussian log-likelihood of the detrended data at (M, sigma2),
// computed through KxK factorizations only. Throws NumericError on non-PSD M
// (eigenvalue below -1e-10 * trace) or sigma2 <= 0.
double log_likelihood(const FitData& data, Index K, const Matrix& M,
                      double sigma2);

// EM maximum likelihood for (M, sigma2) at fixed K.
//   E-step: w_j = M F_j'(F_j M F_j' + s2 I)^{-1} z_j,
//           Q_j = M - M F_j'(F_j M F_j' + s2 I)^{-1} F_j M
//   M-step: M <- N^{-1} sum_j (w_j w_j' + Q_j)
//           s2 <- (sum n_j)^{-1} sum_j {c_j - 2 b_j'w_j + tr(A_j M_new)}
// Initialization: sigma2 = 0.5 * pooled variance, M = (0.5 * pooled / K) I.
// init (optional) overrides the initial (M, sigma2), e.g. for warm starts.
ModelFit em_fit(const FitData& data, Index K, const EmOptions& options = {},
                EmPath* path = nullptr, const Matrix* M_init = nullptr,
                const double* sigma2_init = nullptr);

// Convenience: binds patients to the basis and fits at K.
ModelFit em_fit(std::span<const DetrendedPatient> patients,
                const BasisSet& basis, Index K, const EmOptions& options = {},
                EmPath* path = nullptr);

// Model degrees of freedom: K(K+1)/2 + 1 if K <= N, else KN + 1 - N(N-1)/2.
Index model_df(Index K, Index N);
double aic_value(double loglik, Index df);

struct KDiagnostics {
  Index K = 0;
  double loglik = 0;
  Index df = 0;
  double aic = 0;
  int iterations = 0;
  bool converged = false;
};

enum class ScanMode { ladder, full };

struct SelectOptions {
  ScanMode mode = ScanMode::ladder;
  std::vector<Index> candidates;  // explicit grid; overrides mode when set
  bool warm_start = true;
  EmOptions em;
};

struct SelectResult {
  Index K_star = 0;
  ModelFit best;
  std::vector<KDiagnostics> diagnostics;  // ascending K
};

// Geometric candidate ladder {d+1} u {ceil(kmax / 2^m)}, ascending.
std::vector<Index> ladder_candidates(int d, Index kmax);

// Fits candidate K values and returns the AIC minimizer. The default ladder
// is refined by bisecting toward the running minimum until the neighborhood
// gap closes. Warm starts pad the previous M with fresh diagonal mass
// 0.5 * sigma2 (exact zero padding would freeze the new components: a zero
// row of M is a fixed point of both EM updates).
SelectResult select_K(const FitData& data, int d,
                      const SelectOptions& options = {});

SelectResult select_K(std::span<const DetrendedPatient> patients,
                      const BasisSet& basis, const SelectOptions& options = {});

}  // namespace spdecomp
