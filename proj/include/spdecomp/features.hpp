#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "spdecomp/basis.hpp"
#include "spdecomp/em.hpp"
#include "spdecomp/types.hpp"

namespace spdecomp {

// Default noise-floor multiplier for retaining eigenvalues of M-hat (see
// decompose). 1.0 places the floor at the random-matrix edge
// sigma2 * (1 + sqrt(K/N))^2, the upper limit of the eigenvalue debris EM
// leaves behind on pure-noise data; 0 disables the floor entirely.
inline constexpr double kNoiseFloorMultDefault = 1.0;

struct DecomposeOptions {
  double noise_floor_mult = kNoiseFloorMultDefault;
};

// Karhunen-Loeve style decomposition of a fitted weight covariance:
// M-hat = U diag(lambda) U', retaining the H* leading eigenpairs, with
// component functions g_h(s) = u_h' f(s).
struct Decomposition {
  Index K_star = 0;
  Index H_star = 0;
  Vector lambdas;     // H*, strictly positive, non-increasing
  Matrix U_hat;       // K* x H*, orthonormal columns
  Matrix G_domain;    // n x H*, component functions at the domain locations
  double sigma2 = 0;  // noise variance of the fit
  double noise_floor = 0;  // eigenvalue threshold that was applied
  BasisSet basis;
};

// Eigendecomposition of fit.M. An eigenvalue is retained when it exceeds
// max(1e-8 * lambda_1, noise_floor_mult * sigma2 * (1 + sqrt(K/N))^2).
// The relative cutoff alone cannot separate signal from the O(sigma2)
// eigenvalue debris of the maximum-likelihood fit, so the second term screens
// at the pure-noise eigenvalue edge; pass noise_floor_mult = 0 for the bare
// relative rule. A numerically zero M yields H* = 0 (a valid pure-noise
// model).
Decomposition decompose(const ModelFit& fit, const BasisSet& basis,
                        const DecomposeOptions& options = {});

// g_h at one location; h is 1-based (1 <= h <= H*).
double component_function(const Decomposition& dec, const Vector& s, Index h);

// All H* component functions at the given locations (rows).
Matrix component_matrix(const Decomposition& dec, const Matrix& locations);

// Truncated spectral covariance estimate sum_h lambda_h g_h(s) g_h(t).
double estimate_covariance(const Decomposition& dec, const Vector& s,
                           const Vector& t);

struct FeatureVector {
  std::string patient_id;
  double mu_hat = 0;
  Vector theta;  // H* weights, ordered by descending lambda
};

// Conditional-expectation features theta_j = Lambda G_j'(G_j Lambda G_j' +
// sigma2 I)^{-1} z_j, computed through an H* x H* solve.
FeatureVector extract_features(const Decomposition& dec,
                               const DetrendedPatient& patient);

// Minimum-MSPE predictor y_j(s) = mu_j + g(s)' theta_j at the target
// locations (gap filling included: targets need not be observed).
Vector predict_y(const Decomposition& dec, const DetrendedPatient& patient,
                 const Matrix& targets);

// Detrends a new patient with its own grand mean and applies the feature
// formula with the component functions evaluated at the new locations (which
// need not lie in the training domain).
FeatureVector score_new_patient(const Decomposition& dec,
                                const RawPatient& patient);

// Histogram bins for absolute correlations: [0,.1) [.1,.3) [.3,.5) [.5,.7)
// [.7,.9) [.9,1]. The last bin is closed so |r| = 1 is counted.
inline constexpr std::array<double, 5> kCorrelationBinEdges{0.1, 0.3, 0.5, 0.7,
                                                            0.9};

struct CorrelationSection {
  std::string label;             // "A" within set A, "A:B" between sets
  std::array<Index, 6> counts{};  // histogram over the bins above
  Index pairs = 0;               // binned pairs
  Index excluded = 0;            // pairs skipped for zero-variance columns
};

struct CorrelationReport {
  std::vector<CorrelationSection> sections;
  Index zero_variance_columns = 0;
};

// Pairwise absolute Pearson correlations, mean-centered columns. Within each
// named set every unordered column pair (h < h') is binned; between every
// pair of sets all cross pairs are binned. Rows must align across sets (same
// observation in the same row); a column with zero variance is excluded and
// counted.
CorrelationReport correlation_report(
    const std::vector<std::pair<std::string, Matrix>>& sets);

}  // namespace spdecomp
