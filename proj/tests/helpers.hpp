#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "spdecomp/basis.hpp"
#include "spdecomp/domain.hpp"
#include "spdecomp/em.hpp"
#include "spdecomp/types.hpp"

namespace testutil {

using spdecomp::DetrendedPatient;
using spdecomp::Domain;
using spdecomp::Index;
using spdecomp::Matrix;
using spdecomp::RawPatient;
using spdecomp::Vector;

// Uniform random locations in [0,1]^d with distinct rows (probability one).
inline Matrix random_locations(Index n, int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) m(i, c) = u(rng);
  }
  return m;
}

inline Domain random_domain(Index n, int d, std::mt19937_64& rng) {
  RawPatient p;
  p.id = "all";
  p.locations = random_locations(n, d, rng);
  p.values = Vector::Zero(n);
  return spdecomp::build_domain(std::vector<RawPatient>{p});
}

// A random strictly increasing index subset of size m out of n.
inline std::vector<Index> random_subset(Index n, Index m,
                                        std::mt19937_64& rng) {
  std::vector<Index> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<size_t>(m));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// A random symmetric PSD matrix B B' with O(scale) eigenvalues.
inline Matrix random_psd(Index k, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix b(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) b(i, j) = g(rng);
  }
  Matrix m = scale / static_cast<double>(k) * (b * b.transpose());
  return m;
}

// Patients drawn from the model: z_j = F_j w_j + eps, w_j ~ N(0, M),
// eps ~ N(0, sigma2 I), observed on random subsets of the domain. The
// returned z_tilde is the raw z (no mean removal: EM consumes any centered
// or uncentered vector equally).
inline std::vector<DetrendedPatient> model_patients(
    const spdecomp::BasisSet& basis, Index N, const Matrix& m_true,
    double sigma2, std::mt19937_64& rng, double keep_lo = 0.5,
    double keep_hi = 1.0) {
  const Index n = basis.n();
  const Index k = m_true.rows();
  const Matrix f = basis.domain_matrix(k);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m_true);
  const Matrix root = es.eigenvectors() *
                      es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(keep_lo, keep_hi);

  std::vector<DetrendedPatient> out;
  for (Index j = 0; j < N; ++j) {
    const Index nj = std::max<Index>(
        k + 1, static_cast<Index>(u(rng) * static_cast<double>(n)));
    DetrendedPatient p;
    p.id = "m" + std::to_string(j);
    p.indices = random_subset(n, std::min(nj, n), rng);
    Vector w(k);
    for (Index i = 0; i < k; ++i) w(i) = g(rng);
    w = root * w;
    p.z_tilde.resize(static_cast<Index>(p.indices.size()));
    for (size_t i = 0; i < p.indices.size(); ++i) {
      p.z_tilde(static_cast<Index>(i)) =
          f.row(p.indices[i]).dot(w) + std::sqrt(sigma2) * g(rng);
    }
    out.push_back(std::move(p));
  }
  return out;
}

// Pure-noise patients observing the full domain.
inline std::vector<DetrendedPatient> noise_patients(Index n, Index N,
                                                    std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<DetrendedPatient> out;
  for (Index j = 0; j < N; ++j) {
    DetrendedPatient p;
    p.id = "n" + std::to_string(j);
    p.indices.resize(static_cast<size_t>(n));
    std::iota(p.indices.begin(), p.indices.end(), Index{0});
    p.z_tilde.resize(n);
    for (Index i = 0; i < n; ++i) p.z_tilde(i) = g(rng);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace testutil
