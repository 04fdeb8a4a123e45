#include "spdecomp/basis.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "spdecomp/domain.hpp"
#include "spdecomp/errors.hpp"

namespace spdecomp {

namespace {

constexpr double kAlphaRelTol = 1e-10;  // retain alpha_k > tol * alpha_1

Matrix kernel_block(int d, const Matrix& rows_at, const Matrix& anchors) {
  Matrix psi(rows_at.rows(), anchors.rows());
  for (Index i = 0; i < rows_at.rows(); ++i) {
    for (Index j = 0; j < anchors.rows(); ++j) {
      psi(i, j) = tps_kernel(d, (rows_at.row(i) - anchors.row(j)).norm());
    }
  }
  return psi;
}

Matrix design_matrix(const Matrix& locations) {
  Matrix x(locations.rows(), locations.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(locations.cols()) = locations;
  return x;
}

void fix_column_signs(Matrix& m) {
  for (Index k = 0; k < m.cols(); ++k) {
    Index imax = 0;
    m.col(k).cwiseAbs().maxCoeff(&imax);
    if (m(imax, k) < 0) m.col(k) = -m.col(k);
  }
}

}  // namespace

double tps_kernel(int d, double r) {
  if (r < 0 || !std::isfinite(r)) {
    throw DataError("kernel distance must be finite and nonnegative");
  }
  switch (d) {
    case 1:
      return r * r * r / 12.0;
    case 2:
      return r == 0.0 ? 0.0 : r * r * std::log(r) / (8.0 * std::numbers::pi);
    case 3:
      return -r / 8.0;
    default:
      throw DataError("kernel dimension must be 1, 2, or 3; got " +
                      std::to_string(d));
  }
}

Index default_kmax(Index n, int d) {
  const Index budget =
      std::max<Index>(50, static_cast<Index>(std::ceil(4.0 * std::sqrt(
                              static_cast<double>(n)))));
  Index k = std::min<Index>(n - d - 1, budget);
  k = std::max<Index>(k, d + 1);
  return std::min<Index>(k, n);
}

BasisSet build_basis(const Domain& domain, Index kmax) {
  const int d = domain.dim;
  const Index n = domain.size();
  if (d < 1 || d > 3) throw DataError("domain dimension must be 1, 2, or 3");
  if (n < d + 2) {
    throw DataError("basis construction needs at least d+2 = " +
                    std::to_string(d + 2) + " locations; got " +
                    std::to_string(n));
  }
  if (!domain.locations.allFinite()) {
    throw DataError("domain locations must be finite");
  }
  if (kmax == 0) kmax = default_kmax(n, d);
  if (kmax < d + 1 || kmax > n) {
    throw DataError("kmax must lie in [d+1, n] = [" + std::to_string(d + 1) +
                    ", " + std::to_string(n) + "]; got " +
                    std::to_string(kmax));
  }

  const Matrix x = design_matrix(domain.locations);

  Eigen::ColPivHouseholderQR<Matrix> rank_check(x);
  rank_check.setThreshold(1e-10);
  if (rank_check.rank() < d + 1) {
    throw DataError(
        "degenerate geometry: polynomial design is rank-deficient "
        "(e.g. all locations collinear)");
  }

  // Unpivoted QR with diag(R) > 0 gives a deterministic orthonormalization of
  // the polynomial block; poly_coeffs = R^{-1}.
  Eigen::HouseholderQR<Matrix> qr(x);
  Matrix r = qr.matrixQR().topRows(d + 1).triangularView<Eigen::Upper>();
  for (Index i = 0; i <= d; ++i) {
    if (r(i, i) < 0) r.row(i) = -r.row(i);
  }

  BasisSet basis;
  basis.domain = domain;
  basis.dim = d;
  basis.poly_coeffs =
      r.triangularView<Eigen::Upper>().solve(Matrix::Identity(d + 1, d + 1));

  const Matrix q = x * basis.poly_coeffs;  // n x (d+1), orthonormal columns
  const Matrix psi = kernel_block(d, domain.locations, domain.locations);
  const Matrix b = q.transpose() * psi;  // (d+1) x n
  basis.proj_coeffs = basis.poly_coeffs * b;

  const Index n_eig_req = kmax - (d + 1);
  basis.kmax = kmax;
  if (n_eig_req == 0) {
    basis.alphas.resize(0);
    basis.eigvecs.resize(n, 0);
    return basis;
  }

  // Projected kernel matrix Omega Psi Omega with Omega = I - qq'.
  const Matrix qb = q * b;  // q (q' Psi)
  Matrix s = psi - qb - qb.transpose() + q * (b * q) * q.transpose();
  s = ((s + s.transpose()) * 0.5).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success) {
    throw NumericError("eigendecomposition of the projected kernel failed");
  }
  const Vector& evals = es.eigenvalues();  // ascending
  const double alpha_max = evals(n - 1);

  Index n_pos = 0;
  if (alpha_max > 0) {
    const double floor = kAlphaRelTol * alpha_max;
    while (n_pos < n && evals(n - 1 - n_pos) > floor) ++n_pos;
  }
  const Index n_keep = std::min(n_eig_req, n_pos);
  if (n_keep < n_eig_req) {
    basis.truncated = true;
    basis.kmax = d + 1 + n_keep;
  }

  basis.alphas.resize(n_keep);
  basis.eigvecs.resize(n, n_keep);
  for (Index k = 0; k < n_keep; ++k) {
    basis.alphas(k) = evals(n - 1 - k);
    basis.eigvecs.col(k) = es.eigenvectors().col(n - 1 - k);
  }
  fix_column_signs(basis.eigvecs);
  return basis;
}

Matrix BasisSet::domain_matrix(Index K) const {
  if (K < 1 || K > kmax) {
    throw DataError("K must lie in [1, kmax] = [1, " + std::to_string(kmax) +
                    "]; got " + std::to_string(K));
  }
  const Index npoly = std::min<Index>(K, dim + 1);
  Matrix f(n(), K);
  f.leftCols(npoly) =
      design_matrix(domain.locations) * poly_coeffs.leftCols(npoly);
  if (K > dim + 1) f.rightCols(K - dim - 1) = eigvecs.leftCols(K - dim - 1);
  return f;
}

Matrix BasisSet::matrix_at(const Matrix& locations, Index K,
                           bool domain_lookup) const {
  if (K < 1 || K > kmax) {
    throw DataError("K must lie in [1, kmax] = [1, " + std::to_string(kmax) +
                    "]; got " + std::to_string(K));
  }
  if (locations.cols() != dim) {
    throw DataError("locations have dimension " +
                    std::to_string(locations.cols()) +
                    " but the basis has dimension " + std::to_string(dim));
  }
  const Index m = locations.rows();
  const Index npoly = std::min<Index>(K, dim + 1);
  const Index ks = K > dim + 1 ? K - dim - 1 : 0;

  Matrix f(m, K);
  f.leftCols(npoly) = design_matrix(locations) * poly_coeffs.leftCols(npoly);
  if (ks == 0) return f;

  // Bit-exact domain hits read the stored eigenvector rows; misses go through
  // the kernel-evaluation formula in one batch.
  std::vector<Index> miss;
  miss.reserve(static_cast<size_t>(m));
  for (Index i = 0; i < m; ++i) {
    Index hit = -1;
    if (domain_lookup) {
      Index lo = 0, hi = n();
      while (lo < hi) {
        const Index mid = lo + (hi - lo) / 2;
        if (detail::lex_less(domain.locations, mid, locations, i)) {
          lo = mid + 1;
        } else {
          hi = mid;
        }
      }
      if (lo < n() &&
          (domain.locations.row(lo).array() == locations.row(i).array())
              .all()) {
        hit = lo;
      }
    }
    if (hit >= 0) {
      f.row(i).tail(ks) = eigvecs.row(hit).head(ks);
    } else {
      miss.push_back(i);
    }
  }
  if (miss.empty()) return f;

  Matrix miss_locs(static_cast<Index>(miss.size()), dim);
  for (size_t i = 0; i < miss.size(); ++i) {
    miss_locs.row(static_cast<Index>(i)) = locations.row(miss[i]);
  }
  // f_k(s) = { psi(s)'v_k - x(s)' (proj_coeffs v_k) } / alpha_k
  const Matrix psi_t = kernel_block(dim, miss_locs, domain.locations);
  const Matrix pv = proj_coeffs * eigvecs.leftCols(ks);  // (d+1) x ks
  Matrix spline = psi_t * eigvecs.leftCols(ks) - design_matrix(miss_locs) * pv;
  spline.array().rowwise() /= alphas.head(ks).transpose().array();
  for (size_t i = 0; i < miss.size(); ++i) {
    f.row(miss[i]).tail(ks) = spline.row(static_cast<Index>(i));
  }
  return f;
}

Vector BasisSet::at(const Vector& location, Index K, bool domain_lookup) const {
  return matrix_at(location.transpose(), K, domain_lookup).row(0);
}

}  // namespace spdecomp
