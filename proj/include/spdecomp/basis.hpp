#pragma once

#include "spdecomp/types.hpp"

namespace spdecomp {

// Radial kernel underlying the basis construction.
//   d=1: r^3/12      d=2: r^2 log(r)/(8*pi), 0 at r=0      d=3: -r/8
double tps_kernel(int d, double r);

// Default number of basis functions (total, including the d+1 polynomial
// columns): min(n-d-1, max(50, ceil(4*sqrt(n)))), clamped to [d+1, n].
Index default_kmax(Index n, int d);

// Ordered multi-resolution basis over a fixed domain: an orthonormalized
// polynomial block (constant + coordinates) followed by eigenfunctions of the
// kernel matrix projected off the polynomial span, ordered smoothest first
// (descending eigenvalue).
struct BasisSet {
  Domain domain;
  int dim = 0;
  // Total available basis functions, d+1 polynomial + n_eig() spline columns.
  // May be smaller than requested when too few positive eigenvalues exist
  // (then `truncated` is set).
  Index kmax = 0;
  bool truncated = false;

  // (d+1)x(d+1) upper-triangular coefficients turning the raw design [1, s]
  // into the orthonormal polynomial block: poly row at s = [1, s'] * poly_coeffs.
  Matrix poly_coeffs;
  // Eigenvalues of the projected kernel matrix, strictly positive, descending.
  Vector alphas;
  // n x n_eig() orthonormal eigenvector columns; column k holds the values of
  // spline basis function d+1+k at the domain locations.
  Matrix eigvecs;
  // (d+1) x n projection coefficients (X'X)^{-1} X' Psi used to evaluate the
  // spline functions away from the domain locations.
  Matrix proj_coeffs;

  Index n() const { return domain.size(); }
  Index n_eig() const { return kmax - (dim + 1); }

  // Exact basis values at the domain locations: [X * poly_coeffs | eigvecs],
  // first K columns. This is the F matrix used for fitting.
  Matrix domain_matrix(Index K) const;

  // Basis values at arbitrary locations (rows), first K columns. When
  // domain_lookup is true (default), locations that match a domain location
  // bit-exactly take their spline values straight from the stored
  // eigenvectors; other locations use the kernel-evaluation formula.
  Matrix matrix_at(const Matrix& locations, Index K,
                   bool domain_lookup = true) const;

  // Single-location form of matrix_at.
  Vector at(const Vector& location, Index K, bool domain_lookup = true) const;
};

// Builds the basis. kmax = 0 selects default_kmax(n, d). Requires
// n >= d+2 and d+1 <= kmax <= n; throws DataError on degenerate geometry
// (polynomial design rank-deficient, e.g. collinear 2D locations).
BasisSet build_basis(const Domain& domain, Index kmax = 0);

}  // namespace spdecomp
