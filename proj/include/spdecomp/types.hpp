#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace spdecomp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// The shared spatial domain: the deduplicated union of all patients'
// observation locations, rows sorted lexicographically by coordinates.
// Location equality is bit-exact; any grid snapping is the ingester's job.
struct Domain {
  int dim = 0;
  Matrix locations;  // n x dim, distinct rows in canonical order

  Index size() const { return locations.rows(); }
};

// One patient's table as parsed from disk, before binding to a Domain.
struct RawPatient {
  std::string id;
  Matrix locations;  // n_j x dim
  Vector values;     // n_j
};

// A patient expressed against the shared domain. `indices` is the sparse
// form of the row-selection (incidence) operator: strictly increasing,
// values permuted to match.
struct PatientImage {
  std::string id;
  std::vector<Index> indices;
  Vector values;

  Index n_obs() const { return values.size(); }
};

// Centered observations: values minus the patient's grand mean.
struct DetrendedPatient {
  std::string id;
  double mu_hat = 0.0;
  Vector z_tilde;
  std::vector<Index> indices;

  Index n_obs() const { return z_tilde.size(); }
};

}  // namespace spdecomp
