#pragma once

#include <span>

#include "spdecomp/types.hpp"

namespace spdecomp {

// Deduplicated union of all patients' locations in canonical (lexicographic)
// order. Deterministic and independent of patient order. Throws DataError on
// mixed dimensions, duplicate locations within one patient, or an empty
// patient.
Domain build_domain(std::span<const RawPatient> patients);

// Domain indices of each patient location, in file order. Every location must
// exist in the domain (bit-exact match), else DataError.
std::vector<Index> incidence(const Matrix& locations, const Domain& domain);

// Binds a parsed patient to the domain: indices sorted ascending with values
// permuted alongside.
PatientImage bind_patient(const RawPatient& patient, const Domain& domain);

// Grand-mean centering: mu_hat = mean(values), z_tilde = values - mu_hat.
DetrendedPatient detrend(const PatientImage& patient);

// Subtracts the centroid of the patient's own locations from every location.
Matrix center_locations(const Matrix& locations);

namespace detail {
// Lexicographic strict-weak ordering of coordinate rows.
bool lex_less(const Matrix& a, Index i, const Matrix& b, Index j);
}  // namespace detail

}  // namespace spdecomp
