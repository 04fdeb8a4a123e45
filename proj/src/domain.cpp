#include "spdecomp/domain.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "spdecomp/errors.hpp"

namespace spdecomp {

namespace detail {

bool lex_less(const Matrix& a, Index i, const Matrix& b, Index j) {
  const Index d = a.cols();
  for (Index c = 0; c < d; ++c) {
    if (a(i, c) < b(j, c)) return true;
    if (a(i, c) > b(j, c)) return false;
  }
  return false;
}

namespace {

bool lex_equal(const Matrix& a, Index i, const Matrix& b, Index j) {
  const Index d = a.cols();
  for (Index c = 0; c < d; ++c) {
    if (a(i, c) != b(j, c)) return false;
  }
  return true;
}

std::string format_row(const Matrix& m, Index i) {
  std::ostringstream os;
  os << "(";
  for (Index c = 0; c < m.cols(); ++c) {
    if (c > 0) os << ", ";
    os << m(i, c);
  }
  os << ")";
  return os.str();
}

}  // namespace
}  // namespace detail

Domain build_domain(std::span<const RawPatient> patients) {
  if (patients.empty()) throw DataError("no patients given");

  const Index d = patients[0].locations.cols();
  if (d < 1 || d > 3) {
    throw DataError("domain dimension must be 1, 2, or 3; got " +
                    std::to_string(d));
  }

  Index total = 0;
  for (const RawPatient& p : patients) {
    if (p.locations.rows() == 0) {
      throw DataError("patient '" + p.id + "' has no observations");
    }
    if (p.locations.cols() != d) {
      throw DataError("patient '" + p.id + "' has dimension " +
                      std::to_string(p.locations.cols()) +
                      " but earlier patients have dimension " +
                      std::to_string(d));
    }
    if (p.values.size() != p.locations.rows()) {
      throw DataError("patient '" + p.id + "' has " +
                      std::to_string(p.locations.rows()) + " locations but " +
                      std::to_string(p.values.size()) + " values");
    }
    total += p.locations.rows();
  }

  // Pool all rows, then sort/dedup indices lexicographically.
  Matrix pool(total, d);
  Index at = 0;
  for (const RawPatient& p : patients) {
    pool.middleRows(at, p.locations.rows()) = p.locations;
    at += p.locations.rows();
  }

  std::vector<Index> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index i, Index j) {
    return detail::lex_less(pool, i, pool, j);
  });

  std::vector<Index> keep;
  keep.reserve(order.size());
  for (Index k = 0; k < total; ++k) {
    if (k == 0 || !detail::lex_equal(pool, order[k], pool, order[k - 1])) {
      keep.push_back(order[k]);
    }
  }

  Domain domain;
  domain.dim = static_cast<int>(d);
  domain.locations.resize(static_cast<Index>(keep.size()), d);
  for (size_t k = 0; k < keep.size(); ++k) {
    domain.locations.row(static_cast<Index>(k)) = pool.row(keep[k]);
  }

  // Duplicates within a single patient: check each patient against itself.
  for (const RawPatient& p : patients) {
    std::vector<Index> po(static_cast<size_t>(p.locations.rows()));
    std::iota(po.begin(), po.end(), Index{0});
    std::sort(po.begin(), po.end(), [&](Index i, Index j) {
      return detail::lex_less(p.locations, i, p.locations, j);
    });
    for (size_t k = 1; k < po.size(); ++k) {
      if (detail::lex_equal(p.locations, po[k], p.locations, po[k - 1])) {
        throw DataError("patient '" + p.id + "' has duplicate location " +
                        detail::format_row(p.locations, po[k]));
      }
    }
  }

  return domain;
}

std::vector<Index> incidence(const Matrix& locations, const Domain& domain) {
  const Index n = domain.size();
  std::vector<Index> out(static_cast<size_t>(locations.rows()));
  for (Index i = 0; i < locations.rows(); ++i) {
    // Binary search over the lexicographically sorted domain rows.
    Index lo = 0, hi = n;
    while (lo < hi) {
      const Index mid = lo + (hi - lo) / 2;
      if (detail::lex_less(domain.locations, mid, locations, i)) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    bool found = lo < n;
    if (found) {
      for (Index c = 0; c < locations.cols(); ++c) {
        if (domain.locations(lo, c) != locations(i, c)) {
          found = false;
          break;
        }
      }
    }
    if (!found) {
      throw DataError("location " + detail::format_row(locations, i) +
                      " is not in the domain");
    }
    out[static_cast<size_t>(i)] = lo;
  }
  return out;
}

PatientImage bind_patient(const RawPatient& patient, const Domain& domain) {
  if (patient.locations.cols() != domain.dim) {
    throw DataError("patient '" + patient.id + "' has dimension " +
                    std::to_string(patient.locations.cols()) +
                    " but the domain has dimension " +
                    std::to_string(domain.dim));
  }
  std::vector<Index> idx = incidence(patient.locations, domain);

  std::vector<Index> order(idx.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return idx[a] < idx[b]; });

  PatientImage img;
  img.id = patient.id;
  img.indices.resize(idx.size());
  img.values.resize(static_cast<Index>(idx.size()));
  for (size_t k = 0; k < order.size(); ++k) {
    img.indices[k] = idx[static_cast<size_t>(order[k])];
    img.values(static_cast<Index>(k)) = patient.values(order[k]);
  }
  for (size_t k = 1; k < img.indices.size(); ++k) {
    if (img.indices[k] == img.indices[k - 1]) {
      throw DataError("patient '" + patient.id +
                      "' maps two observations to the same domain site");
    }
  }
  return img;
}

DetrendedPatient detrend(const PatientImage& patient) {
  if (patient.n_obs() == 0) {
    throw DataError("patient '" + patient.id + "' has no observations");
  }
  DetrendedPatient out;
  out.id = patient.id;
  out.mu_hat = patient.values.mean();
  out.z_tilde = patient.values.array() - out.mu_hat;
  out.indices = patient.indices;
  return out;
}

Matrix center_locations(const Matrix& locations) {
  Matrix out = locations;
  out.rowwise() -= locations.colwise().mean();
  return out;
}

}  // namespace spdecomp
