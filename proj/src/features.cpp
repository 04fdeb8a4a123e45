#include "spdecomp/features.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "spdecomp/errors.hpp"

namespace spdecomp {

namespace {

void fix_column_signs(Matrix& m) {
  for (Index k = 0; k < m.cols(); ++k) {
    Index imax = 0;
    m.col(k).cwiseAbs().maxCoeff(&imax);
    if (m(imax, k) < 0) m.col(k) = -m.col(k);
  }
}

// theta = Lambda^{1/2} (sigma2 I + Lambda^{1/2} G'G Lambda^{1/2})^{-1}
//         Lambda^{1/2} G' z   — the Woodbury form of
// Lambda G'(G Lambda G' + sigma2 I)^{-1} z, solved at H* x H*.
Vector solve_theta(const Matrix& g, const Vector& z, const Vector& lambdas,
                   double sigma2) {
  const Index h = lambdas.size();
  if (h == 0) return Vector(0);
  const Vector root = lambdas.cwiseSqrt();
  Matrix s = g.transpose() * g;
  s = root.asDiagonal() * s * root.asDiagonal();
  s.diagonal().array() += sigma2;
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) {
    throw NumericError("feature solve failed (system not positive definite)");
  }
  const Vector rhs = root.asDiagonal() * (g.transpose() * z);
  return root.asDiagonal() * llt.solve(rhs);
}

}  // namespace

Decomposition decompose(const ModelFit& fit, const BasisSet& basis,
                        const DecomposeOptions& options) {
  if (fit.K < 1 || fit.K > basis.kmax) {
    throw DataError("fit K is out of range for this basis");
  }
  if (fit.M.rows() != fit.K || fit.M.cols() != fit.K) {
    throw DataError("fit M has inconsistent shape");
  }
  if (options.noise_floor_mult < 0) {
    throw DataError("noise floor multiplier must be nonnegative");
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(fit.M);
  if (es.info() != Eigen::Success) {
    throw NumericError("eigendecomposition of M failed");
  }

  Decomposition dec;
  dec.K_star = fit.K;
  dec.sigma2 = fit.sigma2;
  dec.basis = basis;

  const Index k = fit.K;
  Vector evals(k);
  Matrix evecs(k, k);
  for (Index i = 0; i < k; ++i) {
    evals(i) = es.eigenvalues()(k - 1 - i);
    evecs.col(i) = es.eigenvectors().col(k - 1 - i);
  }

  const double lambda1 = std::max(evals.size() ? evals(0) : 0.0, 0.0);
  double floor = 1e-8 * lambda1;
  if (options.noise_floor_mult > 0 && fit.N > 0) {
    const double edge =
        1.0 + std::sqrt(static_cast<double>(k) / static_cast<double>(fit.N));
    floor = std::max(floor,
                     options.noise_floor_mult * fit.sigma2 * edge * edge);
  }
  dec.noise_floor = floor;

  Index h = 0;
  while (h < k && evals(h) > floor) ++h;
  dec.H_star = h;
  dec.lambdas = evals.head(h);
  dec.U_hat = evecs.leftCols(h);
  fix_column_signs(dec.U_hat);
  dec.G_domain = basis.domain_matrix(k) * dec.U_hat;
  return dec;
}

Matrix component_matrix(const Decomposition& dec, const Matrix& locations) {
  if (dec.H_star == 0) return Matrix(locations.rows(), 0);
  return dec.basis.matrix_at(locations, dec.K_star) * dec.U_hat;
}

double component_function(const Decomposition& dec, const Vector& s, Index h) {
  if (h < 1 || h > dec.H_star) {
    throw DataError("component index must lie in [1, H*] = [1, " +
                    std::to_string(dec.H_star) + "]; got " + std::to_string(h));
  }
  return dec.basis.at(s, dec.K_star).dot(dec.U_hat.col(h - 1));
}

double estimate_covariance(const Decomposition& dec, const Vector& s,
                           const Vector& t) {
  if (dec.H_star == 0) return 0.0;
  const Vector gs = dec.U_hat.transpose() * dec.basis.at(s, dec.K_star);
  const Vector gt = dec.U_hat.transpose() * dec.basis.at(t, dec.K_star);
  return (dec.lambdas.array() * gs.array() * gt.array()).sum();
}

FeatureVector extract_features(const Decomposition& dec,
                               const DetrendedPatient& patient) {
  FeatureVector out;
  out.patient_id = patient.id;
  out.mu_hat = patient.mu_hat;
  if (dec.H_star == 0) {
    out.theta.resize(0);
    return out;
  }
  Matrix gj(patient.n_obs(), dec.H_star);
  for (Index i = 0; i < patient.n_obs(); ++i) {
    const Index row = patient.indices[static_cast<size_t>(i)];
    if (row < 0 || row >= dec.basis.n()) {
      throw DataError("patient '" + patient.id +
                      "' references a location outside the domain");
    }
    gj.row(i) = dec.G_domain.row(row);
  }
  out.theta = solve_theta(gj, patient.z_tilde, dec.lambdas, dec.sigma2);
  return out;
}

Vector predict_y(const Decomposition& dec, const DetrendedPatient& patient,
                 const Matrix& targets) {
  const FeatureVector f = extract_features(dec, patient);
  Vector out = Vector::Constant(targets.rows(), f.mu_hat);
  if (dec.H_star > 0) out += component_matrix(dec, targets) * f.theta;
  return out;
}

FeatureVector score_new_patient(const Decomposition& dec,
                                const RawPatient& patient) {
  if (patient.locations.rows() == 0) {
    throw DataError("new patient '" + patient.id + "' has no observations");
  }
  if (patient.values.size() != patient.locations.rows()) {
    throw DataError("new patient '" + patient.id +
                    "' has mismatched locations and values");
  }
  if (!patient.locations.allFinite() || !patient.values.allFinite()) {
    throw DataError("new patient '" + patient.id + "' has non-finite entries");
  }
  FeatureVector out;
  out.patient_id = patient.id;
  out.mu_hat = patient.values.mean();
  if (dec.H_star == 0) {
    out.theta.resize(0);
    return out;
  }
  const Vector z_tilde = patient.values.array() - out.mu_hat;
  const Matrix g0 = component_matrix(dec, patient.locations);
  out.theta = solve_theta(g0, z_tilde, dec.lambdas, dec.sigma2);
  return out;
}

CorrelationReport correlation_report(
    const std::vector<std::pair<std::string, Matrix>>& sets) {
  if (sets.empty()) throw DataError("no feature sets given");
  const Index rows = sets.front().second.rows();
  for (const auto& [label, m] : sets) {
    if (m.rows() < 2) {
      throw DataError("feature set '" + label +
                      "' needs at least 2 rows (patients)");
    }
    if (m.rows() != rows) {
      throw DataError("feature sets have mismatched row counts; rows must "
                      "align across sets");
    }
    if (!m.allFinite()) {
      throw DataError("feature set '" + label + "' has non-finite entries");
    }
  }

  CorrelationReport report;

  // Center columns and flag zero-variance ones per set.
  std::vector<Matrix> centered;
  std::vector<std::vector<bool>> usable;
  for (const auto& [label, m] : sets) {
    Matrix c = m;
    c.rowwise() -= m.colwise().mean();
    std::vector<bool> ok(static_cast<size_t>(m.cols()), true);
    for (Index h = 0; h < m.cols(); ++h) {
      const double sd = c.col(h).norm();
      if (sd <= 1e-12 * m.col(h).cwiseAbs().maxCoeff()) {
        ok[static_cast<size_t>(h)] = false;
        ++report.zero_variance_columns;
      }
    }
    centered.push_back(std::move(c));
    usable.push_back(std::move(ok));
  }

  auto bin_of = [](double r) {
    const double a = std::min(std::abs(r), 1.0);
    for (size_t b = 0; b < kCorrelationBinEdges.size(); ++b) {
      if (a < kCorrelationBinEdges[b]) return b;
    }
    return kCorrelationBinEdges.size();  // [0.9, 1]
  };

  auto correlate = [&](const Matrix& x, Index hx, const Matrix& y, Index hy) {
    return x.col(hx).dot(y.col(hy)) / (x.col(hx).norm() * y.col(hy).norm());
  };

  for (size_t a = 0; a < sets.size(); ++a) {
    CorrelationSection sec;
    sec.label = sets[a].first;
    const Matrix& x = centered[a];
    for (Index h = 0; h < x.cols(); ++h) {
      for (Index h2 = h + 1; h2 < x.cols(); ++h2) {
        if (!usable[a][static_cast<size_t>(h)] ||
            !usable[a][static_cast<size_t>(h2)]) {
          ++sec.excluded;
          continue;
        }
        ++sec.counts[bin_of(correlate(x, h, x, h2))];
        ++sec.pairs;
      }
    }
    report.sections.push_back(std::move(sec));
  }

  for (size_t a = 0; a < sets.size(); ++a) {
    for (size_t b = a + 1; b < sets.size(); ++b) {
      CorrelationSection sec;
      sec.label = sets[a].first + ":" + sets[b].first;
      const Matrix& x = centered[a];
      const Matrix& y = centered[b];
      for (Index h = 0; h < x.cols(); ++h) {
        for (Index h2 = 0; h2 < y.cols(); ++h2) {
          if (!usable[a][static_cast<size_t>(h)] ||
              !usable[b][static_cast<size_t>(h2)]) {
            ++sec.excluded;
            continue;
          }
          ++sec.counts[bin_of(correlate(x, h, y, h2))];
          ++sec.pairs;
        }
      }
      report.sections.push_back(std::move(sec));
    }
  }
  return report;
}

}  // namespace spdecomp
