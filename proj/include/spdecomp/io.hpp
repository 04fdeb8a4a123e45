#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "spdecomp/em.hpp"
#include "spdecomp/features.hpp"
#include "spdecomp/simulate.hpp"
#include "spdecomp/types.hpp"

namespace spdecomp {

// ---------------------------------------------------------------------------
// Patient data files: delimited text with header x[,y[,z]],value (comma, tab,
// or semicolon delimited; one row per observed pixel/voxel centroid).
// ---------------------------------------------------------------------------

RawPatient read_patient_file(const std::string& path, int expected_dim,
                             const std::string& patient_id);

void write_patient_file(const std::string& path, const Matrix& locations,
                        const Vector& values);

// ---------------------------------------------------------------------------
// Dataset manifest (JSON): format "spdecomp-manifest", version 1, dimension,
// optional centering flag, and the patient id -> data file listing. Paths are
// resolved relative to the manifest's directory.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string path;  // resolved
};

struct Manifest {
  int version = 1;
  int dim = 0;
  bool center = false;
  std::vector<ManifestEntry> patients;
};

Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& manifest);

// Reads every patient file in the manifest (applying centering when asked).
std::vector<RawPatient> read_dataset(const Manifest& manifest);

// ---------------------------------------------------------------------------
// Model container (JSON): domain, basis payload truncated to K*, fitted
// (M, sigma2) with diagnostics, and the decomposition. Floating-point
// payloads are stored as hexadecimal float strings (or base64 little-endian
// doubles with binary_payload) so a load reproduces scores bit-exactly.
// ---------------------------------------------------------------------------

struct ModelFile {
  int version = 1;
  bool center = false;
  BasisSet basis;  // kmax == K*
  ModelFit fit;    // fit.K == K*
  Index H_star = 0;
  double noise_floor = 0;
  Vector lambdas;  // H*
  Matrix U_hat;    // K* x H*
  std::vector<KDiagnostics> diagnostics;

  Decomposition decomposition() const;
};

// Assembles the persistable model from a fit at K* and its decomposition
// (truncating the basis columns beyond K*).
ModelFile make_model_file(const BasisSet& basis, const ModelFit& fit,
                          const Decomposition& dec,
                          std::vector<KDiagnostics> diagnostics, bool center);

void save_model(const ModelFile& model, const std::string& path,
                bool binary_payload = false);
ModelFile load_model(const std::string& path);

// ---------------------------------------------------------------------------
// Delimited-text emitters. Every writer prefixes '#' comment lines from
// `header` (used for the CLI's reproducibility headers); readers skip them.
// All numbers are written with round-trip precision.
// ---------------------------------------------------------------------------

void write_feature_table(std::ostream& os,
                         const std::vector<FeatureVector>& features,
                         const std::vector<std::string>& header);

struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<std::string> columns;  // "mu_hat", "theta_1", ...
  Matrix values;                     // rows align with ids
};

FeatureTable read_feature_table(const std::string& path);

void write_diagnostics_table(std::ostream& os,
                             const std::vector<KDiagnostics>& diagnostics,
                             const std::vector<std::string>& header);

void write_summary_table(std::ostream& os,
                         const std::vector<CellSummary>& cells,
                         const std::vector<std::string>& header,
                         bool with_timing);

void write_correlation_report(std::ostream& os,
                              const CorrelationReport& report,
                              const std::vector<std::string>& header);

// A scatter arranged on its product grid: unique sorted x (columns) and y
// (rows); cells without a sample are NaN. Throws DataError when two samples
// land on the same cell.
struct GriddedScatter {
  Vector xs;
  Vector ys;
  Matrix values;  // ys.size() rows, xs.size() cols
};

GriddedScatter grid_from_scatter(const Matrix& locations,
                                 const Vector& values);

// Labeled grid: first row lists x coordinates, each row starts with its y.
void write_grid(std::ostream& os, const GriddedScatter& grid,
                const std::vector<std::string>& header);

// Round-trip decimal text for a double ("%.17g", with nan/inf spelled out).
std::string format_double(double v);

}  // namespace spdecomp
