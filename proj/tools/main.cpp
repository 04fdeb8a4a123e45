#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spdecomp/basis.hpp"
#include "spdecomp/domain.hpp"
#include "spdecomp/em.hpp"
#include "spdecomp/errors.hpp"
#include "spdecomp/features.hpp"
#include "spdecomp/io.hpp"
#include "spdecomp/simulate.hpp"
#include "spdecomp/types.hpp"

namespace {

using namespace spdecomp;

void with_output(const std::string& path,
                 const std::function<void(std::ostream&)>& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write output file: " + path);
  fn(out);
  if (!out) throw DataError("failed writing output file: " + path);
}

std::string yesno(bool b) { return b ? "yes" : "no"; }

std::string join_ints(const std::vector<Index>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

std::vector<DetrendedPatient> detrend_all(const std::vector<RawPatient>& raws,
                                          const Domain& domain) {
  std::vector<DetrendedPatient> out;
  out.reserve(raws.size());
  for (const RawPatient& raw : raws) {
    out.push_back(detrend(bind_patient(raw, domain)));
  }
  return out;
}

// Resolves the manifest's centering flag against explicit CLI overrides.
bool resolve_center(bool manifest_center, bool force_on, bool force_off) {
  if (force_on && force_off) {
    throw UsageError("--center and --no-center are mutually exclusive");
  }
  if (force_on) return true;
  if (force_off) return false;
  return manifest_center;
}

// --- fit --------------------------------------------------------------------

struct FitArgs {
  std::string manifest_path;
  std::string out_path;
  std::string diagnostics_path;
  Index kmax = 0;
  Index fixed_k = 0;
  std::vector<Index> candidates;
  std::string scan = "ladder";
  double tol = 1e-6;
  int max_iter = 500;
  int threads = 1;
  double hstar_floor = kNoiseFloorMultDefault;
  bool center_on = false;
  bool center_off = false;
  bool binary = false;
};

void run_fit(const FitArgs& args) {
  Manifest manifest = read_manifest(args.manifest_path);
  manifest.center =
      resolve_center(manifest.center, args.center_on, args.center_off);

  if (args.fixed_k > 0 && !args.candidates.empty()) {
    throw UsageError("--k and --candidates are mutually exclusive");
  }

  const std::vector<RawPatient> raws = read_dataset(manifest);
  const Domain domain = build_domain(raws);
  const BasisSet basis = build_basis(domain, args.kmax);
  const std::vector<DetrendedPatient> patients = detrend_all(raws, domain);
  const FitData data = prepare_fit_data(patients, basis, 0, args.threads);

  SelectOptions select;
  select.mode = args.scan == "full" ? ScanMode::full : ScanMode::ladder;
  select.candidates = args.candidates;
  if (args.fixed_k > 0) select.candidates = {args.fixed_k};
  select.em.tol = args.tol;
  select.em.max_iter = args.max_iter;
  const SelectResult result = select_K(data, domain.dim, select);

  DecomposeOptions dopts;
  dopts.noise_floor_mult = args.hstar_floor;
  const Decomposition dec = decompose(result.best, basis, dopts);

  const ModelFile model = make_model_file(basis, result.best, dec,
                                          result.diagnostics, manifest.center);
  save_model(model, args.out_path, args.binary);

  std::vector<std::string> header{
      "spdecomp fit",
      "manifest: " + args.manifest_path,
      "center: " + yesno(manifest.center),
      "kmax: " + std::to_string(basis.kmax),
      select.candidates.empty() ? "scan: " + args.scan
                                : "candidates: " + join_ints(select.candidates),
      "tol: " + format_double(args.tol),
      "max_iter: " + std::to_string(args.max_iter),
      "hstar_floor: " + format_double(args.hstar_floor),
  };
  if (!args.diagnostics_path.empty()) {
    with_output(args.diagnostics_path, [&](std::ostream& os) {
      write_diagnostics_table(os, result.diagnostics, header);
    });
  }

  std::cout << "patients: " << data.N << "\n";
  std::cout << "domain_size: " << domain.size() << "\n";
  std::cout << "dim: " << domain.dim << "\n";
  std::cout << "kmax: " << basis.kmax << "\n";
  std::cout << "basis_truncated: " << yesno(basis.truncated) << "\n";
  std::cout << "K_star: " << result.K_star << "\n";
  std::cout << "aic: " << format_double(result.best.aic) << "\n";
  std::cout << "loglik: " << format_double(result.best.loglik) << "\n";
  std::cout << "sigma2: " << format_double(result.best.sigma2) << "\n";
  std::cout << "converged: " << yesno(result.best.converged) << "\n";
  std::cout << "H_star: " << dec.H_star << "\n";
  if (dec.H_star > 0) {
    std::cout << "lambdas:";
    for (Index h = 0; h < dec.H_star; ++h) {
      std::cout << ' ' << format_double(dec.lambdas(h));
    }
    std::cout << "\n";
  }
  std::cout << "model: " << args.out_path << "\n";
}

// --- extract ------------------------------------------------------------------

struct ExtractArgs {
  std::string model_path;
  std::string manifest_path;
  std::string out_path;
};

void run_extract(const ExtractArgs& args) {
  const ModelFile model = load_model(args.model_path);
  const Decomposition dec = model.decomposition();

  Manifest manifest = read_manifest(args.manifest_path);
  if (manifest.dim != model.basis.dim) {
    throw DataError("manifest dimension " + std::to_string(manifest.dim) +
                    " does not match model dimension " +
                    std::to_string(model.basis.dim));
  }
  manifest.center = model.center;  // the model records the training transform
  const std::vector<RawPatient> raws = read_dataset(manifest);

  std::vector<FeatureVector> features;
  features.reserve(raws.size());
  for (const RawPatient& raw : raws) {
    features.push_back(
        extract_features(dec, detrend(bind_patient(raw, dec.basis.domain))));
  }

  const std::vector<std::string> header{
      "spdecomp extract",
      "model: " + args.model_path,
      "manifest: " + args.manifest_path,
      "center: " + yesno(model.center),
      "H_star: " + std::to_string(dec.H_star),
  };
  with_output(args.out_path, [&](std::ostream& os) {
    write_feature_table(os, features, header);
  });
}

// --- score --------------------------------------------------------------------

struct ScoreArgs {
  std::string model_path;
  std::string manifest_path;
  std::string patient_path;
  std::string patient_id;
  std::string out_path;
};

void run_score(const ScoreArgs& args) {
  if (args.manifest_path.empty() == args.patient_path.empty()) {
    throw UsageError("score needs exactly one of --manifest or --patient");
  }
  const ModelFile model = load_model(args.model_path);
  const Decomposition dec = model.decomposition();

  std::vector<RawPatient> raws;
  if (!args.manifest_path.empty()) {
    Manifest manifest = read_manifest(args.manifest_path);
    if (manifest.dim != model.basis.dim) {
      throw DataError("manifest dimension " + std::to_string(manifest.dim) +
                      " does not match model dimension " +
                      std::to_string(model.basis.dim));
    }
    manifest.center = model.center;
    raws = read_dataset(manifest);
  } else {
    std::string id = args.patient_id;
    if (id.empty()) {
      id = std::filesystem::path(args.patient_path).stem().string();
    }
    RawPatient raw = read_patient_file(args.patient_path, model.basis.dim, id);
    if (model.center) raw.locations = center_locations(raw.locations);
    raws.push_back(std::move(raw));
  }

  std::vector<FeatureVector> features;
  features.reserve(raws.size());
  for (const RawPatient& raw : raws) {
    features.push_back(score_new_patient(dec, raw));
  }

  const std::vector<std::string> header{
      "spdecomp score",
      "model: " + args.model_path,
      "input: " + (args.manifest_path.empty() ? args.patient_path
                                              : args.manifest_path),
      "center: " + yesno(model.center),
      "H_star: " + std::to_string(dec.H_star),
  };
  with_output(args.out_path, [&](std::ostream& os) {
    write_feature_table(os, features, header);
  });
}

// --- predict ------------------------------------------------------------------

struct PredictArgs {
  std::string model_path;
  std::string manifest_path;
  std::string out_dir;
  std::string targets_path;
  int grid_exp = -1;
  bool observed_only = false;
  bool grid_output = false;
};

void run_predict(const PredictArgs& args) {
  const int target_modes = (!args.targets_path.empty() ? 1 : 0) +
                           (args.grid_exp >= 0 ? 1 : 0) +
                           (args.observed_only ? 1 : 0);
  if (target_modes > 1) {
    throw UsageError(
        "choose at most one of --targets, --grid-exp, --observed-only");
  }

  const ModelFile model = load_model(args.model_path);
  const Decomposition dec = model.decomposition();
  const int dim = model.basis.dim;
  if (args.grid_output && dim != 2) {
    throw UsageError("--grid output needs a two-dimensional model");
  }

  Manifest manifest = read_manifest(args.manifest_path);
  if (manifest.dim != dim) {
    throw DataError("manifest dimension " + std::to_string(manifest.dim) +
                    " does not match model dimension " + std::to_string(dim));
  }
  manifest.center = model.center;
  const std::vector<RawPatient> raws = read_dataset(manifest);

  std::string target_desc = "domain";
  Matrix shared_targets;
  if (!args.targets_path.empty()) {
    // Same layout as a patient file; the value column is ignored.
    shared_targets =
        read_patient_file(args.targets_path, dim, "targets").locations;
    target_desc = "file " + args.targets_path;
  } else if (args.grid_exp >= 0) {
    if (dim != 2) throw UsageError("--grid-exp needs a two-dimensional model");
    if (args.grid_exp < 1 || args.grid_exp > 12) {
      throw UsageError("--grid-exp must be in [1, 12]");
    }
    const Index side = Index(1) << args.grid_exp;
    shared_targets.resize(side * side, 2);
    for (Index iy = 0; iy < side; ++iy) {
      for (Index ix = 0; ix < side; ++ix) {
        shared_targets(iy * side + ix, 0) =
            (static_cast<double>(ix) + 0.5) / static_cast<double>(side);
        shared_targets(iy * side + ix, 1) =
            (static_cast<double>(iy) + 0.5) / static_cast<double>(side);
      }
    }
    target_desc = "grid-exp " + std::to_string(args.grid_exp);
  } else if (args.observed_only) {
    target_desc = "observed";
  } else {
    shared_targets = dec.basis.domain.locations;
  }

  std::filesystem::create_directories(args.out_dir);
  for (const RawPatient& raw : raws) {
    const DetrendedPatient det = detrend(bind_patient(raw, dec.basis.domain));
    const Matrix& targets =
        args.observed_only ? raw.locations : shared_targets;
    const Vector pred = predict_y(dec, det, targets);

    const std::vector<std::string> header{
        "spdecomp predict",
        "model: " + args.model_path,
        "patient: " + raw.id,
        "targets: " + target_desc,
    };
    const std::filesystem::path base =
        std::filesystem::path(args.out_dir) / (raw.id + "_pred");
    if (args.grid_output) {
      const GriddedScatter grid = grid_from_scatter(targets, pred);
      with_output((base.string() + "_grid.tsv"),
                  [&](std::ostream& os) { write_grid(os, grid, header); });
    } else {
      // Patient-file layout; prepend the reproducibility header by hand.
      std::ofstream out(base.string() + ".csv", std::ios::binary);
      if (!out) {
        throw DataError("cannot write prediction file: " + base.string() +
                        ".csv");
      }
      for (const std::string& line : header) out << "# " << line << "\n";
      static const char* kAxes[] = {"x", "y", "z"};
      for (int c = 0; c < dim; ++c) out << kAxes[c] << ',';
      out << "value\n";
      for (Index r = 0; r < targets.rows(); ++r) {
        for (int c = 0; c < dim; ++c) {
          out << format_double(targets(r, c)) << ',';
        }
        out << format_double(pred(r)) << "\n";
      }
      if (!out) {
        throw DataError("failed writing prediction file: " + base.string() +
                        ".csv");
      }
    }
    std::cout << raw.id << ": " << targets.rows() << " predictions\n";
  }
}

// --- basis --------------------------------------------------------------------

struct BasisArgs {
  std::string manifest_path;
  std::string model_path;
  std::string out_path;
  std::string out_dir;
  std::vector<Index> components;
  Index kmax = 0;
  bool center_on = false;
  bool center_off = false;
};

void run_basis(const BasisArgs& args) {
  if (args.manifest_path.empty() == args.model_path.empty()) {
    throw UsageError("basis needs exactly one of a manifest or --model");
  }
  BasisSet basis;
  bool centered = false;
  if (!args.model_path.empty()) {
    if (args.center_on || args.center_off || args.kmax > 0) {
      throw UsageError(
          "--center/--no-center/--kmax only apply when building from a "
          "manifest");
    }
    const ModelFile model = load_model(args.model_path);
    basis = model.basis;
    centered = model.center;
  } else {
    Manifest manifest = read_manifest(args.manifest_path);
    manifest.center =
        resolve_center(manifest.center, args.center_on, args.center_off);
    const std::vector<RawPatient> raws = read_dataset(manifest);
    const Domain domain = build_domain(raws);
    basis = build_basis(domain, args.kmax);
    centered = manifest.center;
  }
  const Domain& domain = basis.domain;

  std::cout << "domain_size: " << domain.size() << "\n";
  std::cout << "dim: " << domain.dim << "\n";
  std::cout << "kmax: " << basis.kmax << "\n";
  std::cout << "basis_truncated: " << yesno(basis.truncated) << "\n";
  std::cout << "spline_functions: " << basis.n_eig() << "\n";

  const std::vector<std::string> header{
      "spdecomp basis",
      "source: " + (args.model_path.empty() ? args.manifest_path
                                            : args.model_path),
      "center: " + yesno(centered),
      "kmax: " + std::to_string(basis.kmax),
  };
  if (!args.out_path.empty()) {
    with_output(args.out_path, [&](std::ostream& os) {
      for (const std::string& line : header) os << "# " << line << "\n";
      os << "k\talpha\n";
      for (Index i = 0; i < basis.alphas.size(); ++i) {
        os << (domain.dim + 2 + i) << '\t' << format_double(basis.alphas(i))
           << "\n";
      }
    });
  }

  if (!args.components.empty()) {
    if (args.out_dir.empty()) {
      throw UsageError("--components needs --out-dir");
    }
    std::filesystem::create_directories(args.out_dir);
    const Matrix F = basis.domain_matrix(basis.kmax);
    for (Index k : args.components) {
      if (k < 1 || k > basis.kmax) {
        throw UsageError("component index " + std::to_string(k) +
                         " is outside [1, " + std::to_string(basis.kmax) +
                         "]");
      }
      const Vector values = F.col(k - 1);
      const std::filesystem::path base =
          std::filesystem::path(args.out_dir) /
          ("basis_" + std::to_string(k));
      std::vector<std::string> file_header = header;
      file_header.push_back("basis_function: " + std::to_string(k));
      if (domain.dim == 2) {
        const GriddedScatter grid =
            grid_from_scatter(domain.locations, values);
        with_output(base.string() + "_grid.tsv", [&](std::ostream& os) {
          write_grid(os, grid, file_header);
        });
      } else {
        write_patient_file(base.string() + ".csv", domain.locations, values);
      }
    }
  }
}

// --- simulate -----------------------------------------------------------------

struct SimulateArgs {
  std::string preset;
  std::vector<Index> Ns;
  std::vector<int> Ls;
  std::vector<double> taus;
  std::vector<int> ps;
  int replicates = 0;
  double missing_lo = 0.25;
  double missing_hi = 0.6;
  std::uint64_t seed = 0;
  int threads = 1;
  Index kmax = 0;
  double hstar_floor = kNoiseFloorMultDefault;
  bool timing = false;
  std::string out_path;
  std::string pivot_dir;
  std::string write_data_dir;
  int replicate = 0;
};

void write_sim_dataset(const SimConfig& config, int replicate,
                       const std::string& dir) {
  std::mt19937_64 rng = replicate_stream(config, replicate);
  const SimTruth truth = generate_signal(config, rng);

  std::filesystem::create_directories(dir);
  Manifest manifest;
  manifest.dim = 2;
  manifest.center = false;
  const std::filesystem::path base(dir);
  for (Index j = 0; j < config.N; ++j) {
    const SimPatient& p = truth.patients[static_cast<size_t>(j)];
    const std::string id = "p" + std::to_string(j);
    write_patient_file((base / (id + ".csv")).string(), p.locations, p.z);
    write_patient_file((base / (id + "_truth.csv")).string(), p.locations,
                       p.y_true);
    manifest.patients.push_back({id, id + ".csv"});
  }
  write_manifest((base / "manifest.json").string(), manifest);
  std::cout << "dataset: " << (base / "manifest.json").string() << "\n";
  std::cout << "patients: " << config.N << "\n";
  std::cout << "active_centers: " << join_list(truth.active) << "\n";
}

void run_simulate(const SimulateArgs& args_in, bool explicit_replicates) {
  SimulateArgs args = args_in;

  // Preset defaults; explicitly passed lists override them.
  std::vector<Index> Ns{30};
  std::vector<int> Ls{5};
  std::vector<double> taus{2.0};
  std::vector<int> ps{0};
  int replicates = 30;
  if (args.preset == "smoke") {
    Ns = {8};
    Ls = {3};
    ps = {0, 2};
    replicates = 2;
  } else if (args.preset == "small") {
    Ns = {15};
    Ls = {3, 4};
    ps = {0, 2, 4};
    replicates = 5;
  } else if (args.preset == "desk") {
    Ns = {30};
    Ls = {3, 4, 5};
    ps = {0, 2, 4, 6};
    replicates = 30;
  } else if (args.preset == "full") {
    Ns = {30, 60};
    Ls = {3, 4, 5, 6};
    taus = {1.0, 2.0, 4.0};
    ps = {0, 2, 4, 6};
    replicates = 100;
  } else if (!args.preset.empty()) {
    throw UsageError("unknown preset '" + args.preset +
                     "' (smoke, small, desk, full)");
  }
  if (!args.Ns.empty()) Ns = args.Ns;
  if (!args.Ls.empty()) Ls = args.Ls;
  if (!args.taus.empty()) taus = args.taus;
  if (!args.ps.empty()) ps = args.ps;
  if (explicit_replicates) replicates = args.replicates;

  std::vector<SimConfig> cells;
  for (Index N : Ns) {
    for (int L : Ls) {
      for (double tau : taus) {
        for (int p : ps) {
          SimConfig c;
          c.N = N;
          c.L = L;
          c.tau = tau;
          c.p = p;
          c.missing_lo = args.missing_lo;
          c.missing_hi = args.missing_hi;
          c.replicates = replicates;
          c.seed = args.seed;
          cells.push_back(c);
        }
      }
    }
  }

  if (!args.write_data_dir.empty()) {
    if (cells.size() != 1) {
      throw UsageError("--write-data needs exactly one (N, L, tau, p) cell");
    }
    if (args.replicate < 0 || args.replicate >= replicates) {
      throw UsageError("--replicate must be in [0, replicates)");
    }
    write_sim_dataset(cells.front(), args.replicate, args.write_data_dir);
    return;
  }

  ExperimentOptions options;
  options.threads = args.threads;
  options.kmax = args.kmax;
  options.decompose.noise_floor_mult = args.hstar_floor;
  const std::vector<CellSummary> summaries = run_experiment(cells, options);

  const std::vector<std::string> header{
      "spdecomp simulate",
      "N: " + join_list(Ns),
      "L: " + join_list(Ls),
      "tau: " + join_list(taus),
      "p: " + join_list(ps),
      "replicates: " + std::to_string(replicates),
      "missing: [" + format_double(args.missing_lo) + ", " +
          format_double(args.missing_hi) + "]",
      "seed: " + std::to_string(args.seed),
      "kmax: " + (args.kmax > 0 ? std::to_string(args.kmax) : "default"),
      "hstar_floor: " + format_double(args.hstar_floor),
  };
  with_output(args.out_path, [&](std::ostream& os) {
    write_summary_table(os, summaries, header, args.timing);
  });

  // Fig. 4-style pivots: one median-H grid per (N, tau), L down, p across.
  if (!args.pivot_dir.empty()) {
    std::filesystem::create_directories(args.pivot_dir);
    for (Index N : Ns) {
      for (double tau : taus) {
        Matrix locations(static_cast<Index>(Ls.size() * ps.size()), 2);
        Vector medians(locations.rows());
        Index row = 0;
        for (const CellSummary& cell : summaries) {
          if (cell.config.N != N || cell.config.tau != tau) continue;
          locations(row, 0) = static_cast<double>(cell.config.p);
          locations(row, 1) = static_cast<double>(cell.config.L);
          medians(row) = cell.median_H;
          ++row;
        }
        const GriddedScatter grid = grid_from_scatter(locations, medians);
        std::vector<std::string> pivot_header = header;
        pivot_header.push_back("pivot: median_H, N=" + std::to_string(N) +
                               ", tau=" + format_double(tau) +
                               ", rows L, columns p");
        const std::string name = "median_H_N" + std::to_string(N) + "_tau" +
                                 format_double(tau) + ".tsv";
        with_output((std::filesystem::path(args.pivot_dir) / name).string(),
                    [&](std::ostream& os) {
                      write_grid(os, grid, pivot_header);
                    });
      }
    }
  }
}

// --- report-correlations --------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> tables;
  std::string out_path;
  bool include_mu = false;
};

void run_report(const ReportArgs& args) {
  std::vector<std::pair<std::string, Matrix>> sets;
  std::vector<std::string> first_ids;
  for (const std::string& path : args.tables) {
    const FeatureTable table = read_feature_table(path);
    if (sets.empty()) {
      first_ids = table.ids;
    } else if (table.ids != first_ids) {
      throw DataError("feature tables do not list the same patients in the "
                      "same order: " +
                      path);
    }
    std::vector<Index> cols;
    for (size_t c = 0; c < table.columns.size(); ++c) {
      const bool is_theta = table.columns[c].rfind("theta_", 0) == 0;
      const bool is_mu = table.columns[c] == "mu_hat";
      if (is_theta || (args.include_mu && is_mu)) {
        cols.push_back(static_cast<Index>(c));
      }
    }
    if (cols.empty()) {
      throw DataError("no feature columns selected from " + path);
    }
    Matrix m(table.values.rows(), static_cast<Index>(cols.size()));
    for (size_t c = 0; c < cols.size(); ++c) {
      m.col(static_cast<Index>(c)) = table.values.col(cols[c]);
    }
    sets.emplace_back(std::filesystem::path(path).stem().string(),
                      std::move(m));
  }

  const CorrelationReport report = correlation_report(sets);
  std::vector<std::string> header{"spdecomp report-correlations"};
  for (const std::string& path : args.tables) header.push_back("table: " + path);
  header.push_back(std::string("columns: ") +
                   (args.include_mu ? "mu_hat,theta_*" : "theta_*"));
  with_output(args.out_path, [&](std::ostream& os) {
    write_correlation_report(os, report, header);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Decomposes irregularly observed intensity images into shared "
      "multi-resolution spatial components with patient-specific weights."};
  app.set_version_flag("--version", "spdecomp 1.0.0");
  app.require_subcommand(1);

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand(
      "fit", "Fit the shared-component model to a dataset manifest");
  fit_cmd->add_option("manifest", fit.manifest_path, "Dataset manifest (JSON)")
      ->required();
  fit_cmd->add_option("--out", fit.out_path, "Model output path (JSON)")
      ->required();
  fit_cmd->add_option("--kmax", fit.kmax,
                      "Total basis size (0 = default rule)");
  fit_cmd->add_option("--k", fit.fixed_k,
                      "Fit this K only, skipping the AIC scan");
  fit_cmd
      ->add_option("--candidates", fit.candidates,
                   "Explicit K candidates (overrides --scan)")
      ->delimiter(',');
  fit_cmd->add_option("--threads", fit.threads,
                      "Worker threads for per-patient statistics")
      ->capture_default_str();
  fit_cmd->add_option("--scan", fit.scan, "Candidate scan: ladder or full")
      ->check(CLI::IsMember({"ladder", "full"}));
  fit_cmd->add_option("--tol", fit.tol, "EM relative loglik tolerance")
      ->capture_default_str();
  fit_cmd->add_option("--max-iter", fit.max_iter, "EM iteration cap")
      ->capture_default_str();
  fit_cmd->add_option("--hstar-floor", fit.hstar_floor,
                      "Noise-floor multiplier for retained eigenvalues "
                      "(0 disables)")
      ->capture_default_str();
  fit_cmd->add_flag("--center", fit.center_on,
                    "Center each patient's locations (override manifest)");
  fit_cmd->add_flag("--no-center", fit.center_off,
                    "Do not center locations (override manifest)");
  fit_cmd->add_flag("--binary", fit.binary,
                    "Store model arrays as base64 doubles (smaller files)");
  fit_cmd->add_option("--diagnostics", fit.diagnostics_path,
                      "Write the per-K scan table here");
  fit_cmd->callback([&] { run_fit(fit); });

  ExtractArgs extract;
  CLI::App* extract_cmd = app.add_subcommand(
      "extract", "Extract per-patient features under a fitted model");
  extract_cmd->add_option("model", extract.model_path, "Model file")
      ->required();
  extract_cmd
      ->add_option("manifest", extract.manifest_path, "Dataset manifest")
      ->required();
  extract_cmd->add_option("--out", extract.out_path,
                          "Feature table output (default stdout)");
  extract_cmd->callback([&] { run_extract(extract); });

  ScoreArgs score;
  CLI::App* score_cmd = app.add_subcommand(
      "score", "Score new patients (locations may fall outside the training "
               "domain)");
  score_cmd->add_option("model", score.model_path, "Model file")->required();
  score_cmd->add_option("--manifest", score.manifest_path,
                        "Manifest of patients to score");
  score_cmd->add_option("--patient", score.patient_path,
                        "Single patient data file");
  score_cmd->add_option("--id", score.patient_id,
                        "Patient id for --patient (default: file stem)");
  score_cmd->add_option("--out", score.out_path,
                        "Feature table output (default stdout)");
  score_cmd->callback([&] { run_score(score); });

  PredictArgs predict;
  CLI::App* predict_cmd = app.add_subcommand(
      "predict", "Reconstruct each patient's image (gap filling included)");
  predict_cmd->add_option("model", predict.model_path, "Model file")
      ->required();
  predict_cmd->add_option("manifest", predict.manifest_path,
                          "Dataset manifest")
      ->required();
  predict_cmd->add_option("--out-dir", predict.out_dir,
                          "Directory for per-patient predictions")
      ->required();
  predict_cmd->add_option("--targets", predict.targets_path,
                          "Target locations file (patient layout; value "
                          "column ignored)");
  predict_cmd->add_option("--grid-exp", predict.grid_exp,
                          "Predict on the 2^L x 2^L unit-square pixel grid");
  predict_cmd->add_flag("--observed-only", predict.observed_only,
                        "Predict only at each patient's observed locations");
  predict_cmd->add_flag("--grid", predict.grid_output,
                        "Write labeled 2D grids (missing cells become nan)");
  predict_cmd->callback([&] { run_predict(predict); });

  BasisArgs basis;
  CLI::App* basis_cmd = app.add_subcommand(
      "basis", "Build the multi-resolution basis and inspect it");
  basis_cmd->add_option("manifest", basis.manifest_path, "Dataset manifest");
  basis_cmd->add_option("--model", basis.model_path,
                        "Read the basis from a fitted model instead");
  basis_cmd->add_option("--kmax", basis.kmax,
                        "Total basis size (0 = default rule)");
  basis_cmd->add_flag("--center", basis.center_on,
                      "Center each patient's locations (override manifest)");
  basis_cmd->add_flag("--no-center", basis.center_off,
                      "Do not center locations (override manifest)");
  basis_cmd->add_option("--out", basis.out_path,
                        "Write the eigenvalue table here");
  basis_cmd
      ->add_option("--components", basis.components,
                   "1-based basis function indices to dump")
      ->delimiter(',');
  basis_cmd->add_option("--out-dir", basis.out_dir,
                        "Directory for dumped basis functions");
  basis_cmd->callback([&] { run_basis(basis); });

  SimulateArgs simulate;
  CLI::App* sim_cmd = app.add_subcommand(
      "simulate", "Run the synthetic-data experiment grid");
  sim_cmd->add_option("--grid,--preset", simulate.preset,
                      "Cell grid preset: smoke, small, desk, or full "
                      "(full is the complete study grid; hours of compute)");
  sim_cmd->add_option("--N", simulate.Ns, "Patients per replicate")
      ->delimiter(',');
  sim_cmd->add_option("--L", simulate.Ls, "Grid exponents (2^L x 2^L pixels)")
      ->delimiter(',');
  sim_cmd->add_option("--tau", simulate.taus, "Weight variance levels")
      ->delimiter(',');
  sim_cmd->add_option("--p", simulate.ps, "Active center counts")
      ->delimiter(',');
  CLI::Option* reps_opt = sim_cmd->add_option(
      "--replicates", simulate.replicates, "Replicates per cell");
  sim_cmd->add_option("--missing-lo", simulate.missing_lo,
                      "Missing-fraction lower bound")
      ->capture_default_str();
  sim_cmd->add_option("--missing-hi", simulate.missing_hi,
                      "Missing-fraction upper bound")
      ->capture_default_str();
  sim_cmd->add_option("--seed", simulate.seed, "Experiment seed")
      ->capture_default_str();
  sim_cmd->add_option("--threads", simulate.threads,
                      "Worker threads over replicates")
      ->capture_default_str();
  sim_cmd->add_option("--kmax", simulate.kmax,
                      "Total basis size (0 = default rule)");
  sim_cmd->add_option("--hstar-floor", simulate.hstar_floor,
                      "Noise-floor multiplier for retained eigenvalues")
      ->capture_default_str();
  sim_cmd->add_flag("--timing", simulate.timing,
                    "Fill the seconds column with wall-clock times (off by "
                    "default so identical runs emit identical bytes)");
  sim_cmd->add_option("--out", simulate.out_path,
                      "Summary table output (default stdout)");
  sim_cmd->add_option("--pivot-dir", simulate.pivot_dir,
                      "Write per-(N, tau) median-H pivot grids here");
  sim_cmd->add_option("--write-data", simulate.write_data_dir,
                      "Write one replicate's dataset to this directory "
                      "instead of running the experiment");
  sim_cmd->add_option("--replicate", simulate.replicate,
                      "Replicate index for --write-data")
      ->capture_default_str();
  sim_cmd->callback(
      [&] { run_simulate(simulate, reps_opt->count() > 0); });

  ReportArgs report;
  CLI::App* report_cmd = app.add_subcommand(
      "report-correlations",
      "Histogram pairwise |correlations| of feature tables");
  report_cmd
      ->add_option("tables", report.tables,
                   "Feature tables (each is one column set)")
      ->required();
  report_cmd->add_flag("--include-mu", report.include_mu,
                       "Include the mu_hat column");
  report_cmd->add_option("--out", report.out_path,
                         "Report output (default stdout)");
  report_cmd->callback([&] { run_report(report); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(spdecomp::ExitCode::usage);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(spdecomp::exit_code_for(e));
  }
  return 0;
}
