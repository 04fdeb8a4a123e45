#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spdecomp/basis.hpp"
#include "spdecomp/domain.hpp"
#include "spdecomp/em.hpp"
#include "spdecomp/errors.hpp"
#include "spdecomp/features.hpp"
#include "spdecomp/io.hpp"
#include "spdecomp/simulate.hpp"

namespace py = pybind11;
using namespace spdecomp;

namespace {

std::vector<DetrendedPatient> detrend_dataset(
    const std::vector<RawPatient>& raws, const Domain& domain) {
  std::vector<DetrendedPatient> out;
  out.reserve(raws.size());
  for (const RawPatient& raw : raws) {
    out.push_back(detrend(bind_patient(raw, domain)));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Shared multi-resolution spatial components for irregularly observed "
      "intensity images";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_IOError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

  py::class_<Domain>(m, "Domain")
      .def_readonly("dim", &Domain::dim)
      .def_readonly("locations", &Domain::locations)
      .def("size", &Domain::size)
      .def("__len__", &Domain::size);

  py::class_<RawPatient>(m, "RawPatient")
      .def(py::init([](std::string id, Matrix locations, Vector values) {
             RawPatient p;
             p.id = std::move(id);
             p.locations = std::move(locations);
             p.values = std::move(values);
             return p;
           }),
           py::arg("id"), py::arg("locations"), py::arg("values"))
      .def_readwrite("id", &RawPatient::id)
      .def_readwrite("locations", &RawPatient::locations)
      .def_readwrite("values", &RawPatient::values);

  py::class_<PatientImage>(m, "PatientImage")
      .def_readonly("id", &PatientImage::id)
      .def_readonly("indices", &PatientImage::indices)
      .def_readonly("values", &PatientImage::values)
      .def("n_obs", &PatientImage::n_obs);

  py::class_<DetrendedPatient>(m, "DetrendedPatient")
      .def_readonly("id", &DetrendedPatient::id)
      .def_readonly("mu_hat", &DetrendedPatient::mu_hat)
      .def_readonly("z_tilde", &DetrendedPatient::z_tilde)
      .def_readonly("indices", &DetrendedPatient::indices)
      .def("n_obs", &DetrendedPatient::n_obs);

  m.def("build_domain",
        [](const std::vector<RawPatient>& patients) {
          return build_domain(patients);
        },
        py::arg("patients"));
  m.def("bind_patient", &bind_patient, py::arg("patient"), py::arg("domain"));
  m.def("detrend", &detrend, py::arg("patient"));
  m.def("detrend_dataset", &detrend_dataset, py::arg("patients"),
        py::arg("domain"));
  m.def("center_locations", &center_locations, py::arg("locations"));

  m.def("tps_kernel", &tps_kernel, py::arg("d"), py::arg("r"));
  m.def("default_kmax", &default_kmax, py::arg("n"), py::arg("d"));

  py::class_<BasisSet>(m, "BasisSet")
      .def_readonly("domain", &BasisSet::domain)
      .def_readonly("dim", &BasisSet::dim)
      .def_readonly("kmax", &BasisSet::kmax)
      .def_readonly("truncated", &BasisSet::truncated)
      .def_readonly("poly_coeffs", &BasisSet::poly_coeffs)
      .def_readonly("alphas", &BasisSet::alphas)
      .def_readonly("eigvecs", &BasisSet::eigvecs)
      .def_readonly("proj_coeffs", &BasisSet::proj_coeffs)
      .def("n", &BasisSet::n)
      .def("n_eig", &BasisSet::n_eig)
      .def("domain_matrix", &BasisSet::domain_matrix, py::arg("K"))
      .def("matrix_at", &BasisSet::matrix_at, py::arg("locations"),
           py::arg("K"), py::arg("domain_lookup") = true)
      .def("at", &BasisSet::at, py::arg("location"), py::arg("K"),
           py::arg("domain_lookup") = true);

  m.def("build_basis", &build_basis, py::arg("domain"), py::arg("kmax") = 0);

  py::class_<PatientStats>(m, "PatientStats")
      .def_readonly("n", &PatientStats::n)
      .def_readonly("A", &PatientStats::A)
      .def_readonly("b", &PatientStats::b)
      .def_readonly("c", &PatientStats::c);

  py::class_<FitData>(m, "FitData")
      .def_readonly("K_cap", &FitData::K_cap)
      .def_readonly("N", &FitData::N)
      .def_readonly("total_obs", &FitData::total_obs)
      .def_readonly("pooled_var", &FitData::pooled_var)
      .def_readonly("stats", &FitData::stats);

  m.def("prepare_fit_data",
        [](const std::vector<DetrendedPatient>& patients,
           const BasisSet& basis, Index K_cap) {
          return prepare_fit_data(patients, basis, K_cap);
        },
        py::arg("patients"), py::arg("basis"), py::arg("K_cap") = 0);

  py::class_<ModelFit>(m, "ModelFit")
      .def_readonly("K", &ModelFit::K)
      .def_readonly("M", &ModelFit::M)
      .def_readonly("sigma2", &ModelFit::sigma2)
      .def_readonly("loglik", &ModelFit::loglik)
      .def_readonly("df", &ModelFit::df)
      .def_readonly("aic", &ModelFit::aic)
      .def_readonly("iterations", &ModelFit::iterations)
      .def_readonly("converged", &ModelFit::converged)
      .def_readonly("N", &ModelFit::N);

  py::class_<KDiagnostics>(m, "KDiagnostics")
      .def_readonly("K", &KDiagnostics::K)
      .def_readonly("loglik", &KDiagnostics::loglik)
      .def_readonly("df", &KDiagnostics::df)
      .def_readonly("aic", &KDiagnostics::aic)
      .def_readonly("iterations", &KDiagnostics::iterations)
      .def_readonly("converged", &KDiagnostics::converged);

  py::class_<SelectResult>(m, "SelectResult")
      .def_readonly("K_star", &SelectResult::K_star)
      .def_readonly("best", &SelectResult::best)
      .def_readonly("diagnostics", &SelectResult::diagnostics);

  m.def("log_likelihood", &log_likelihood, py::arg("data"), py::arg("K"),
        py::arg("M"), py::arg("sigma2"));
  m.def("model_df", &model_df, py::arg("K"), py::arg("N"));
  m.def("aic_value", &aic_value, py::arg("loglik"), py::arg("df"));

  m.def("em_fit",
        [](const FitData& data, Index K, double tol, int max_iter) {
          EmOptions options;
          options.tol = tol;
          options.max_iter = max_iter;
          return em_fit(data, K, options);
        },
        py::arg("data"), py::arg("K"), py::arg("tol") = 1e-6,
        py::arg("max_iter") = 500);

  m.def("select_K",
        [](const FitData& data, int d, const std::string& mode,
           std::vector<Index> candidates, bool warm_start, double tol,
           int max_iter) {
          SelectOptions options;
          options.mode = mode == "full" ? ScanMode::full : ScanMode::ladder;
          options.candidates = std::move(candidates);
          options.warm_start = warm_start;
          options.em.tol = tol;
          options.em.max_iter = max_iter;
          return select_K(data, d, options);
        },
        py::arg("data"), py::arg("d"), py::arg("mode") = "ladder",
        py::arg("candidates") = std::vector<Index>{},
        py::arg("warm_start") = true, py::arg("tol") = 1e-6,
        py::arg("max_iter") = 500);

  py::class_<Decomposition>(m, "Decomposition")
      .def_readonly("K_star", &Decomposition::K_star)
      .def_readonly("H_star", &Decomposition::H_star)
      .def_readonly("lambdas", &Decomposition::lambdas)
      .def_readonly("U_hat", &Decomposition::U_hat)
      .def_readonly("G_domain", &Decomposition::G_domain)
      .def_readonly("sigma2", &Decomposition::sigma2)
      .def_readonly("noise_floor", &Decomposition::noise_floor)
      .def_readonly("basis", &Decomposition::basis);

  m.def("decompose",
        [](const ModelFit& fit, const BasisSet& basis,
           double noise_floor_mult) {
          DecomposeOptions options;
          options.noise_floor_mult = noise_floor_mult;
          return decompose(fit, basis, options);
        },
        py::arg("fit"), py::arg("basis"),
        py::arg("noise_floor_mult") = kNoiseFloorMultDefault);

  m.def("component_function", &component_function, py::arg("dec"),
        py::arg("s"), py::arg("h"));
  m.def("component_matrix", &component_matrix, py::arg("dec"),
        py::arg("locations"));
  m.def("estimate_covariance", &estimate_covariance, py::arg("dec"),
        py::arg("s"), py::arg("t"));

  py::class_<FeatureVector>(m, "FeatureVector")
      .def_readonly("patient_id", &FeatureVector::patient_id)
      .def_readonly("mu_hat", &FeatureVector::mu_hat)
      .def_readonly("theta", &FeatureVector::theta);

  m.def("extract_features", &extract_features, py::arg("dec"),
        py::arg("patient"));
  m.def("predict_y", &predict_y, py::arg("dec"), py::arg("patient"),
        py::arg("targets"));
  m.def("score_new_patient", &score_new_patient, py::arg("dec"),
        py::arg("patient"));

  m.def("correlation_report_counts",
        [](const std::vector<std::pair<std::string, Matrix>>& sets) {
          const CorrelationReport report = correlation_report(sets);
          py::list sections;
          for (const CorrelationSection& s : report.sections) {
            py::dict d;
            d["label"] = s.label;
            d["counts"] = s.counts;
            d["pairs"] = s.pairs;
            d["excluded"] = s.excluded;
            sections.append(d);
          }
          py::dict out;
          out["sections"] = sections;
          out["zero_variance_columns"] = report.zero_variance_columns;
          return out;
        },
        py::arg("sets"));

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("N", &SimConfig::N)
      .def_readwrite("L", &SimConfig::L)
      .def_readwrite("tau", &SimConfig::tau)
      .def_readwrite("p", &SimConfig::p)
      .def_readwrite("missing_lo", &SimConfig::missing_lo)
      .def_readwrite("missing_hi", &SimConfig::missing_hi)
      .def_readwrite("replicates", &SimConfig::replicates)
      .def_readwrite("seed", &SimConfig::seed);

  py::class_<SimPatient>(m, "SimPatient")
      .def_readonly("mask", &SimPatient::mask)
      .def_readonly("locations", &SimPatient::locations)
      .def_readonly("y_true", &SimPatient::y_true)
      .def_readonly("z", &SimPatient::z);

  py::class_<SimTruth>(m, "SimTruth")
      .def_readonly("active", &SimTruth::active)
      .def_readonly("varsigma", &SimTruth::varsigma)
      .def_readonly("w", &SimTruth::w)
      .def_readonly("patients", &SimTruth::patients);

  m.def("sim_centers", &sim_centers);
  m.def("simulate_dataset",
        [](const SimConfig& config, int replicate) {
          std::mt19937_64 rng = replicate_stream(config, replicate);
          return generate_signal(config, rng);
        },
        py::arg("config"), py::arg("replicate") = 0);

  py::class_<CellSummary>(m, "CellSummary")
      .def_readonly("config", &CellSummary::config)
      .def_readonly("completed", &CellSummary::completed)
      .def_readonly("failures", &CellSummary::failures)
      .def_readonly("median_H", &CellSummary::median_H)
      .def_readonly("q25", &CellSummary::q25)
      .def_readonly("q75", &CellSummary::q75)
      .def_readonly("seconds", &CellSummary::seconds)
      .def_readonly("h_values", &CellSummary::h_values)
      .def_readonly("k_values", &CellSummary::k_values);

  m.def("run_experiment",
        [](const std::vector<SimConfig>& cells, int threads, Index kmax,
           double noise_floor_mult) {
          ExperimentOptions options;
          options.threads = threads;
          options.kmax = kmax;
          options.decompose.noise_floor_mult = noise_floor_mult;
          return run_experiment(cells, options);
        },
        py::arg("cells"), py::arg("threads") = 1, py::arg("kmax") = 0,
        py::arg("noise_floor_mult") = kNoiseFloorMultDefault,
        py::call_guard<py::gil_scoped_release>());

  m.def("quantile", &quantile, py::arg("xs"), py::arg("p"));

  py::class_<ModelFile>(m, "ModelFile")
      .def_readonly("version", &ModelFile::version)
      .def_readonly("center", &ModelFile::center)
      .def_readonly("basis", &ModelFile::basis)
      .def_readonly("fit", &ModelFile::fit)
      .def_readonly("H_star", &ModelFile::H_star)
      .def_readonly("noise_floor", &ModelFile::noise_floor)
      .def_readonly("lambdas", &ModelFile::lambdas)
      .def_readonly("U_hat", &ModelFile::U_hat)
      .def_readonly("diagnostics", &ModelFile::diagnostics)
      .def("decomposition", &ModelFile::decomposition);

  m.def("make_model_file", &make_model_file, py::arg("basis"), py::arg("fit"),
        py::arg("dec"), py::arg("diagnostics") = std::vector<KDiagnostics>{},
        py::arg("center") = false);
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"),
        py::arg("binary_payload") = false);
  m.def("load_model", &load_model, py::arg("path"));
  m.def("read_patient_file", &read_patient_file, py::arg("path"),
        py::arg("expected_dim"), py::arg("patient_id"));
  m.def("write_patient_file", &write_patient_file, py::arg("path"),
        py::arg("locations"), py::arg("values"));
}
