#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "spdecomp/domain.hpp"
#include "spdecomp/errors.hpp"
#include "spdecomp/io.hpp"

namespace spdecomp {

namespace {

using nlohmann::json;

constexpr const char* kModelFormat = "spdecomp-model";
constexpr const char* kManifestFormat = "spdecomp-manifest";
constexpr int kModelVersion = 1;
constexpr int kManifestVersion = 1;

std::string hex_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_double_strict(const std::string& s, const char* what) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw IntegrityError(std::string("malformed number in ") + what + ": '" +
                         s + "'");
  }
  return v;
}

// --- base64 (RFC 4648, no line breaks) ------------------------------------

constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (size_t i = 0; i < len; i += 3) {
    unsigned int chunk = data[i] << 16;
    if (i + 1 < len) chunk |= data[i + 1] << 8;
    if (i + 2 < len) chunk |= data[i + 2];
    out.push_back(kB64Alphabet[(chunk >> 18) & 63]);
    out.push_back(kB64Alphabet[(chunk >> 12) & 63]);
    out.push_back(i + 1 < len ? kB64Alphabet[(chunk >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? kB64Alphabet[chunk & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) {
    lut[static_cast<unsigned char>(kB64Alphabet[i])] = i;
  }
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  unsigned int chunk = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = lut[static_cast<unsigned char>(c)];
    if (v < 0) throw IntegrityError("invalid base64 payload");
    chunk = (chunk << 6) | static_cast<unsigned int>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((chunk >> bits) & 0xFF));
    }
  }
  return out;
}

// --- dense payloads --------------------------------------------------------

json encode_array(const double* data, Index rows, Index cols, bool binary) {
  json j;
  j["rows"] = rows;
  j["cols"] = cols;
  const size_t count = static_cast<size_t>(rows) * static_cast<size_t>(cols);
  if (binary) {
    j["enc"] = "b64le";
    if constexpr (std::endian::native == std::endian::little) {
      j["data"] = base64_encode(reinterpret_cast<const unsigned char*>(data),
                                count * sizeof(double));
    } else {
      std::vector<unsigned char> bytes(count * sizeof(double));
      for (size_t i = 0; i < count; ++i) {
        std::uint64_t u = std::bit_cast<std::uint64_t>(data[i]);
        for (int b = 0; b < 8; ++b) {
          bytes[i * 8 + static_cast<size_t>(b)] =
              static_cast<unsigned char>((u >> (8 * b)) & 0xFF);
        }
      }
      j["data"] = base64_encode(bytes.data(), bytes.size());
    }
  } else {
    j["enc"] = "hex";
    json arr = json::array();
    for (size_t i = 0; i < count; ++i) arr.push_back(hex_double(data[i]));
    j["data"] = std::move(arr);
  }
  return j;
}

json encode_matrix(const Matrix& m, bool binary) {
  // Stored row-major for readability; Eigen matrices are column-major.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm =
      m;
  return encode_array(rm.data(), m.rows(), m.cols(), binary);
}

json encode_vector(const Vector& v, bool binary) {
  return encode_array(v.data(), v.size(), 1, binary);
}

Matrix decode_matrix(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") ||
      !j.contains("enc") || !j.contains("data")) {
    throw IntegrityError(std::string("malformed array payload for ") + what);
  }
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  if (rows < 0 || cols < 0) {
    throw IntegrityError(std::string("negative array shape for ") + what);
  }
  const size_t count = static_cast<size_t>(rows) * static_cast<size_t>(cols);
  std::vector<double> flat;
  flat.reserve(count);
  const std::string enc = j.at("enc").get<std::string>();
  if (enc == "hex") {
    const json& arr = j.at("data");
    if (!arr.is_array() || arr.size() != count) {
      throw IntegrityError(std::string("array payload size mismatch for ") +
                           what);
    }
    for (const json& e : arr) {
      flat.push_back(parse_double_strict(e.get<std::string>(), what));
    }
  } else if (enc == "b64le") {
    const std::vector<unsigned char> bytes =
        base64_decode(j.at("data").get<std::string>());
    if (bytes.size() != count * sizeof(double)) {
      throw IntegrityError(std::string("binary payload size mismatch for ") +
                           what);
    }
    for (size_t i = 0; i < count; ++i) {
      std::uint64_t u = 0;
      for (int b = 7; b >= 0; --b) {
        u = (u << 8) | bytes[i * 8 + static_cast<size_t>(b)];
      }
      flat.push_back(std::bit_cast<double>(u));
    }
  } else {
    throw IntegrityError(std::string("unknown array encoding for ") + what);
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      m(r, c) = flat[static_cast<size_t>(r) * static_cast<size_t>(cols) +
                     static_cast<size_t>(c)];
    }
  }
  return m;
}

Vector decode_vector(const json& j, const char* what) {
  const Matrix m = decode_matrix(j, what);
  if (m.cols() != 1 && m.size() != 0) {
    throw IntegrityError(std::string("expected a column payload for ") + what);
  }
  return m.col(0);
}

json load_json(const std::string& path, const char* kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string("cannot open ") + kind + ": " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("malformed ") + kind + " '" + path +
                         "': " + e.what());
  }
  return j;
}

template <typename T>
T get_field(const json& j, const char* key, const char* kind) {
  if (!j.contains(key)) {
    throw IntegrityError(std::string(kind) + " is missing field '" + key +
                         "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw IntegrityError(std::string(kind) + " field '" + key +
                         "' has the wrong type");
  }
}

double get_hex_field(const json& j, const char* key, const char* kind) {
  return parse_double_strict(get_field<std::string>(j, key, kind), key);
}

}  // namespace

Decomposition ModelFile::decomposition() const {
  Decomposition dec;
  dec.K_star = fit.K;
  dec.H_star = H_star;
  dec.lambdas = lambdas;
  dec.U_hat = U_hat;
  dec.sigma2 = fit.sigma2;
  dec.noise_floor = noise_floor;
  dec.basis = basis;
  dec.G_domain = basis.domain_matrix(fit.K) * U_hat;
  return dec;
}

ModelFile make_model_file(const BasisSet& basis, const ModelFit& fit,
                          const Decomposition& dec,
                          std::vector<KDiagnostics> diagnostics, bool center) {
  if (fit.K > basis.kmax) throw DataError("fit K exceeds basis kmax");
  ModelFile model;
  model.version = kModelVersion;
  model.center = center;

  BasisSet truncated = basis;
  truncated.kmax = fit.K;
  const Index keep = fit.K - (basis.dim + 1);
  if (keep < 0) throw DataError("fit K is below the polynomial block size");
  truncated.alphas = basis.alphas.head(keep);
  truncated.eigvecs = basis.eigvecs.leftCols(keep);
  model.basis = std::move(truncated);

  model.fit = fit;
  model.H_star = dec.H_star;
  model.noise_floor = dec.noise_floor;
  model.lambdas = dec.lambdas;
  model.U_hat = dec.U_hat;
  model.diagnostics = std::move(diagnostics);
  return model;
}

void save_model(const ModelFile& model, const std::string& path,
                bool binary_payload) {
  json j;
  j["format"] = kModelFormat;
  j["version"] = model.version;
  j["center"] = model.center;
  j["dim"] = model.basis.dim;
  j["n"] = model.basis.n();
  j["kmax"] = model.basis.kmax;
  j["basis_truncated"] = model.basis.truncated;
  j["domain_locations"] =
      encode_matrix(model.basis.domain.locations, binary_payload);
  j["poly_coeffs"] = encode_matrix(model.basis.poly_coeffs, binary_payload);
  j["alphas"] = encode_vector(model.basis.alphas, binary_payload);
  j["eigvecs"] = encode_matrix(model.basis.eigvecs, binary_payload);
  j["proj_coeffs"] = encode_matrix(model.basis.proj_coeffs, binary_payload);

  json fit;
  fit["K"] = model.fit.K;
  fit["M"] = encode_matrix(model.fit.M, binary_payload);
  fit["sigma2"] = hex_double(model.fit.sigma2);
  fit["loglik"] = hex_double(model.fit.loglik);
  fit["df"] = model.fit.df;
  fit["aic"] = hex_double(model.fit.aic);
  fit["iterations"] = model.fit.iterations;
  fit["converged"] = model.fit.converged;
  fit["N"] = model.fit.N;
  j["fit"] = std::move(fit);

  json dec;
  dec["H_star"] = model.H_star;
  dec["noise_floor"] = hex_double(model.noise_floor);
  dec["lambdas"] = encode_vector(model.lambdas, binary_payload);
  dec["U_hat"] = encode_matrix(model.U_hat, binary_payload);
  j["decomposition"] = std::move(dec);

  json diags = json::array();
  for (const KDiagnostics& d : model.diagnostics) {
    json row;
    row["K"] = d.K;
    row["loglik"] = hex_double(d.loglik);
    row["df"] = d.df;
    row["aic"] = hex_double(d.aic);
    row["iterations"] = d.iterations;
    row["converged"] = d.converged;
    diags.push_back(std::move(row));
  }
  j["diagnostics"] = std::move(diags);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path);
  out << j.dump();
  out << "\n";
  if (!out) throw DataError("failed writing model file: " + path);
}

ModelFile load_model(const std::string& path) {
  const json j = load_json(path, "model file");
  if (get_field<std::string>(j, "format", "model file") != kModelFormat) {
    throw IntegrityError("not a model file: " + path);
  }
  const int version = get_field<int>(j, "version", "model file");
  if (version != kModelVersion) {
    throw IntegrityError("unsupported model format version " +
                         std::to_string(version) + " (supported: " +
                         std::to_string(kModelVersion) + ")");
  }

  ModelFile model;
  model.version = version;
  model.center = get_field<bool>(j, "center", "model file");

  BasisSet& basis = model.basis;
  basis.dim = get_field<int>(j, "dim", "model file");
  basis.kmax = get_field<Index>(j, "kmax", "model file");
  basis.truncated = get_field<bool>(j, "basis_truncated", "model file");
  basis.domain.dim = basis.dim;
  basis.domain.locations =
      decode_matrix(j.at("domain_locations"), "domain_locations");
  basis.poly_coeffs = decode_matrix(j.at("poly_coeffs"), "poly_coeffs");
  basis.alphas = decode_vector(j.at("alphas"), "alphas");
  basis.eigvecs = decode_matrix(j.at("eigvecs"), "eigvecs");
  basis.proj_coeffs = decode_matrix(j.at("proj_coeffs"), "proj_coeffs");

  const Index n = get_field<Index>(j, "n", "model file");
  if (basis.domain.locations.rows() != n ||
      basis.domain.locations.cols() != basis.dim ||
      basis.poly_coeffs.rows() != basis.dim + 1 ||
      basis.poly_coeffs.cols() != basis.dim + 1 ||
      basis.alphas.size() != basis.kmax - basis.dim - 1 ||
      basis.eigvecs.rows() != n ||
      basis.eigvecs.cols() != basis.alphas.size() ||
      basis.proj_coeffs.rows() != basis.dim + 1 ||
      basis.proj_coeffs.cols() != n) {
    throw IntegrityError("model file has inconsistent basis shapes");
  }

  const json& fit = j.at("fit");
  model.fit.K = get_field<Index>(fit, "K", "fit");
  model.fit.M = decode_matrix(fit.at("M"), "M");
  model.fit.sigma2 = get_hex_field(fit, "sigma2", "fit");
  model.fit.loglik = get_hex_field(fit, "loglik", "fit");
  model.fit.df = get_field<Index>(fit, "df", "fit");
  model.fit.aic = get_hex_field(fit, "aic", "fit");
  model.fit.iterations = get_field<int>(fit, "iterations", "fit");
  model.fit.converged = get_field<bool>(fit, "converged", "fit");
  model.fit.N = get_field<Index>(fit, "N", "fit");
  if (model.fit.K != basis.kmax || model.fit.M.rows() != model.fit.K ||
      model.fit.M.cols() != model.fit.K) {
    throw IntegrityError("model file has inconsistent fit shapes");
  }

  const json& dec = j.at("decomposition");
  model.H_star = get_field<Index>(dec, "H_star", "decomposition");
  model.noise_floor = get_hex_field(dec, "noise_floor", "decomposition");
  model.lambdas = decode_vector(dec.at("lambdas"), "lambdas");
  model.U_hat = decode_matrix(dec.at("U_hat"), "U_hat");
  if (model.lambdas.size() != model.H_star ||
      model.U_hat.rows() != model.fit.K ||
      model.U_hat.cols() != model.H_star) {
    throw IntegrityError("model file has inconsistent decomposition shapes");
  }

  if (j.contains("diagnostics")) {
    for (const json& row : j.at("diagnostics")) {
      KDiagnostics d;
      d.K = get_field<Index>(row, "K", "diagnostics");
      d.loglik = get_hex_field(row, "loglik", "diagnostics");
      d.df = get_field<Index>(row, "df", "diagnostics");
      d.aic = get_hex_field(row, "aic", "diagnostics");
      d.iterations = get_field<int>(row, "iterations", "diagnostics");
      d.converged = get_field<bool>(row, "converged", "diagnostics");
      model.diagnostics.push_back(d);
    }
  }
  return model;
}

Manifest read_manifest(const std::string& path) {
  const json j = load_json(path, "manifest");
  if (get_field<std::string>(j, "format", "manifest") != kManifestFormat) {
    throw IntegrityError("not a dataset manifest: " + path);
  }
  const int version = get_field<int>(j, "version", "manifest");
  if (version != kManifestVersion) {
    throw IntegrityError("unsupported manifest version " +
                         std::to_string(version));
  }
  Manifest m;
  m.version = version;
  m.dim = get_field<int>(j, "dim", "manifest");
  if (m.dim < 1 || m.dim > 3) {
    throw DataError("manifest dimension must be 1, 2, or 3");
  }
  if (j.contains("center")) {
    m.center = get_field<bool>(j, "center", "manifest");
  }
  if (!j.contains("patients") || !j.at("patients").is_array() ||
      j.at("patients").empty()) {
    throw DataError("manifest lists no patients");
  }
  const std::filesystem::path base =
      std::filesystem::path(path).parent_path();
  std::set<std::string> seen;
  for (const json& row : j.at("patients")) {
    ManifestEntry e;
    e.id = get_field<std::string>(row, "id", "manifest patient");
    const std::string rel =
        get_field<std::string>(row, "path", "manifest patient");
    e.path = (base / rel).string();
    if (!seen.insert(e.id).second) {
      throw DataError("duplicate patient id in manifest: '" + e.id + "'");
    }
    m.patients.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  json j;
  j["format"] = kManifestFormat;
  j["version"] = manifest.version;
  j["dim"] = manifest.dim;
  j["center"] = manifest.center;
  json patients = json::array();
  for (const ManifestEntry& e : manifest.patients) {
    patients.push_back({{"id", e.id}, {"path", e.path}});
  }
  j["patients"] = std::move(patients);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

std::vector<RawPatient> read_dataset(const Manifest& manifest) {
  std::vector<RawPatient> out;
  out.reserve(manifest.patients.size());
  for (const ManifestEntry& e : manifest.patients) {
    RawPatient p = read_patient_file(e.path, manifest.dim, e.id);
    if (manifest.center) p.locations = center_locations(p.locations);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace spdecomp
