#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "spdecomp/errors.hpp"
#include "spdecomp/io.hpp"

namespace spdecomp {

namespace {

std::string trim(std::string s) {
  const auto notspace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
  return s;
}

bool is_comment_or_blank(const std::string& line) {
  const std::string t = trim(line);
  return t.empty() || t[0] == '#';
}

char sniff_delimiter(const std::string& line, const std::string& path) {
  const size_t tabs = std::count(line.begin(), line.end(), '\t');
  const size_t commas = std::count(line.begin(), line.end(), ',');
  const size_t semis = std::count(line.begin(), line.end(), ';');
  if (tabs >= commas && tabs >= semis && tabs > 0) return '\t';
  if (commas >= semis && commas > 0) return ',';
  if (semis > 0) return ';';
  throw DataError("no delimiter (tab, comma, or semicolon) found in header of " +
                  path);
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(trim(field));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

double parse_value(const std::string& token, const std::string& path,
                   size_t line_no) {
  const std::string t = trim(token);
  const char* begin = t.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw DataError(path + ":" + std::to_string(line_no) +
                    ": malformed number '" + token + "'");
  }
  return v;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

void write_header_lines(std::ostream& os,
                        const std::vector<std::string>& header) {
  for (const std::string& line : header) os << "# " << line << "\n";
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

RawPatient read_patient_file(const std::string& path, int expected_dim,
                             const std::string& patient_id) {
  if (expected_dim < 1 || expected_dim > 3) {
    throw DataError("expected dimension must be 1, 2, or 3");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open patient file: " + path);

  static const std::vector<std::string> kAxes = {"x", "y", "z"};
  std::string line;
  size_t line_no = 0;
  char delim = ',';
  bool saw_header = false;
  std::vector<std::array<double, 3>> coords;
  std::vector<double> values;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_comment_or_blank(line)) continue;
    if (!saw_header) {
      delim = sniff_delimiter(line, path);
      const std::vector<std::string> cols = split(line, delim);
      const size_t want = static_cast<size_t>(expected_dim) + 1;
      bool ok = cols.size() == want;
      for (size_t i = 0; ok && i + 1 < cols.size(); ++i) {
        ok = lower(cols[i]) == kAxes[i];
      }
      if (ok) ok = lower(cols.back()) == "value";
      if (!ok) {
        std::string want_header;
        for (int i = 0; i < expected_dim; ++i) {
          want_header += kAxes[static_cast<size_t>(i)];
          want_header += ',';
        }
        want_header += "value";
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": expected header '" + want_header + "', got '" +
                        trim(line) + "'");
      }
      saw_header = true;
      continue;
    }
    const std::vector<std::string> fields = split(line, delim);
    if (fields.size() != static_cast<size_t>(expected_dim) + 1) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(expected_dim + 1) + " fields, got " +
                      std::to_string(fields.size()));
    }
    std::array<double, 3> c{0, 0, 0};
    for (int i = 0; i < expected_dim; ++i) {
      c[static_cast<size_t>(i)] =
          parse_value(fields[static_cast<size_t>(i)], path, line_no);
    }
    const double v = parse_value(fields.back(), path, line_no);
    for (int i = 0; i < expected_dim; ++i) {
      if (!std::isfinite(c[static_cast<size_t>(i)])) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": non-finite coordinate");
      }
    }
    if (!std::isfinite(v)) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": non-finite value");
    }
    coords.push_back(c);
    values.push_back(v);
  }
  if (!saw_header) throw DataError("patient file has no header: " + path);
  if (values.empty()) {
    throw DataError("patient file has no observations: " + path);
  }

  RawPatient p;
  p.id = patient_id;
  p.locations.resize(static_cast<Index>(coords.size()), expected_dim);
  p.values.resize(static_cast<Index>(values.size()));
  for (size_t r = 0; r < coords.size(); ++r) {
    for (int c = 0; c < expected_dim; ++c) {
      p.locations(static_cast<Index>(r), c) = coords[r][static_cast<size_t>(c)];
    }
    p.values(static_cast<Index>(r)) = values[r];
  }

  std::vector<size_t> order(coords.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return coords[a] < coords[b]; });
  for (size_t i = 1; i < order.size(); ++i) {
    if (coords[order[i - 1]] == coords[order[i]]) {
      std::string row;
      for (int c = 0; c < expected_dim; ++c) {
        if (c) row += ", ";
        row += format_double(coords[order[i]][static_cast<size_t>(c)]);
      }
      throw DataError(path + ": duplicate location (" + row + ")");
    }
  }
  return p;
}

void write_patient_file(const std::string& path, const Matrix& locations,
                        const Vector& values) {
  if (locations.rows() != values.size()) {
    throw DataError("locations and values disagree in length");
  }
  const Index dim = locations.cols();
  if (dim < 1 || dim > 3) throw DataError("dimension must be 1, 2, or 3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write patient file: " + path);
  static const char* kAxes[] = {"x", "y", "z"};
  for (Index c = 0; c < dim; ++c) out << kAxes[c] << ',';
  out << "value\n";
  for (Index r = 0; r < locations.rows(); ++r) {
    for (Index c = 0; c < dim; ++c) out << format_double(locations(r, c)) << ',';
    out << format_double(values(r)) << "\n";
  }
  if (!out) throw DataError("failed writing patient file: " + path);
}

void write_feature_table(std::ostream& os,
                         const std::vector<FeatureVector>& features,
                         const std::vector<std::string>& header) {
  write_header_lines(os, header);
  const Index H = features.empty() ? 0 : features.front().theta.size();
  os << "patient_id\tmu_hat";
  for (Index h = 1; h <= H; ++h) os << "\ttheta_" << h;
  os << "\n";
  for (const FeatureVector& f : features) {
    if (f.theta.size() != H) {
      throw DataError("feature vectors disagree in length");
    }
    os << f.patient_id << '\t' << format_double(f.mu_hat);
    for (Index h = 0; h < H; ++h) os << '\t' << format_double(f.theta(h));
    os << "\n";
  }
}

FeatureTable read_feature_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature table: " + path);
  FeatureTable table;
  std::string line;
  size_t line_no = 0;
  char delim = '\t';
  bool saw_header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_comment_or_blank(line)) continue;
    if (!saw_header) {
      delim = sniff_delimiter(line, path);
      std::vector<std::string> cols = split(line, delim);
      if (cols.size() < 2 || lower(cols.front()) != "patient_id") {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": expected a feature-table header starting with "
                        "'patient_id'");
      }
      table.columns.assign(cols.begin() + 1, cols.end());
      saw_header = true;
      continue;
    }
    const std::vector<std::string> fields = split(line, delim);
    if (fields.size() != table.columns.size() + 1) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(table.columns.size() + 1) +
                      " fields, got " + std::to_string(fields.size()));
    }
    table.ids.push_back(fields.front());
    std::vector<double> row;
    row.reserve(fields.size() - 1);
    for (size_t i = 1; i < fields.size(); ++i) {
      row.push_back(parse_value(fields[i], path, line_no));
    }
    rows.push_back(std::move(row));
  }
  if (!saw_header) throw DataError("feature table has no header: " + path);
  table.values.resize(static_cast<Index>(rows.size()),
                      static_cast<Index>(table.columns.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < rows[r].size(); ++c) {
      table.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
  }
  return table;
}

void write_diagnostics_table(std::ostream& os,
                             const std::vector<KDiagnostics>& diagnostics,
                             const std::vector<std::string>& header) {
  write_header_lines(os, header);
  os << "K\tloglik\tdf\taic\titerations\tconverged\n";
  for (const KDiagnostics& d : diagnostics) {
    os << d.K << '\t' << format_double(d.loglik) << '\t' << d.df << '\t'
       << format_double(d.aic) << '\t' << d.iterations << '\t'
       << (d.converged ? 1 : 0) << "\n";
  }
}

void write_summary_table(std::ostream& os,
                         const std::vector<CellSummary>& cells,
                         const std::vector<std::string>& header,
                         bool with_timing) {
  write_header_lines(os, header);
  os << "N\tL\ttau\tp\treplicates\tcompleted\tfailures\tmedian_H\tq25\tq75\t"
        "seconds\n";
  for (const CellSummary& c : cells) {
    os << c.config.N << '\t' << c.config.L << '\t'
       << format_double(c.config.tau) << '\t' << c.config.p << '\t'
       << c.config.replicates << '\t' << c.completed << '\t' << c.failures
       << '\t' << format_double(c.median_H) << '\t' << format_double(c.q25)
       << '\t' << format_double(c.q75) << '\t'
       << format_double(with_timing ? c.seconds : 0.0) << "\n";
  }
}

void write_correlation_report(std::ostream& os,
                              const CorrelationReport& report,
                              const std::vector<std::string>& header) {
  write_header_lines(os, header);
  os << "# zero_variance_columns: " << report.zero_variance_columns << "\n";
  os << "section\tpairs\texcluded\tbin[0,0.1)\tbin[0.1,0.3)\tbin[0.3,0.5)\t"
        "bin[0.5,0.7)\tbin[0.7,0.9)\tbin[0.9,1]\n";
  for (const CorrelationSection& s : report.sections) {
    os << s.label << '\t' << s.pairs << '\t' << s.excluded;
    for (Index count : s.counts) os << '\t' << count;
    os << "\n";
  }
}

GriddedScatter grid_from_scatter(const Matrix& locations,
                                 const Vector& values) {
  if (locations.cols() != 2) {
    throw DataError("grid output requires two-dimensional locations");
  }
  if (locations.rows() != values.size()) {
    throw DataError("locations and values disagree in length");
  }
  std::vector<double> xs(locations.col(0).data(),
                         locations.col(0).data() + locations.rows());
  std::vector<double> ys(locations.col(1).data(),
                         locations.col(1).data() + locations.rows());
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  GriddedScatter grid;
  grid.xs = Eigen::Map<const Vector>(xs.data(), static_cast<Index>(xs.size()));
  grid.ys = Eigen::Map<const Vector>(ys.data(), static_cast<Index>(ys.size()));
  grid.values = Matrix::Constant(grid.ys.size(), grid.xs.size(),
                                 std::numeric_limits<double>::quiet_NaN());
  for (Index r = 0; r < locations.rows(); ++r) {
    const auto xi = std::lower_bound(xs.begin(), xs.end(), locations(r, 0));
    const auto yi = std::lower_bound(ys.begin(), ys.end(), locations(r, 1));
    const Index col = static_cast<Index>(xi - xs.begin());
    const Index row = static_cast<Index>(yi - ys.begin());
    if (!std::isnan(grid.values(row, col))) {
      throw DataError("duplicate grid cell at (" +
                      format_double(locations(r, 0)) + ", " +
                      format_double(locations(r, 1)) + ")");
    }
    grid.values(row, col) = values(r);
  }
  return grid;
}

void write_grid(std::ostream& os, const GriddedScatter& grid,
                const std::vector<std::string>& header) {
  write_header_lines(os, header);
  os << "y\\x";
  for (Index c = 0; c < grid.xs.size(); ++c) {
    os << '\t' << format_double(grid.xs(c));
  }
  os << "\n";
  for (Index r = 0; r < grid.ys.size(); ++r) {
    os << format_double(grid.ys(r));
    for (Index c = 0; c < grid.xs.size(); ++c) {
      os << '\t' << format_double(grid.values(r, c));
    }
    os << "\n";
  }
}

}  // namespace spdecomp
