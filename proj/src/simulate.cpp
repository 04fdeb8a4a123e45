#include "spdecomp/simulate.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <chrono>
#include <limits>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "spdecomp/domain.hpp"
#include "spdecomp/errors.hpp"
#include "spdecomp/parallel.hpp"

namespace spdecomp {

void parallel_for(Index n, int threads, const std::function<void(Index)>& fn) {
  if (n <= 0) return;
  const int workers =
      static_cast<int>(std::min<Index>(std::max(threads, 1), n));
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&]() {
    while (true) {
      const Index i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

std::uint64_t splitmix_step(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void validate_config(const SimConfig& c) {
  if (c.N < 2) throw DataError("simulation needs N >= 2 patients");
  if (c.L < 1 || c.L > 12) throw DataError("resolution exponent L must be in [1, 12]");
  if (c.p < 0 || c.p > 17) throw DataError("complexity level p must be in [0, 17]");
  if (c.p > 0 && c.tau < 0.5) {
    throw DataError(
        "tau must be at least 0.5 so weight variances tau + vs stay "
        "nonnegative");
  }
  if (!(c.missing_lo >= 0) || !(c.missing_hi < 1) ||
      c.missing_lo > c.missing_hi) {
    throw DataError("missing range must satisfy 0 <= lo <= hi < 1");
  }
  if (c.replicates < 1) throw DataError("replicates must be positive");
}

// Separable Gaussian blur with zero padding.
std::vector<double> smooth_field(const std::vector<double>& field, int w,
                                 double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : kernel) v /= total;

  std::vector<double> tmp(field.size(), 0.0), out(field.size(), 0.0);
  for (int y = 0; y < w; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = x + i;
        if (xx < 0 || xx >= w) continue;
        acc += kernel[static_cast<size_t>(i + radius)] *
               field[static_cast<size_t>(y * w + xx)];
      }
      tmp[static_cast<size_t>(y * w + x)] = acc;
    }
  }
  for (int y = 0; y < w; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = y + i;
        if (yy < 0 || yy >= w) continue;
        acc += kernel[static_cast<size_t>(i + radius)] *
               tmp[static_cast<size_t>(yy * w + x)];
      }
      out[static_cast<size_t>(y * w + x)] = acc;
    }
  }
  return out;
}

// Size of the largest 8-connected component of {smoothed > t}; mask filled
// with that component.
int largest_component(const std::vector<double>& s, int w, double t,
                      std::vector<std::uint8_t>& mask) {
  std::vector<std::int32_t> label(s.size(), -1);
  int best_size = 0, best_label = -1, next_label = 0;
  std::vector<int> stack;
  for (int start = 0; start < w * w; ++start) {
    if (s[static_cast<size_t>(start)] <= t ||
        label[static_cast<size_t>(start)] >= 0) {
      continue;
    }
    int size = 0;
    stack.push_back(start);
    label[static_cast<size_t>(start)] = next_label;
    while (!stack.empty()) {
      const int cell = stack.back();
      stack.pop_back();
      ++size;
      const int cy = cell / w, cx = cell % w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int ny = cy + dy, nx = cx + dx;
          if (ny < 0 || ny >= w || nx < 0 || nx >= w) continue;
          const int ncell = ny * w + nx;
          if (s[static_cast<size_t>(ncell)] > t &&
              label[static_cast<size_t>(ncell)] < 0) {
            label[static_cast<size_t>(ncell)] = next_label;
            stack.push_back(ncell);
          }
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best_label = next_label;
    }
    ++next_label;
  }
  mask.assign(s.size(), 0);
  if (best_label >= 0) {
    for (size_t i = 0; i < s.size(); ++i) {
      mask[i] = label[i] == best_label ? 1 : 0;
    }
  }
  return best_size;
}

}  // namespace

Matrix sim_centers() {
  Matrix centers(17, 2);
  Index row = 0;
  for (int i = 1; i <= 4; ++i) {
    for (int j = 1; j <= 4; ++j) {
      centers(row, 0) = i / 5.0;
      centers(row, 1) = j / 5.0;
      ++row;
    }
  }
  centers(row, 0) = 0.5;
  centers(row, 1) = 0.5;
  return centers;
}

std::mt19937_64 replicate_stream(const SimConfig& c, int replicate) {
  std::uint64_t h = c.seed;
  h = splitmix_step(h ^ splitmix_step(static_cast<std::uint64_t>(c.N)));
  h = splitmix_step(h ^ splitmix_step(static_cast<std::uint64_t>(c.L)));
  h = splitmix_step(h ^ splitmix_step(std::bit_cast<std::uint64_t>(c.tau)));
  h = splitmix_step(h ^ splitmix_step(static_cast<std::uint64_t>(c.p)));
  h = splitmix_step(h ^
                    splitmix_step(std::bit_cast<std::uint64_t>(c.missing_lo)));
  h = splitmix_step(h ^
                    splitmix_step(std::bit_cast<std::uint64_t>(c.missing_hi)));
  h = splitmix_step(h ^ splitmix_step(static_cast<std::uint64_t>(replicate)));
  const std::uint64_t s0 = splitmix_step(h);
  const std::uint64_t s1 = splitmix_step(s0);
  const std::uint64_t s2 = splitmix_step(s1);
  const std::uint64_t s3 = splitmix_step(s2);
  std::seed_seq seq{
      static_cast<std::uint32_t>(s0), static_cast<std::uint32_t>(s0 >> 32),
      static_cast<std::uint32_t>(s1), static_cast<std::uint32_t>(s1 >> 32),
      static_cast<std::uint32_t>(s2), static_cast<std::uint32_t>(s2 >> 32),
      static_cast<std::uint32_t>(s3), static_cast<std::uint32_t>(s3 >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::uint8_t> generate_roi(int L, double lo, double hi,
                                       std::mt19937_64& rng) {
  const int w = 1 << L;
  const int total = w * w;
  if (lo == 0.0 && hi == 0.0) {
    return std::vector<std::uint8_t>(static_cast<size_t>(total), 1);
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::uint8_t> mask;
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::vector<double> field(static_cast<size_t>(total));
    for (double& v : field) v = gauss(rng);
    const std::vector<double> smooth = smooth_field(field, w, w / 8.0);
    double t_lo = *std::min_element(smooth.begin(), smooth.end()) - 1.0;
    double t_hi = *std::max_element(smooth.begin(), smooth.end());
    for (int iter = 0; iter < 64; ++iter) {
      const double t = 0.5 * (t_lo + t_hi);
      const int size = largest_component(smooth, w, t, mask);
      const double missing = 1.0 - static_cast<double>(size) / total;
      if (missing < lo) {
        t_lo = t;  // component too large: raise the threshold
      } else if (missing > hi) {
        t_hi = t;
      } else {
        return mask;
      }
    }
  }
  throw NumericError(
      "could not produce an ROI with the requested missing fraction");
}

SimTruth generate_signal(const SimConfig& config, std::mt19937_64& rng) {
  validate_config(config);
  const Matrix centers = sim_centers();
  const int w = 1 << config.L;

  SimTruth truth;

  // Active subset: partial Fisher-Yates over 0..16, then sorted.
  std::array<int, 17> pool;
  for (int i = 0; i < 17; ++i) pool[static_cast<size_t>(i)] = i;
  for (int i = 0; i < config.p; ++i) {
    std::uniform_int_distribution<int> pick(i, 16);
    std::swap(pool[static_cast<size_t>(i)],
              pool[static_cast<size_t>(pick(rng))]);
  }
  truth.active.assign(pool.begin(), pool.begin() + config.p);
  std::sort(truth.active.begin(), truth.active.end());

  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  truth.varsigma.resize(17);
  for (Index k = 0; k < 17; ++k) truth.varsigma(k) = unif(rng);

  std::normal_distribution<double> gauss(0.0, 1.0);
  truth.w = Matrix::Zero(config.N, 17);
  truth.patients.resize(static_cast<size_t>(config.N));
  for (Index j = 0; j < config.N; ++j) {
    SimPatient& patient = truth.patients[static_cast<size_t>(j)];
    patient.mask =
        generate_roi(config.L, config.missing_lo, config.missing_hi, rng);

    for (int k : truth.active) {
      truth.w(j, k) = gauss(rng) * std::sqrt(config.tau + truth.varsigma(k));
    }

    const Index n_j = static_cast<Index>(
        std::count(patient.mask.begin(), patient.mask.end(), 1));
    patient.locations.resize(n_j, 2);
    patient.y_true.resize(n_j);
    patient.z.resize(n_j);
    Index row = 0;
    for (int iy = 0; iy < w; ++iy) {
      for (int ix = 0; ix < w; ++ix) {
        if (!patient.mask[static_cast<size_t>(iy * w + ix)]) continue;
        const double sx = (ix + 0.5) / w;
        const double sy = (iy + 0.5) / w;
        patient.locations(row, 0) = sx;
        patient.locations(row, 1) = sy;
        double y = 0;
        for (int k : truth.active) {
          const double dx = sx - centers(k, 0);
          const double dy = sy - centers(k, 1);
          y += truth.w(j, k) * std::cos(std::sqrt(dx * dx + dy * dy));
        }
        patient.y_true(row) = y;
        ++row;
      }
    }
    for (Index i = 0; i < n_j; ++i) {
      patient.z(i) = patient.y_true(i) + gauss(rng);
    }
  }
  return truth;
}

double quantile(std::vector<double> xs, double p) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const double h = p * static_cast<double>(xs.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

namespace {

// Bases are reused across replicates whose patient unions coincide (at the
// default missing rates the union is almost always the full pixel grid).
class BasisCache {
 public:
  std::shared_ptr<const BasisSet> get(const Domain& domain, Index kmax) {
    std::string key;
    key.reserve(static_cast<size_t>(domain.locations.size()) * sizeof(double) +
                16);
    key.append(reinterpret_cast<const char*>(&domain.dim), sizeof(domain.dim));
    key.append(reinterpret_cast<const char*>(&kmax), sizeof(kmax));
    key.append(reinterpret_cast<const char*>(domain.locations.data()),
               static_cast<size_t>(domain.locations.size()) * sizeof(double));
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    auto basis =
        std::make_shared<const BasisSet>(build_basis(domain, kmax));
    std::lock_guard<std::mutex> lock(mutex_);
    if (cache_.size() > 32) cache_.clear();
    return cache_.emplace(std::move(key), std::move(basis)).first->second;
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const BasisSet>> cache_;
};

}  // namespace

std::vector<CellSummary> run_experiment(const std::vector<SimConfig>& cells,
                                        const ExperimentOptions& options) {
  std::vector<CellSummary> out;
  BasisCache cache;
  for (const SimConfig& config : cells) {
    validate_config(config);
    CellSummary cell;
    cell.config = config;
    const auto start = std::chrono::steady_clock::now();

    std::vector<double> h_by_rep(static_cast<size_t>(config.replicates),
                                 std::numeric_limits<double>::quiet_NaN());
    std::vector<Index> k_by_rep(static_cast<size_t>(config.replicates), -1);

    parallel_for(config.replicates, options.threads, [&](Index rep) {
      try {
        std::mt19937_64 rng =
            replicate_stream(config, static_cast<int>(rep));
        const SimTruth truth = generate_signal(config, rng);

        std::vector<RawPatient> raw(truth.patients.size());
        for (size_t j = 0; j < truth.patients.size(); ++j) {
          raw[j].id = "p" + std::to_string(j);
          raw[j].locations = truth.patients[j].locations;
          raw[j].values = truth.patients[j].z;
        }
        const Domain domain = build_domain(raw);
        const Index kmax =
            options.kmax ? options.kmax : default_kmax(domain.size(), 2);
        const std::shared_ptr<const BasisSet> basis =
            cache.get(domain, kmax);

        std::vector<DetrendedPatient> detrended;
        detrended.reserve(raw.size());
        for (const RawPatient& r : raw) {
          detrended.push_back(detrend(bind_patient(r, domain)));
        }
        const FitData data =
            prepare_fit_data(detrended, *basis, basis->kmax);
        const SelectResult sel = select_K(data, 2, options.select);
        const Decomposition dec =
            decompose(sel.best, *basis, options.decompose);
        h_by_rep[static_cast<size_t>(rep)] =
            static_cast<double>(dec.H_star);
        k_by_rep[static_cast<size_t>(rep)] = sel.K_star;
      } catch (const std::exception&) {
        // Recorded below as a failure; the grid keeps going.
      }
    });

    for (int rep = 0; rep < config.replicates; ++rep) {
      if (std::isnan(h_by_rep[static_cast<size_t>(rep)])) {
        ++cell.failures;
      } else {
        cell.h_values.push_back(h_by_rep[static_cast<size_t>(rep)]);
        cell.k_values.push_back(k_by_rep[static_cast<size_t>(rep)]);
        ++cell.completed;
      }
    }
    cell.median_H = quantile(cell.h_values, 0.5);
    cell.q25 = quantile(cell.h_values, 0.25);
    cell.q75 = quantile(cell.h_values, 0.75);
    cell.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    out.push_back(std::move(cell));
  }
  return out;
}

}  // namespace spdecomp
