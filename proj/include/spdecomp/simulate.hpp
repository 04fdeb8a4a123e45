#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "spdecomp/em.hpp"
#include "spdecomp/features.hpp"
#include "spdecomp/types.hpp"

namespace spdecomp {

// One cell of the synthetic-data experiment: N patients on the 2^L x 2^L
// pixel grid over [0,1]^2, p active cosine centers, weight variance tau +
// uniform heterogeneity, unit Gaussian noise, per-patient random ROIs whose
// missing fraction lies within [missing_lo, missing_hi].
struct SimConfig {
  Index N = 30;
  int L = 5;
  double tau = 2.0;
  int p = 0;
  double missing_lo = 0.25;
  double missing_hi = 0.6;
  int replicates = 30;
  std::uint64_t seed = 0;
};

struct SimPatient {
  std::vector<std::uint8_t> mask;  // 2^L * 2^L cells, row iy, column ix
  Matrix locations;                // n_j x 2 observed pixel centroids
  Vector y_true;                   // noiseless signal at the centroids
  Vector z;                        // observed = y_true + N(0,1)
};

struct SimTruth {
  std::vector<int> active;  // ascending indices into sim_centers()
  Vector varsigma;          // 17 heterogeneity draws, U[-0.5, 0.5]
  Matrix w;                 // N x 17 weights; inactive columns are zero
  std::vector<SimPatient> patients;
};

// The 17 fixed cosine centers {(i/5, j/5): i,j = 1..4} plus (1/2, 1/2).
Matrix sim_centers();

// Deterministic replicate stream: splitmix-style mixing of the seed with the
// cell parameters and the replicate index, so a cell's draws do not depend on
// grid composition or thread count.
std::mt19937_64 replicate_stream(const SimConfig& config, int replicate);

// Blob-shaped ROI: an iid Gaussian field smoothed with a Gaussian kernel of
// bandwidth 2^L/8 pixels (zero padding), thresholded, keeping the largest
// 8-connected super-level component; the threshold is bisected until the
// missing fraction lands in [lo, hi]. lo = hi = 0 returns the full square.
std::vector<std::uint8_t> generate_roi(int L, double lo, double hi,
                                       std::mt19937_64& rng);

// Full synthetic dataset for one replicate:
// y_j(s) = sum_{k active} w_jk cos(||s - c_k||), w_jk ~ N(0, tau + vs_k),
// z_j = y_j + N(0,1). Active centers are a uniform random size-p subset;
// vs_k are drawn once and shared across patients.
SimTruth generate_signal(const SimConfig& config, std::mt19937_64& rng);

struct CellSummary {
  SimConfig config;
  int completed = 0;  // replicates that produced an H*
  int failures = 0;
  double median_H = 0;
  double q25 = 0;
  double q75 = 0;
  double seconds = 0;
  std::vector<double> h_values;  // per completed replicate
  std::vector<Index> k_values;
};

struct ExperimentOptions {
  int threads = 1;
  Index kmax = 0;  // 0 = per-domain default
  SelectOptions select;
  DecomposeOptions decompose;
};

// Runs the full pipeline (domain -> basis -> select_K -> decompose) for every
// replicate of every cell and summarizes H*. Per-replicate failures are
// recorded and excluded, never aborting the grid. Identical (seed, configs)
// give identical summaries for any thread count (timing aside).
std::vector<CellSummary> run_experiment(const std::vector<SimConfig>& cells,
                                        const ExperimentOptions& options = {});

// Linear-interpolation quantile (same convention as common statistics
// packages) of a copy of xs; p in [0,1].
double quantile(std::vector<double> xs, double p);

}  // namespace spdecomp
