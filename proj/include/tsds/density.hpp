#pragma once

#include <cstdint>
#include <vector>

#include "tsds/embedding_set.hpp"
#include "tsds/knn.hpp"

namespace tsds {

// Clamped quadratic kernel: max(1 - (d/h)^2, 0). A point always contributes
// exactly 1 to its own density.
double epanechnikov_weight(double distance, double h);

// Kernel density estimates aligned with a neighbor table: values[i*L + k] is
// the density of the k-th neighbor of query i. A candidate appearing in many
// rows is computed once; `unique` lists (position, rho) sorted by position.
struct DensityTable {
  std::size_t query_count = 0;
  std::size_t prefetch = 0;
  double h = 0.0;
  std::size_t neighbors_used = 0;  // I
  std::vector<double> values;      // query_count * prefetch
  std::vector<std::pair<std::uint32_t, double>> unique;

  double at(std::size_t i, std::size_t k) const {
    return values[i * prefetch + k];
  }
};

struct KdeOptions {
  // At most this many unique points are handled by the exact all-pairs scan;
  // larger pools go through the same partition + coarse-fetch retrieval the
  // knn index uses, which approximates the I-nearest lookup.
  std::size_t exact_cap = 4096;
  std::uint32_t partition_count = 0;  // 0 = auto (~sqrt of pool size)
  std::uint32_t coarse_fetch = 0;     // 0 = auto (max(2I, 512))
  unsigned lloyd_iterations = 6;
  std::size_t train_cap = 100000;
  std::uint64_t seed = 0xD15EULL;     // fixed: densities take no user seed
  unsigned threads = 0;
};

// Density of every unique candidate in the neighbor table over the pool D'
// of those unique candidates: rho(x) = sum of kernel weights over the I
// nearest members of D' (x itself included; members beyond h contribute 0).
// Ties rank by (distance, candidate position).
DensityTable compute_kde(const NeighborTable& neighbors,
                         const EmbeddingSet& candidates, std::size_t i_neighbors,
                         double h, const KdeOptions& options = {});

// Exact densities over the whole candidate set (every point against every
// other). Desk-scale diagnostic; refuses sets larger than `cap`.
std::vector<double> compute_kde_full(const EmbeddingSet& candidates,
                                     std::size_t i_neighbors, double h,
                                     std::size_t cap = 10000);

// Distance statistics over a user-supplied list of near-duplicate rows,
// to guide the choice of h (the max is the usual pick).
struct KernelSizeReport {
  double min_distance = 0.0;
  double mean_distance = 0.0;
  double max_distance = 0.0;
};
KernelSizeReport suggest_kernel_size(const EmbeddingSet& set,
                                     const std::vector<std::size_t>& rows);

}  // namespace tsds
