#include "tsds/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tsds/parallel.hpp"

namespace tsds {

double epanechnikov_weight(double distance, double h) {
  if (h <= 0.0) throw std::invalid_argument("kernel size h must be positive");
  const double w = 1.0 - (distance * distance) / (h * h);
  return w > 0.0 ? w : 0.0;
}

namespace {

double dist_sq_rows(const float* a, const float* b, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

// Sum of clamped kernel weights over the I nearest of the collected
// within-h points. Points at or beyond h would contribute 0, so collecting
// only d^2 < h^2 and capping at I reproduces the I-nearest-neighbor sum.
// Accumulation runs in (distance, position) order on both execution paths.
double rho_from_hits(std::vector<std::pair<double, std::uint32_t>>& hits,
                     std::size_t i_neighbors, double h) {
  std::sort(hits.begin(), hits.end());
  if (hits.size() > i_neighbors) hits.resize(i_neighbors);
  const double h2 = h * h;
  double rho = 0.0;
  for (const auto& [d2, pos] : hits) rho += 1.0 - d2 / h2;
  return rho;
}

}  // namespace

DensityTable compute_kde(const NeighborTable& neighbors,
                         const EmbeddingSet& candidates, std::size_t i_neighbors,
                         double h, const KdeOptions& options) {
  if (h <= 0.0) throw std::invalid_argument("kernel size h must be positive");
  if (i_neighbors == 0)
    throw std::invalid_argument("kde neighbor count I must be positive");
  if (neighbors.candidate_count != candidates.count())
    throw std::invalid_argument("compute_kde: table does not match candidate set");

  // D' = unique candidate positions across all neighbor rows.
  std::vector<std::uint32_t> pool(neighbors.indices);
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  const std::size_t u = pool.size();
  const std::size_t dim = candidates.dim;

  std::vector<float> pts(u * dim);
  for (std::size_t k = 0; k < u; ++k) {
    const auto row = candidates.row(pool[k]);
    std::copy(row.begin(), row.end(), pts.begin() + k * dim);
  }

  const double h2 = h * h;
  std::vector<double> rho(u);

  if (u <= options.exact_cap) {
    parallel_for(u, options.threads, [&](std::size_t b, std::size_t e) {
      std::vector<std::pair<double, std::uint32_t>> hits;
      for (std::size_t k = b; k < e; ++k) {
        hits.clear();
        const float* x = pts.data() + k * dim;
        for (std::size_t j = 0; j < u; ++j) {
          const double d2 = dist_sq_rows(x, pts.data() + j * dim, dim);
          if (d2 < h2) hits.emplace_back(d2, pool[j]);
        }
        rho[k] = rho_from_hits(hits, i_neighbors, h);
      }
    });
  } else {
    std::uint32_t pc = options.partition_count;
    if (pc == 0)
      pc = static_cast<std::uint32_t>(std::max<std::size_t>(
          1, static_cast<std::size_t>(std::sqrt(static_cast<double>(u)))));
    pc = static_cast<std::uint32_t>(std::min<std::size_t>(pc, u));
    std::size_t coarse = options.coarse_fetch;
    if (coarse == 0) coarse = std::max<std::size_t>(2 * i_neighbors, 512);
    const CoarsePartition part =
        build_partition(pts.data(), u, dim, pc, options.lloyd_iterations,
                        options.train_cap, options.seed, options.threads);
    parallel_for(u, options.threads, [&](std::size_t b, std::size_t e) {
      std::vector<std::pair<double, std::uint32_t>> hits;
      for (std::size_t k = b; k < e; ++k) {
        hits.clear();
        const float* x = pts.data() + k * dim;
        const auto ranked = rank_partitions(part, x);
        std::size_t seen = 0;
        for (std::uint32_t p : ranked) {
          for (std::uint32_t member : part.members[p]) {
            const double d2 = dist_sq_rows(x, pts.data() + member * dim, dim);
            if (d2 < h2) hits.emplace_back(d2, pool[member]);
          }
          seen += part.members[p].size();
          if (seen >= coarse) break;
        }
        rho[k] = rho_from_hits(hits, i_neighbors, h);
      }
    });
  }

  DensityTable table;
  table.query_count = neighbors.query_count;
  table.prefetch = neighbors.prefetch;
  table.h = h;
  table.neighbors_used = i_neighbors;
  table.values.resize(neighbors.indices.size());
  table.unique.resize(u);
  for (std::size_t k = 0; k < u; ++k) table.unique[k] = {pool[k], rho[k]};
  for (std::size_t e = 0; e < neighbors.indices.size(); ++e) {
    const auto it = std::lower_bound(pool.begin(), pool.end(),
                                     neighbors.indices[e]);
    table.values[e] = rho[static_cast<std::size_t>(it - pool.begin())];
  }
  return table;
}

std::vector<double> compute_kde_full(const EmbeddingSet& candidates,
                                     std::size_t i_neighbors, double h,
                                     std::size_t cap) {
  if (h <= 0.0) throw std::invalid_argument("kernel size h must be positive");
  if (i_neighbors == 0)
    throw std::invalid_argument("kde neighbor count I must be positive");
  const std::size_t n = candidates.count();
  if (n > cap)
    throw std::invalid_argument("compute_kde_full: candidate count exceeds cap");
  const std::size_t dim = candidates.dim;
  const double h2 = h * h;
  std::vector<double> rho(n);
  parallel_for(n, 0, [&](std::size_t b, std::size_t e) {
    std::vector<std::pair<double, std::uint32_t>> hits;
    for (std::size_t k = b; k < e; ++k) {
      hits.clear();
      const float* x = candidates.vectors.data() + k * dim;
      for (std::size_t j = 0; j < n; ++j) {
        const double d2 =
            dist_sq_rows(x, candidates.vectors.data() + j * dim, dim);
        if (d2 < h2) hits.emplace_back(d2, static_cast<std::uint32_t>(j));
      }
      rho[k] = rho_from_hits(hits, i_neighbors, h);
    }
  });
  return rho;
}

KernelSizeReport suggest_kernel_size(const EmbeddingSet& set,
                                     const std::vector<std::size_t>& rows) {
  if (rows.size() < 2)
    throw std::invalid_argument("suggest_kernel_size: need at least two rows");
  for (std::size_t r : rows)
    if (r >= set.count())
      throw std::invalid_argument("suggest_kernel_size: row index out of range");
  KernelSizeReport report;
  report.min_distance = std::numeric_limits<double>::infinity();
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      const double d = euclidean(set.row(rows[a]), set.row(rows[b]));
      report.min_distance = std::min(report.min_distance, d);
      report.max_distance = std::max(report.max_distance, d);
      total += d;
      ++pairs;
    }
  report.mean_distance = total / static_cast<double>(pairs);
  return report;
}

}  // namespace tsds
