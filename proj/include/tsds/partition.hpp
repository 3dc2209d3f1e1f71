#pragma once

#include <cstdint>
#include <vector>

namespace tsds {

// Nearest-centroid partition of a flat f32 point array, built by a seeded
// fixed-iteration Lloyd refinement. Deterministic for a given seed: ties go
// to the lowest centroid index, centroid updates accumulate in point order,
// and parallelism only splits read-only assignment work.
struct CoarsePartition {
  std::size_t dim = 0;
  std::vector<double> centroids;            // partition_count * dim
  std::vector<std::uint32_t> assignment;    // point -> partition
  std::vector<std::vector<std::uint32_t>> members;  // ascending point order

  std::size_t partition_count() const { return members.size(); }
};

// When n exceeds train_cap the centroids are refined on a seeded sample of
// train_cap points; every point still gets a final assignment pass.
CoarsePartition build_partition(const float* data, std::size_t n,
                                std::size_t dim, std::size_t partition_count,
                                unsigned iterations, std::size_t train_cap,
                                std::uint64_t seed, unsigned threads);

// Partitions ordered by (centroid distance, index) for one query point.
std::vector<std::uint32_t> rank_partitions(const CoarsePartition& part,
                                           const float* query);

}  // namespace tsds
