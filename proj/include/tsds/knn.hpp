#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsds/embedding_set.hpp"
#include "tsds/partition.hpp"

namespace tsds {

enum class IndexMode : std::uint8_t { exact = 0, two_stage = 1 };

struct IndexParams {
  IndexMode mode = IndexMode::exact;
  std::uint32_t partition_count = 0;  // 0 = auto (~sqrt(N)), two_stage only
  std::uint32_t coarse_fetch = 0;     // 0 = auto (4 * L); must be >= L if set
  std::uint64_t seed = 0;
  unsigned threads = 0;               // 0 = hardware concurrency
};

// Retrieval structure over a candidate set. Non-owning: the candidate set
// must outlive the index. exact mode is a full scan; two_stage restricts the
// exact re-rank to the nearest coarse partitions.
struct Index {
  const EmbeddingSet* candidates = nullptr;
  IndexParams params;
  CoarsePartition partition;  // two_stage only

  std::size_t count() const { return candidates->count(); }
};

// Sorted L-nearest-neighbor lists for M queries over N candidates.
// Row i holds candidate positions (0-based into the candidate set) in
// non-decreasing distance order; equal distances break toward the lower
// position. Distances are Euclidean (with sqrt), computed in double.
struct NeighborTable {
  std::size_t query_count = 0;      // M
  std::size_t prefetch = 0;         // L
  std::size_t candidate_count = 0;  // N
  std::vector<std::uint32_t> indices;  // M * L
  std::vector<double> distances;       // M * L

  const std::uint32_t* row_indices(std::size_t i) const {
    return indices.data() + i * prefetch;
  }
  const double* row_distances(std::size_t i) const {
    return distances.data() + i * prefetch;
  }
};

Index build_index(const EmbeddingSet& candidates, const IndexParams& params);

NeighborTable get_knn(const Index& index, const EmbeddingSet& queries,
                      std::size_t l);

// Mean over queries of |approx row ∩ exact row| / L. Tables must agree on
// query count and L.
double recall_at_l(const NeighborTable& approx, const NeighborTable& exact);

// Index persistence, magic "TSIX". Stores the structure plus an FNV-1a hash
// of the candidate file so a mismatched reload is detectable; exact mode
// stores only the hash. Vectors themselves stay in the embedding file.
void save_index(const Index& index, const std::string& path,
                std::uint64_t source_hash);
std::pair<Index, std::uint64_t> load_index(const std::string& path,
                                           const EmbeddingSet& candidates);

}  // namespace tsds
