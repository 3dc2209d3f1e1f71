#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tsds/assign.hpp"
#include "tsds/density.hpp"
#include "tsds/knn.hpp"

namespace tsds::testing {

using Row = std::vector<std::pair<std::uint32_t, double>>;

// Embedding set from row literals; ids are sequential from 0.
inline EmbeddingSet from_rows(const std::vector<std::vector<float>>& rows) {
  if (rows.empty()) throw std::invalid_argument("from_rows: no rows");
  EmbeddingSet set;
  set.dim = static_cast<std::uint32_t>(rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != set.dim)
      throw std::invalid_argument("from_rows: ragged rows");
    set.ids.push_back(r);
    set.vectors.insert(set.vectors.end(), rows[r].begin(), rows[r].end());
  }
  return set;
}

// Hand-built neighbor table. Rows list (candidate position, distance) in the
// order the retrieval layer would emit them; callers keep them sorted.
inline NeighborTable make_table(std::size_t n, const std::vector<Row>& rows) {
  if (rows.empty()) throw std::invalid_argument("make_table: no rows");
  NeighborTable t;
  t.query_count = rows.size();
  t.prefetch = rows.front().size();
  t.candidate_count = n;
  for (const auto& row : rows) {
    if (row.size() != t.prefetch)
      throw std::invalid_argument("make_table: ragged rows");
    for (const auto& [pos, dist] : row) {
      t.indices.push_back(pos);
      t.distances.push_back(dist);
    }
  }
  return t;
}

// Density table aligned with `t`. rho holds one value per candidate
// position; unique covers all N so assumption checks and exact objectives
// stay active.
inline DensityTable make_densities(const NeighborTable& t,
                                   const std::vector<double>& rho, double h) {
  if (rho.size() != t.candidate_count)
    throw std::invalid_argument("make_densities: rho size mismatch");
  DensityTable d;
  d.query_count = t.query_count;
  d.prefetch = t.prefetch;
  d.h = h;
  d.neighbors_used = t.candidate_count;
  d.values.resize(t.query_count * t.prefetch);
  for (std::size_t i = 0; i < t.query_count; ++i)
    for (std::size_t k = 0; k < t.prefetch; ++k)
      d.values[i * t.prefetch + k] = rho[t.row_indices(i)[k]];
  for (std::uint32_t j = 0; j < t.candidate_count; ++j)
    d.unique.emplace_back(j, rho[j]);
  return d;
}

// Dense m*n distance matrix consistent with the table; cells the table does
// not mention get `fill`, which callers choose beyond every listed distance
// so the closed form and the dense objective see the same instance.
inline std::vector<double> dense_distances(const NeighborTable& t,
                                           double fill) {
  std::vector<double> d(t.query_count * t.candidate_count, fill);
  for (std::size_t i = 0; i < t.query_count; ++i)
    for (std::size_t k = 0; k < t.prefetch; ++k)
      d[i * t.candidate_count + t.row_indices(i)[k]] = t.row_distances(i)[k];
  return d;
}

}  // namespace tsds::testing
