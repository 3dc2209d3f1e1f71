#include "tsds/knn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "tsds/parallel.hpp"
#include "tsds/rng.hpp"

namespace tsds {

namespace {

double dist_sq_f32(const float* a, const float* b, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

double dist_sq_f32d(const float* a, const double* b, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

std::uint32_t nearest_centroid(const float* p, const std::vector<double>& centroids,
                               std::size_t k, std::size_t dim) {
  std::uint32_t best = 0;
  double best_d = dist_sq_f32d(p, centroids.data(), dim);
  for (std::size_t c = 1; c < k; ++c) {
    const double d = dist_sq_f32d(p, centroids.data() + c * dim, dim);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return best;
}

}  // namespace

CoarsePartition build_partition(const float* data, std::size_t n,
                                std::size_t dim, std::size_t partition_count,
                                unsigned iterations, std::size_t train_cap,
                                std::uint64_t seed, unsigned threads) {
  if (partition_count == 0 || partition_count > n)
    throw std::invalid_argument("partition count must be in [1, point count]");

  // Training subset: all points when they fit, else a seeded sample drawn
  // without replacement via partial Fisher-Yates.
  train_cap = std::max(train_cap, partition_count);
  std::vector<std::uint32_t> train(n);
  std::iota(train.begin(), train.end(), 0u);
  std::mt19937_64 g(splitmix64(seed ^ 0x11f0a9ULL));
  const std::size_t shuffle_span = std::min(n, std::max(train_cap, partition_count));
  for (std::size_t i = 0; i < shuffle_span; ++i) {
    const std::size_t j = i + uniform_index(g, n - i);
    std::swap(train[i], train[j]);
  }
  train.resize(std::min(n, train_cap));

  CoarsePartition part;
  part.dim = dim;
  part.centroids.resize(partition_count * dim);
  for (std::size_t c = 0; c < partition_count; ++c) {
    const float* src = data + static_cast<std::size_t>(train[c]) * dim;
    for (std::size_t i = 0; i < dim; ++i)
      part.centroids[c * dim + i] = static_cast<double>(src[i]);
  }

  std::vector<std::uint32_t> train_assign(train.size());
  for (unsigned it = 0; it < iterations; ++it) {
    parallel_for(train.size(), threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t t = b; t < e; ++t)
        train_assign[t] = nearest_centroid(data + static_cast<std::size_t>(train[t]) * dim,
                                           part.centroids, partition_count, dim);
    });
    // Sequential mean update keeps the result independent of thread count.
    std::vector<double> sums(partition_count * dim, 0.0);
    std::vector<std::size_t> counts(partition_count, 0);
    for (std::size_t t = 0; t < train.size(); ++t) {
      const float* p = data + static_cast<std::size_t>(train[t]) * dim;
      double* s = sums.data() + static_cast<std::size_t>(train_assign[t]) * dim;
      for (std::size_t i = 0; i < dim; ++i) s[i] += static_cast<double>(p[i]);
      ++counts[train_assign[t]];
    }
    for (std::size_t c = 0; c < partition_count; ++c) {
      if (counts[c] == 0) continue;  // empty partition keeps its centroid
      const double inv = 1.0 / static_cast<double>(counts[c]);
      for (std::size_t i = 0; i < dim; ++i)
        part.centroids[c * dim + i] = sums[c * dim + i] * inv;
    }
  }

  part.assignment.resize(n);
  parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p)
      part.assignment[p] =
          nearest_centroid(data + p * dim, part.centroids, partition_count, dim);
  });
  part.members.resize(partition_count);
  for (std::size_t p = 0; p < n; ++p)
    part.members[part.assignment[p]].push_back(static_cast<std::uint32_t>(p));
  return part;
}

std::vector<std::uint32_t> rank_partitions(const CoarsePartition& part,
                                           const float* query) {
  const std::size_t k = part.partition_count();
  std::vector<std::pair<double, std::uint32_t>> order(k);
  for (std::size_t c = 0; c < k; ++c)
    order[c] = {dist_sq_f32d(query, part.centroids.data() + c * part.dim, part.dim),
                static_cast<std::uint32_t>(c)};
  std::sort(order.begin(), order.end());
  std::vector<std::uint32_t> ranked(k);
  for (std::size_t c = 0; c < k; ++c) ranked[c] = order[c].second;
  return ranked;
}

Index build_index(const EmbeddingSet& candidates, const IndexParams& params) {
  if (candidates.count() == 0)
    throw std::invalid_argument("build_index: empty candidate set");
  Index index;
  index.candidates = &candidates;
  index.params = params;
  if (params.mode == IndexMode::two_stage) {
    std::uint32_t p = params.partition_count;
    if (p == 0)
      p = static_cast<std::uint32_t>(std::max<std::size_t>(
          1, static_cast<std::size_t>(std::sqrt(static_cast<double>(candidates.count())))));
    if (p > candidates.count())
      throw std::invalid_argument("build_index: partition_count exceeds candidate count");
    index.params.partition_count = p;
    index.partition =
        build_partition(candidates.vectors.data(), candidates.count(),
                        candidates.dim, p, 6, 100000, params.seed, params.threads);
  }
  return index;
}

namespace {

// Top-l of the gathered candidate positions by (distance^2, position).
void rank_into_row(const EmbeddingSet& cands, const float* q,
                   const std::vector<std::uint32_t>& pool, std::size_t l,
                   std::uint32_t* out_idx, double* out_dist) {
  std::vector<std::pair<double, std::uint32_t>> scored(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i)
    scored[i] = {dist_sq_f32(q, cands.vectors.data() +
                                    static_cast<std::size_t>(pool[i]) * cands.dim,
                             cands.dim),
                 pool[i]};
  std::partial_sort(scored.begin(), scored.begin() + l, scored.end());
  for (std::size_t k = 0; k < l; ++k) {
    out_idx[k] = scored[k].second;
    out_dist[k] = std::sqrt(scored[k].first);
  }
}

}  // namespace

NeighborTable get_knn(const Index& index, const EmbeddingSet& queries,
                      std::size_t l) {
  const EmbeddingSet& cands = *index.candidates;
  if (queries.dim != cands.dim)
    throw std::invalid_argument("get_knn: query/candidate dimension mismatch");
  if (l == 0) throw std::invalid_argument("get_knn: L must be positive");
  if (l > cands.count())
    throw std::invalid_argument("get_knn: L exceeds candidate count");

  const std::size_t m = queries.count();
  NeighborTable table;
  table.query_count = m;
  table.prefetch = l;
  table.candidate_count = cands.count();
  table.indices.resize(m * l);
  table.distances.resize(m * l);

  std::uint32_t coarse = index.params.coarse_fetch;
  if (index.params.mode == IndexMode::two_stage) {
    if (coarse == 0)
      coarse = static_cast<std::uint32_t>(std::min<std::size_t>(
          cands.count(), std::max<std::size_t>(4 * l, 512)));
    if (coarse < l)
      throw std::invalid_argument("get_knn: coarse_fetch below requested L");
  }

  parallel_for(m, index.params.threads, [&](std::size_t b, std::size_t e) {
    std::vector<std::uint32_t> pool;
    for (std::size_t qi = b; qi < e; ++qi) {
      const float* q = queries.vectors.data() +
                       qi * static_cast<std::size_t>(queries.dim);
      pool.clear();
      if (index.params.mode == IndexMode::exact) {
        pool.resize(cands.count());
        std::iota(pool.begin(), pool.end(), 0u);
      } else {
        const auto ranked = rank_partitions(index.partition, q);
        for (std::uint32_t pc : ranked) {
          const auto& mem = index.partition.members[pc];
          pool.insert(pool.end(), mem.begin(), mem.end());
          if (pool.size() >= coarse && pool.size() >= l) break;
        }
      }
      rank_into_row(cands, q, pool, l, table.indices.data() + qi * l,
                    table.distances.data() + qi * l);
    }
  });
  return table;
}

double recall_at_l(const NeighborTable& approx, const NeighborTable& exact) {
  if (approx.query_count != exact.query_count ||
      approx.prefetch != exact.prefetch)
    throw std::invalid_argument("recall_at_l: table shapes differ");
  const std::size_t l = approx.prefetch;
  double total = 0.0;
  std::vector<std::uint32_t> a(l), b(l);
  for (std::size_t i = 0; i < approx.query_count; ++i) {
    std::copy_n(approx.row_indices(i), l, a.begin());
    std::copy_n(exact.row_indices(i), l, b.begin());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::uint32_t> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(inter));
    total += static_cast<double>(inter.size()) / static_cast<double>(l);
  }
  return total / static_cast<double>(approx.query_count);
}

namespace {

constexpr char kIndexMagic[4] = {'T', 'S', 'I', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::invalid_argument(path + ": truncated file");
  return v;
}

}  // namespace

void save_index(const Index& index, const std::string& path,
                std::uint64_t source_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kIndexMagic, 4);
  put(out, kIndexVersion);
  put(out, static_cast<std::uint8_t>(index.params.mode));
  put(out, source_hash);
  put(out, static_cast<std::uint32_t>(index.candidates->dim));
  put(out, static_cast<std::uint64_t>(index.count()));
  if (index.params.mode == IndexMode::two_stage) {
    put(out, index.params.seed);
    put(out, index.params.partition_count);
    put(out, index.params.coarse_fetch);
    out.write(reinterpret_cast<const char*>(index.partition.centroids.data()),
              static_cast<std::streamsize>(sizeof(double) *
                                           index.partition.centroids.size()));
    out.write(reinterpret_cast<const char*>(index.partition.assignment.data()),
              static_cast<std::streamsize>(sizeof(std::uint32_t) *
                                           index.partition.assignment.size()));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::pair<Index, std::uint64_t> load_index(const std::string& path,
                                           const EmbeddingSet& candidates) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kIndexMagic, 4) != 0)
    throw std::invalid_argument(path + ": bad magic");
  const auto version = take<std::uint32_t>(in, path);
  if (version != kIndexVersion)
    throw std::invalid_argument(path + ": unsupported version " +
                                std::to_string(version));
  const auto mode = take<std::uint8_t>(in, path);
  if (mode > 1) throw std::invalid_argument(path + ": unknown index mode");
  const auto hash = take<std::uint64_t>(in, path);
  const auto dim = take<std::uint32_t>(in, path);
  const auto n = take<std::uint64_t>(in, path);
  if (dim != candidates.dim || n != candidates.count())
    throw std::invalid_argument(path + ": index does not match candidate set");

  Index index;
  index.candidates = &candidates;
  index.params.mode = static_cast<IndexMode>(mode);
  if (index.params.mode == IndexMode::two_stage) {
    index.params.seed = take<std::uint64_t>(in, path);
    index.params.partition_count = take<std::uint32_t>(in, path);
    index.params.coarse_fetch = take<std::uint32_t>(in, path);
    index.partition.dim = dim;
    index.partition.centroids.resize(
        static_cast<std::size_t>(index.params.partition_count) * dim);
    in.read(reinterpret_cast<char*>(index.partition.centroids.data()),
            static_cast<std::streamsize>(sizeof(double) *
                                         index.partition.centroids.size()));
    index.partition.assignment.resize(n);
    in.read(reinterpret_cast<char*>(index.partition.assignment.data()),
            static_cast<std::streamsize>(sizeof(std::uint32_t) * n));
    if (!in) throw std::invalid_argument(path + ": truncated file");
    index.partition.members.resize(index.params.partition_count);
    for (std::size_t p = 0; p < n; ++p) {
      if (index.partition.assignment[p] >= index.params.partition_count)
        throw std::invalid_argument(path + ": corrupt partition assignment");
      index.partition.members[index.partition.assignment[p]].push_back(
          static_cast<std::uint32_t>(p));
    }
  }
  return {std::move(index), hash};
}

}  // namespace tsds
