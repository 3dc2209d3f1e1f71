#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tsds {

// In-memory embedding collection. Rows are float32 storage, row-major;
// all distance arithmetic downstream runs in double. Ids are opaque 64-bit
// labels and may repeat: the set is a multiset of rows, and nothing ever
// deduplicates by id.
struct EmbeddingSet {
  std::vector<std::uint64_t> ids;
  std::uint32_t dim = 0;
  std::vector<float> vectors;  // count() * dim
  bool normalized = false;

  std::size_t count() const { return ids.size(); }
  std::span<const float> row(std::size_t r) const {
    return {vectors.data() + r * static_cast<std::size_t>(dim), dim};
  }
};

double euclidean_sq(std::span<const float> a, std::span<const float> b);
double euclidean(std::span<const float> a, std::span<const float> b);

// One JSON object per line: {"id": <unsigned>, "vec": [..]}. Dimension is
// fixed by the first line. Throws std::invalid_argument with the offending
// line number on malformed input, dimension mismatch, or non-finite values.
EmbeddingSet ingest_jsonl(const std::string& path);

// Binary container, little-endian: magic "TSEM", u32 version=1,
// u8 normalized flag, 3 zero pad bytes, u32 dim, u64 count, then
// count * (u64 id, dim * f32). Round trips are bit-exact.
void write_binary(const EmbeddingSet& set, const std::string& path);
EmbeddingSet read_binary(const std::string& path);

// Scales every row to unit Euclidean norm (computed in double) in place and
// sets the normalized flag. A row of exactly zero norm is rejected with its
// row index. Idempotent up to f32 rounding.
void normalize(EmbeddingSet& set);

struct GaussianComponent {
  std::vector<double> mean;
  double stddev = 1.0;   // isotropic; 0 collapses the component to its mean
  std::size_t count = 0;
};

// Deterministic synthetic corpus: rows are drawn component by component with
// a seeded, fully specified generator (mt19937_64 + Box-Muller). Ids are
// assigned sequentially from 0.
EmbeddingSet synth_mixture(const std::vector<GaussianComponent>& components,
                           std::uint64_t seed);

struct DuplicationSpec {
  double fraction = 0.0;    // share of rows to duplicate, in [0, 1]
  std::uint32_t factor = 0; // exact copies appended per chosen row
  std::uint64_t seed = 0;
};

// Provenance of an inject_duplicates call: which rows were chosen and the
// fresh ids minted for their copies. copy_ids[k] belongs to original_ids[k].
// original_rows holds the row positions, which stay valid in the output set
// because originals are never moved.
struct DuplicationRecord {
  std::vector<std::size_t> original_rows;
  std::vector<std::uint64_t> original_ids;
  std::vector<std::vector<std::uint64_t>> copy_ids;
};

// Appends factor exact copies of round(fraction * count) seeded-chosen rows.
// Copies get fresh ids above the current maximum; originals are untouched.
std::pair<EmbeddingSet, DuplicationRecord> inject_duplicates(
    const EmbeddingSet& set, const DuplicationSpec& spec);

// FNV-1a over a whole file, used to tie persisted index structures to the
// candidate file they were built from.
std::uint64_t fnv1a_file(const std::string& path);

}  // namespace tsds
