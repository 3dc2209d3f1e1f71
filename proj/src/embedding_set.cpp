#include "tsds/embedding_set.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tsds/rng.hpp"

namespace tsds {

double euclidean_sq(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

double euclidean(std::span<const float> a, std::span<const float> b) {
  return std::sqrt(euclidean_sq(a, b));
}

namespace {

[[noreturn]] void fail_line(const std::string& path, std::size_t line,
                            const std::string& what) {
  throw std::invalid_argument(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

EmbeddingSet ingest_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  EmbeddingSet set;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      // parse_error for malformed text, out_of_range for overflowing
      // literals like 1e999; both must name the offending line.
      fail_line(path, lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec.contains("vec"))
      fail_line(path, lineno, "expected object with \"id\" and \"vec\"");
    if (!rec["id"].is_number_unsigned())
      fail_line(path, lineno, "\"id\" must be an unsigned integer");
    const auto& vec = rec["vec"];
    if (!vec.is_array() || vec.empty())
      fail_line(path, lineno, "\"vec\" must be a non-empty array");
    if (set.dim == 0) {
      set.dim = static_cast<std::uint32_t>(vec.size());
    } else if (vec.size() != set.dim) {
      fail_line(path, lineno,
                "dimension mismatch: expected " + std::to_string(set.dim) +
                    ", got " + std::to_string(vec.size()));
    }
    set.ids.push_back(rec["id"].get<std::uint64_t>());
    for (const auto& v : vec) {
      if (!v.is_number()) fail_line(path, lineno, "\"vec\" entries must be numbers");
      const double x = v.get<double>();
      if (!std::isfinite(x)) fail_line(path, lineno, "non-finite vector entry");
      set.vectors.push_back(static_cast<float>(x));
    }
  }
  if (set.ids.empty()) throw std::invalid_argument(path + ": empty set");
  return set;
}

namespace {

constexpr char kEmbeddingMagic[4] = {'T', 'S', 'E', 'M'};
constexpr std::uint32_t kEmbeddingVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  // Formats are little-endian by contract; this writes the host
  // representation, which matches on every target we build for.
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

void write_binary(const EmbeddingSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kEmbeddingMagic, 4);
  put(out, kEmbeddingVersion);
  put(out, static_cast<std::uint8_t>(set.normalized ? 1 : 0));
  const char pad[3] = {0, 0, 0};
  out.write(pad, 3);
  put(out, set.dim);
  put(out, static_cast<std::uint64_t>(set.count()));
  for (std::size_t r = 0; r < set.count(); ++r) {
    put(out, set.ids[r]);
    out.write(reinterpret_cast<const char*>(set.vectors.data() +
                                            r * static_cast<std::size_t>(set.dim)),
              static_cast<std::streamsize>(sizeof(float) * set.dim));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

EmbeddingSet read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kEmbeddingMagic, 4) != 0)
    throw std::invalid_argument(path + ": bad magic");
  const auto version = take<std::uint32_t>(in, path);
  if (version != kEmbeddingVersion)
    throw std::invalid_argument(path + ": unsupported version " +
                                std::to_string(version));
  const auto normalized = take<std::uint8_t>(in, path);
  char pad[3];
  in.read(pad, 3);
  if (!in) throw std::invalid_argument(path + ": truncated file");
  EmbeddingSet set;
  set.normalized = normalized != 0;
  set.dim = take<std::uint32_t>(in, path);
  const auto count = take<std::uint64_t>(in, path);
  if (set.dim == 0 || count == 0)
    throw std::invalid_argument(path + ": empty set");
  set.ids.resize(count);
  set.vectors.resize(count * set.dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    set.ids[r] = take<std::uint64_t>(in, path);
    in.read(reinterpret_cast<char*>(set.vectors.data() +
                                    r * static_cast<std::size_t>(set.dim)),
            static_cast<std::streamsize>(sizeof(float) * set.dim));
    if (!in) throw std::invalid_argument(path + ": truncated file");
  }
  for (float v : set.vectors)
    if (!std::isfinite(v))
      throw std::invalid_argument(path + ": non-finite vector entry");
  return set;
}

void normalize(EmbeddingSet& set) {
  for (std::size_t r = 0; r < set.count(); ++r) {
    float* row = set.vectors.data() + r * static_cast<std::size_t>(set.dim);
    double acc = 0.0;
    for (std::uint32_t i = 0; i < set.dim; ++i)
      acc += static_cast<double>(row[i]) * static_cast<double>(row[i]);
    if (acc == 0.0)
      throw std::invalid_argument("zero-norm row at index " + std::to_string(r));
    const double inv = 1.0 / std::sqrt(acc);
    for (std::uint32_t i = 0; i < set.dim; ++i)
      row[i] = static_cast<float>(static_cast<double>(row[i]) * inv);
  }
  set.normalized = true;
}

EmbeddingSet synth_mixture(const std::vector<GaussianComponent>& components,
                           std::uint64_t seed) {
  if (components.empty())
    throw std::invalid_argument("synth_mixture: no components");
  const std::size_t dim = components.front().mean.size();
  if (dim == 0) throw std::invalid_argument("synth_mixture: zero dimension");
  EmbeddingSet set;
  set.dim = static_cast<std::uint32_t>(dim);
  std::size_t total = 0;
  for (const auto& c : components) {
    if (c.mean.size() != dim)
      throw std::invalid_argument("synth_mixture: component dimension mismatch");
    if (c.stddev < 0.0)
      throw std::invalid_argument("synth_mixture: negative stddev");
    total += c.count;
  }
  if (total == 0) throw std::invalid_argument("synth_mixture: zero rows");
  set.ids.reserve(total);
  set.vectors.reserve(total * dim);
  std::uint64_t next_id = 0;
  for (std::size_t ci = 0; ci < components.size(); ++ci) {
    const auto& c = components[ci];
    GaussianSource gauss(splitmix64(seed ^ (0x5eedULL + ci)));
    for (std::size_t r = 0; r < c.count; ++r) {
      set.ids.push_back(next_id++);
      for (std::size_t i = 0; i < dim; ++i) {
        const double z = c.stddev > 0.0 ? gauss.next() : 0.0;
        set.vectors.push_back(static_cast<float>(c.mean[i] + c.stddev * z));
      }
    }
  }
  return set;
}

std::pair<EmbeddingSet, DuplicationRecord> inject_duplicates(
    const EmbeddingSet& set, const DuplicationSpec& spec) {
  if (spec.fraction < 0.0 || spec.fraction > 1.0)
    throw std::invalid_argument("inject_duplicates: fraction out of [0,1]");
  const std::size_t n = set.count();
  const auto chosen_count = static_cast<std::size_t>(
      std::llround(spec.fraction * static_cast<double>(n)));

  EmbeddingSet out = set;
  DuplicationRecord record;
  if (chosen_count == 0 || spec.factor == 0) return {std::move(out), record};

  // Seeded partial Fisher-Yates; chosen row order is part of the contract
  // because copy ids are minted in that order.
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 g(splitmix64(spec.seed ^ 0xd0b1edULL));
  for (std::size_t i = 0; i < chosen_count; ++i) {
    const std::size_t j = i + uniform_index(g, n - i);
    std::swap(perm[i], perm[j]);
  }
  perm.resize(chosen_count);

  std::uint64_t next_id = 0;
  for (std::uint64_t id : set.ids) next_id = std::max(next_id, id + 1);

  record.original_rows.reserve(chosen_count);
  record.original_ids.reserve(chosen_count);
  record.copy_ids.reserve(chosen_count);
  for (std::size_t row : perm) {
    record.original_rows.push_back(row);
    record.original_ids.push_back(set.ids[row]);
    auto& copies = record.copy_ids.emplace_back();
    for (std::uint32_t k = 0; k < spec.factor; ++k) {
      out.ids.push_back(next_id);
      copies.push_back(next_id);
      ++next_id;
      const auto src = set.row(row);
      out.vectors.insert(out.vectors.end(), src.begin(), src.end());
    }
  }
  return {std::move(out), record};
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::uint64_t hash = 14695981039346656037ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 1099511628211ULL;
    }
  }
  return hash;
}

}  // namespace tsds
