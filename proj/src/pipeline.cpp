#include "tsds/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include "tsds/log.hpp"

namespace tsds {

std::string regularizer_name(Regularizer r) {
  switch (r) {
    case Regularizer::uniform: return "uniform";
    case Regularizer::kde: return "kde";
    case Regularizer::tv: return "tv";
  }
  throw std::logic_error("unreachable regularizer");
}

Regularizer parse_regularizer(const std::string& name) {
  if (name == "uniform") return Regularizer::uniform;
  if (name == "kde") return Regularizer::kde;
  if (name == "tv") return Regularizer::tv;
  throw std::invalid_argument("unknown regularizer '" + name +
                              "' (expected uniform, kde, or tv)");
}

SelectionOutput run_selection(const EmbeddingSet& queries,
                              const EmbeddingSet& candidates,
                              const SelectionConfig& config,
                              const PipelineOptions& options,
                              const Index* prebuilt) {
  validate(config);
  if (queries.count() == 0)
    throw std::invalid_argument("run_selection: empty query set");
  if (candidates.count() == 0)
    throw std::invalid_argument("run_selection: empty candidate set");
  if (queries.dim != candidates.dim)
    throw std::invalid_argument("run_selection: query/candidate dim mismatch");

  SelectionConfig resolved = config;
  if (resolved.prefetch > candidates.count()) {
    log_at(LogLevel::info, "prefetch %zu exceeds candidate count %zu, clamping",
           resolved.prefetch, candidates.count());
    resolved.prefetch = candidates.count();
  }

  Index local;
  const Index* index = prebuilt;
  if (index == nullptr) {
    local = build_index(candidates, options.index);
    index = &local;
  }

  const NeighborTable neighbors = get_knn(*index, queries, resolved.prefetch);

  SelectionOutput out;
  out.resolved = resolved;
  out.query_count = queries.count();
  out.candidate_count = candidates.count();

  AssignResult assigned;
  switch (resolved.regularizer) {
    case Regularizer::uniform:
      assigned = assign_uniform(neighbors, resolved);
      break;
    case Regularizer::kde:
      out.densities = compute_kde(neighbors, candidates, resolved.kde_neighbors,
                                  resolved.h, options.kde);
      assigned = assign_kde(neighbors, out.densities, resolved);
      break;
    case Regularizer::tv:
      assigned = assign_tv(neighbors, resolved);
      break;
  }
  out.plan = std::move(assigned.plan);
  out.diagnostics = std::move(assigned.diagnostics);
  out.assignment = aggregate(out.plan);

  if (out.diagnostics.truncated_at_l)
    log_at(LogLevel::warn,
           "optimum hit the prefetch horizon L=%zu; increase --prefetch",
           resolved.prefetch);
  if (out.diagnostics.assumption_violated.value_or(false))
    log_at(LogLevel::warn,
           "closed-form optimality assumption violated; plan may be suboptimal");
  return out;
}

namespace {

nlohmann::json header_json(const SelectionOutput& output) {
  const SelectionConfig& cfg = output.resolved;
  const AssignDiagnostics& diag = output.diagnostics;
  nlohmann::json j;
  j["M"] = output.query_count;
  j["N"] = output.candidate_count;
  j["regularizer"] = regularizer_name(cfg.regularizer);
  j["alpha"] = cfg.alpha;
  j["c"] = cfg.c;
  j["h"] = cfg.h;
  j["prefetch"] = cfg.prefetch;
  j["kde_neighbors"] = cfg.kde_neighbors;
  j["tv_threshold"] =
      cfg.tv_threshold == TvThresholdRule::theorem ? "theorem" : "algorithm";
  j["seed"] = cfg.seed;
  if (cfg.regularizer == Regularizer::uniform) j["K"] = diag.k;
  if (cfg.regularizer == Regularizer::kde) j["s_star"] = diag.s_star;
  j["truncated"] = diag.truncated_at_l;
  j["assumption_violated"] = diag.assumption_violated.has_value()
                                 ? nlohmann::json(*diag.assumption_violated)
                                 : nlohmann::json(nullptr);
  j["objective_value"] = diag.objective_value.has_value()
                             ? nlohmann::json(*diag.objective_value)
                             : nlohmann::json(nullptr);
  j["support"] = output.assignment.support_size();
  return j;
}

}  // namespace

void write_assignment_jsonl(const std::string& path,
                            const SelectionOutput& output,
                            const std::vector<std::uint64_t>& candidate_ids) {
  if (candidate_ids.size() != output.candidate_count)
    throw std::invalid_argument("write_assignment_jsonl: id count mismatch");

  struct Row {
    double p;
    std::uint64_t id;
    std::uint32_t pos;
  };
  std::vector<Row> rows;
  rows.reserve(output.assignment.entries.size());
  for (const auto& [pos, p] : output.assignment.entries)
    rows.push_back({p, candidate_ids[pos], pos});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(b.p, a.id, a.pos) < std::tie(a.p, b.id, b.pos);
  });

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << header_json(output).dump() << '\n';
  for (const Row& r : rows) {
    nlohmann::json j;
    j["id"] = r.id;
    j["p"] = r.p;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

AssignmentFile read_assignment_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open: " + path);
  AssignmentFile file;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": invalid JSON");
    if (line_no == 1) {
      file.header = std::move(j);
      continue;
    }
    if (!j.contains("id") || !j.contains("p"))
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": record needs id and p");
    const double p = j["p"].get<double>();
    if (!std::isfinite(p) || p < 0.0)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": p must be finite and non-negative");
    file.ids.push_back(j["id"].get<std::uint64_t>());
    file.p.push_back(p);
  }
  if (file.header.is_null())
    throw std::invalid_argument(path + ": missing header line");
  return file;
}

void write_densities_jsonl(const std::string& path, const DensityTable& table,
                           const std::vector<std::uint64_t>& candidate_ids) {
  struct Row {
    std::uint64_t id;
    std::uint32_t pos;
    double rho;
  };
  std::vector<Row> rows;
  rows.reserve(table.unique.size());
  for (const auto& [pos, rho] : table.unique) {
    if (pos >= candidate_ids.size())
      throw std::invalid_argument("write_densities_jsonl: position out of range");
    rows.push_back({candidate_ids[pos], pos, rho});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.id, a.pos) < std::tie(b.id, b.pos);
  });
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const Row& r : rows) {
    nlohmann::json j;
    j["id"] = r.id;
    j["rho"] = r.rho;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_samples_jsonl(const std::string& path,
                         const std::vector<std::vector<std::uint64_t>>& epochs,
                         const nlohmann::json& header, bool compact) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << header.dump() << '\n';
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    if (compact) {
      nlohmann::json j;
      j["epoch"] = e;
      j["ids"] = epochs[e];
      out << j.dump() << '\n';
      continue;
    }
    for (std::size_t d = 0; d < epochs[e].size(); ++d) {
      nlohmann::json j;
      j["epoch"] = e;
      j["ordinal"] = d;
      j["id"] = epochs[e][d];
      out << j.dump() << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace tsds
