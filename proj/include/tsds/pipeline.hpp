#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsds/assign.hpp"
#include "tsds/density.hpp"
#include "tsds/embedding_set.hpp"
#include "tsds/knn.hpp"

namespace tsds {

struct PipelineOptions {
  IndexParams index;
  KdeOptions kde;
};

struct SelectionOutput {
  ProbabilityAssignment assignment;
  AssignDiagnostics diagnostics;
  TransportPlan plan;
  DensityTable densities;  // kde runs only; empty otherwise
  SelectionConfig resolved;  // config after prefetch clamping
  std::size_t query_count = 0;
  std::size_t candidate_count = 0;
};

// Full selection pass: retrieval, optional density estimation, closed-form
// assignment, aggregation. Prefetch larger than the candidate count is
// clamped with a log line. When `prebuilt` is given it is used as-is and
// PipelineOptions.index is ignored.
SelectionOutput run_selection(const EmbeddingSet& queries,
                              const EmbeddingSet& candidates,
                              const SelectionConfig& config,
                              const PipelineOptions& options = {},
                              const Index* prebuilt = nullptr);

// Assignment file: one header object holding the resolved configuration and
// diagnostics ("M", "N", "regularizer", "alpha", "c", "h", "K" or "s_star",
// "truncated", "assumption_violated", ...), then one {"id", "p"} object per
// supported candidate, sorted by descending p (ties: id, then position).
// Bytes are deterministic for a fixed input.
void write_assignment_jsonl(const std::string& path,
                            const SelectionOutput& output,
                            const std::vector<std::uint64_t>& candidate_ids);

struct AssignmentFile {
  nlohmann::json header;
  std::vector<std::uint64_t> ids;
  std::vector<double> p;
};

AssignmentFile read_assignment_jsonl(const std::string& path);

// Density sidecar for debugging: {"id", "rho"} per unique prefetched
// candidate, ascending id order.
void write_densities_jsonl(const std::string& path, const DensityTable& table,
                           const std::vector<std::uint64_t>& candidate_ids);

// Sample file: a header with the resolved plan, then either one record per
// draw {"epoch", "ordinal", "id"} or, in compact form, one per-epoch record
// {"epoch", "ids": [...]}.
void write_samples_jsonl(const std::string& path,
                         const std::vector<std::vector<std::uint64_t>>& epochs,
                         const nlohmann::json& header, bool compact);

std::string regularizer_name(Regularizer r);
Regularizer parse_regularizer(const std::string& name);

}  // namespace tsds
