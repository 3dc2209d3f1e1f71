#pragma once

#include <cstdint>
#include <vector>

#include "tsds/assign.hpp"
#include "tsds/embedding_set.hpp"
#include "tsds/pipeline.hpp"

namespace tsds {

// Exact 1-Wasserstein distance between two uniform empirical distributions
// under the Euclidean ground metric, by min-cost flow with integral
// supplies. Exact but cubic-ish, hence the size cap.
double emd(const double* a, std::size_t na, const double* b, std::size_t nb,
           std::size_t dim);

// emd over two embedding sets. Throws on dim mismatch, empty input, or
// either side exceeding `cap` points.
double alignment_metric(const EmbeddingSet& sample, const EmbeddingSet& queries,
                        std::size_t cap = 500);

// exp of the Shannon entropy of p: the number of candidates an equally
// spread distribution of the same entropy would cover.
double effective_support(const ProbabilityAssignment& assignment);

struct DupRobustnessReport {
  Regularizer regularizer = Regularizer::uniform;
  double fraction = 0.0;
  std::uint32_t factor = 0;
  // Mass landing on duplicated content: the chosen originals plus all their
  // copies after injection, or the same originals in the clean baseline.
  double mass_on_duplicated_content = 0.0;
  double baseline_mass = 0.0;
  double inflation_ratio = 1.0;  // 1.0 when both masses are zero
  double effective_support = 0.0;
  double baseline_effective_support = 0.0;
};

// Runs the selection pipeline twice, on the clean corpus and on the corpus
// with injected duplicates, and measures how much probability mass the
// duplicated content gains. Same config both runs; prefetch clamping applies
// per corpus.
DupRobustnessReport dup_robustness(const EmbeddingSet& candidates,
                                   const EmbeddingSet& queries,
                                   const SelectionConfig& config,
                                   const DuplicationSpec& spec,
                                   const PipelineOptions& options = {});

nlohmann::json to_json(const DupRobustnessReport& report);
std::string to_csv_row(const DupRobustnessReport& report);
std::string csv_header();

}  // namespace tsds
