#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "tsds/density.hpp"
#include "tsds/knn.hpp"

namespace tsds {

enum class Regularizer { uniform, kde, tv };

// The source algorithm and its closed form disagree by a factor of two on
// the tv qualifying threshold; both are selectable, closed form is default.
enum class TvThresholdRule { theorem, algorithm };

struct SelectionConfig {
  Regularizer regularizer = Regularizer::kde;
  double alpha = 0.6;  // transport-vs-regularizer tradeoff, in [0, 1]
  double c = 5.0;      // diameter constant scaling the cost term
  double h = 0.2;      // kernel size (kde only)
  std::size_t prefetch = 1000;       // L
  std::size_t kde_neighbors = 1000;  // I
  TvThresholdRule tv_threshold = TvThresholdRule::theorem;
  std::uint64_t seed = 0;
};

void validate(const SelectionConfig& config);

// Sparse transport plan. Row i lists (candidate position, mass) in
// nearest-first order; masses are non-negative and each row sums to 1/M
// within 1e-9. Zero-mass entries are never emitted.
struct TransportPlan {
  std::size_t query_count = 0;
  std::size_t candidate_count = 0;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;
};

struct AssignDiagnostics {
  std::size_t k = 0;                   // uniform: shared neighborhood size K
  double s_star = 0.0;                 // kde: stopping threshold
  std::vector<std::size_t> per_query;  // kde: K_i; tv: qualifying counts
  bool truncated_at_l = false;
  // uniform: K > N/2; kde: s* > half the total inverse density, set only
  // when densities cover every candidate; tv has no assumption.
  std::optional<bool> assumption_violated;
  // Exact objective of the emitted plan. Set whenever computable from the
  // data in hand (always for uniform/tv; kde needs all-N densities).
  std::optional<double> objective_value;
};

struct AssignResult {
  TransportPlan plan;
  AssignDiagnostics diagnostics;
};

// Closed-form minimizers of the regularized transport problem, restricted
// to the L prefetched neighbors per query. Each validates the neighbor
// table, never iterates more than O(ML log M), and reports truncation when
// the optimum may extend past the prefetch horizon.
AssignResult assign_uniform(const NeighborTable& neighbors,
                            const SelectionConfig& config);
AssignResult assign_kde(const NeighborTable& neighbors,
                        const DensityTable& densities,
                        const SelectionConfig& config);
AssignResult assign_tv(const NeighborTable& neighbors,
                       const SelectionConfig& config);

// Dispatch on config.regularizer; densities may be null except for kde.
AssignResult assign_closed_form(const NeighborTable& neighbors,
                                const DensityTable* densities,
                                const SelectionConfig& config);

// Column sums of the plan: the selection distribution p over candidates.
struct ProbabilityAssignment {
  std::size_t candidate_count = 0;
  // (candidate position, p), sorted by position, p > 0 only.
  std::vector<std::pair<std::uint32_t, double>> entries;
  std::size_t support_size() const { return entries.size(); }
};

ProbabilityAssignment aggregate(const TransportPlan& plan);

// Exact objective against dense per-pair distances (desk scale):
// (alpha/C) * sum gamma_ij d_ij + (1-alpha) * G(gamma).
// `densities` is required for the kde regularizer (one rho per candidate).
double objective(const TransportPlan& plan, const std::vector<double>& distances,
                 const std::vector<double>* densities,
                 const SelectionConfig& config);

// Same objective on a dense row-major gamma matrix; shared with the
// numerical oracle, which iterates over dense plans.
double objective_dense(const std::vector<double>& gamma, std::size_t m,
                       std::size_t n, const std::vector<double>& distances,
                       const std::vector<double>* densities,
                       const SelectionConfig& config);

// Subgradient of (1-alpha)*G at a dense plan, written into grad (adding to
// the cost-term gradient already there). Exposed for finite-difference tests.
void add_regularizer_subgradient(const std::vector<double>& gamma,
                                 std::size_t m, std::size_t n,
                                 const std::vector<double>* densities,
                                 const SelectionConfig& config,
                                 std::vector<double>& grad);

}  // namespace tsds
