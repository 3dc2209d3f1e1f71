#pragma once

#include <cstdint>
#include <vector>

#include "tsds/assign.hpp"

namespace tsds {

struct SamplePlan {
  std::size_t draws_per_epoch = 0;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  bool fixed = false;  // reuse epoch 0's seed stream for every epoch
};

// Seeded categorical sampling with replacement over a probability
// assignment, via a Walker alias table. Epoch e draws from an mt19937_64
// seeded with splitmix64(seed ^ e) (or epoch 0's seed when fixed), so runs
// are byte-reproducible and epochs are independent streams. The arithmetic
// path avoids libm transcendentals, keeping draws platform-stable.
// Returns epochs * draws ids; sampled ids always lie in the support.
std::vector<std::vector<std::uint64_t>> sample(
    const ProbabilityAssignment& assignment,
    const std::vector<std::uint64_t>& candidate_ids, const SamplePlan& plan);

// Same sampler over bare (id, weight) records, e.g. an assignment file read
// back from disk. Weights must be non-negative with a positive sum.
std::vector<std::vector<std::uint64_t>> sample_records(
    const std::vector<std::uint64_t>& ids, const std::vector<double>& weights,
    const SamplePlan& plan);

}  // namespace tsds
