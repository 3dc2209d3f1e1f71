#include "tsds/sampler.hpp"

#include <stdexcept>

#include "tsds/rng.hpp"

namespace tsds {

namespace {

// Walker alias table; construction is deterministic (index-ordered queues).
struct AliasTable {
  std::vector<double> prob;
  std::vector<std::uint32_t> alias;

  explicit AliasTable(const std::vector<double>& weights) {
    const std::size_t n = weights.size();
    prob.resize(n);
    alias.resize(n);
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("negative sample weight");
      total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("zero total sample weight");
    std::vector<double> scaled(n);
    for (std::size_t i = 0; i < n; ++i)
      scaled[i] = weights[i] * static_cast<double>(n) / total;
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i)
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    while (!small.empty() && !large.empty()) {
      const std::uint32_t s = small.back();
      small.pop_back();
      const std::uint32_t g = large.back();
      large.pop_back();
      prob[s] = scaled[s];
      alias[s] = g;
      scaled[g] = (scaled[g] + scaled[s]) - 1.0;
      (scaled[g] < 1.0 ? small : large).push_back(g);
    }
    for (std::uint32_t i : large) {
      prob[i] = 1.0;
      alias[i] = i;
    }
    for (std::uint32_t i : small) {  // rounding leftovers
      prob[i] = 1.0;
      alias[i] = i;
    }
  }

  std::size_t draw(std::mt19937_64& g) const {
    const std::size_t slot = uniform_index(g, prob.size());
    return u01(g) < prob[slot] ? slot : alias[slot];
  }
};

}  // namespace

std::vector<std::vector<std::uint64_t>> sample_records(
    const std::vector<std::uint64_t>& ids, const std::vector<double>& weights,
    const SamplePlan& plan) {
  if (ids.size() != weights.size())
    throw std::invalid_argument("sample: id/weight length mismatch");
  if (ids.empty()) throw std::invalid_argument("sample: empty support");
  if (plan.draws_per_epoch == 0)
    throw std::invalid_argument("sample: draws_per_epoch must be positive");
  if (plan.epochs == 0)
    throw std::invalid_argument("sample: epochs must be positive");

  const AliasTable table(weights);
  std::vector<std::vector<std::uint64_t>> out(plan.epochs);
  for (std::size_t e = 0; e < plan.epochs; ++e) {
    const std::uint64_t epoch_key = plan.fixed ? 0 : static_cast<std::uint64_t>(e);
    std::mt19937_64 g(splitmix64(plan.seed ^ epoch_key));
    auto& epoch = out[e];
    epoch.reserve(plan.draws_per_epoch);
    for (std::size_t d = 0; d < plan.draws_per_epoch; ++d)
      epoch.push_back(ids[table.draw(g)]);
  }
  return out;
}

std::vector<std::vector<std::uint64_t>> sample(
    const ProbabilityAssignment& assignment,
    const std::vector<std::uint64_t>& candidate_ids, const SamplePlan& plan) {
  std::vector<std::uint64_t> ids;
  std::vector<double> weights;
  ids.reserve(assignment.entries.size());
  weights.reserve(assignment.entries.size());
  for (const auto& [pos, p] : assignment.entries) {
    if (pos >= candidate_ids.size())
      throw std::invalid_argument("sample: assignment position out of range");
    ids.push_back(candidate_ids[pos]);
    weights.push_back(p);
  }
  return sample_records(ids, weights, plan);
}

}  // namespace tsds
