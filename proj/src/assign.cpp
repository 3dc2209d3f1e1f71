#include "tsds/assign.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace tsds {

void validate(const SelectionConfig& config) {
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0))
    throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(config.c > 0.0)) throw std::invalid_argument("c must be positive");
  if (config.regularizer == Regularizer::kde) {
    if (!(config.h > 0.0)) throw std::invalid_argument("h must be positive");
    if (config.kde_neighbors == 0)
      throw std::invalid_argument("kde_neighbors must be positive");
    if (config.prefetch < 2)
      throw std::invalid_argument("prefetch must exceed 1 for kde");
  }
  if (config.prefetch == 0)
    throw std::invalid_argument("prefetch must be positive");
}

namespace {

void check_table(const NeighborTable& t) {
  if (t.query_count == 0 || t.prefetch == 0)
    throw std::invalid_argument("empty neighbor table");
  if (t.indices.size() != t.query_count * t.prefetch ||
      t.distances.size() != t.query_count * t.prefetch)
    throw std::invalid_argument("neighbor table shape mismatch");
  if (t.prefetch > t.candidate_count)
    throw std::invalid_argument("prefetch exceeds candidate count");
}

}  // namespace

AssignResult assign_uniform(const NeighborTable& neighbors,
                            const SelectionConfig& config) {
  check_table(neighbors);
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0))
    throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(config.c > 0.0)) throw std::invalid_argument("c must be positive");

  const std::size_t m = neighbors.query_count;
  const std::size_t l = neighbors.prefetch;
  const std::size_t n = neighbors.candidate_count;
  const double m_d = static_cast<double>(m);
  const double bound = (1.0 - config.alpha) * m_d;
  const double lhs_scale = config.alpha / config.c;

  // K grows while widening to K+1 keeps the accumulated transport penalty
  // sum_i sum_{k<=K} (d_{i,K+1} - d_{i,k}) strictly under the bound.
  // Prefix sums make each step O(M).
  std::vector<double> prefix(m);
  for (std::size_t i = 0; i < m; ++i) prefix[i] = neighbors.row_distances(i)[0];
  std::size_t k = 1;
  while (k < l) {
    const double k_d = static_cast<double>(k);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      total += neighbors.row_distances(i)[k] * k_d - prefix[i];
    if (!(lhs_scale * total < bound)) break;
    for (std::size_t i = 0; i < m; ++i) prefix[i] += neighbors.row_distances(i)[k];
    ++k;
  }

  AssignResult result;
  result.diagnostics.k = k;
  result.diagnostics.truncated_at_l = (k == l && l < n);
  result.diagnostics.assumption_violated = (2 * k > n);

  const double mass = 1.0 / (m_d * static_cast<double>(k));
  result.plan.query_count = m;
  result.plan.candidate_count = n;
  result.plan.rows.resize(m);
  double cost_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    auto& row = result.plan.rows[i];
    row.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
      row.emplace_back(neighbors.row_indices(i)[j], mass);
      cost_sum += mass * neighbors.row_distances(i)[j];
    }
  }

  const double u = 1.0 / (m_d * static_cast<double>(n));
  double dev = std::abs(mass - u);
  if (k < n) dev = std::max(dev, u);
  result.diagnostics.objective_value =
      lhs_scale * cost_sum + (1.0 - config.alpha) * m_d * dev;
  return result;
}

AssignResult assign_kde(const NeighborTable& neighbors,
                        const DensityTable& densities,
                        const SelectionConfig& config) {
  check_table(neighbors);
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0))
    throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(config.c > 0.0)) throw std::invalid_argument("c must be positive");
  const std::size_t m = neighbors.query_count;
  const std::size_t l = neighbors.prefetch;
  const std::size_t n = neighbors.candidate_count;
  if (l < 2) throw std::invalid_argument("kde assignment needs L > 1");
  if (densities.query_count != m || densities.prefetch != l)
    throw std::invalid_argument("density table shape mismatch");
  for (double r : densities.values)
    if (!(r > 0.0)) throw std::invalid_argument("densities must be positive");

  const double m_d = static_cast<double>(m);
  const double bound = (1.0 - config.alpha) * m_d;
  const double lhs_scale = config.alpha / config.c;

  // Inverse-density prefix sums: s_prefix[i][k] = sum_{j<=k} 1/rho_{i,j}.
  // These exact values feed both the heap and the final K_i derivation.
  std::vector<double> s_prefix(m * l);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      acc += 1.0 / densities.at(i, j);
      s_prefix[i * l + j] = acc;
    }
  }

  // Min-heap of (threshold, query); ties pop the lower query index.
  using Entry = std::pair<double, std::uint32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
  for (std::size_t i = 0; i < m; ++i)
    heap.emplace(s_prefix[i * l], static_cast<std::uint32_t>(i));

  std::vector<std::size_t> popped(m, 0);   // neighbors absorbed per query
  std::vector<double> c_i(m, 0.0);         // current per-query penalty
  std::vector<double> w_i(m, 0.0);         // sum_{k<=K_i} d_{i,k}/rho_{i,k}
  double total_c = 0.0;
  double s_star = 0.0;
  bool triggered = false;

  while (!heap.empty()) {
    const auto [s, qi] = heap.top();
    heap.pop();
    const std::size_t i = qi;
    const std::size_t k = ++popped[i];  // this pop absorbs the k-th neighbor
    w_i[i] += neighbors.row_distances(i)[k - 1] / densities.at(i, k - 1);
    // c_i = sum_{j<=k} (d_{i,k+1} - d_{i,j})/rho_{i,j}, via the prefix sums.
    const double c_new =
        neighbors.row_distances(i)[k] * s_prefix[i * l + (k - 1)] - w_i[i];
    total_c += c_new - c_i[i];
    c_i[i] = c_new;
    s_star = s;
    if (!(lhs_scale * total_c < bound)) {
      triggered = true;
      break;
    }
    if (k + 1 < l) heap.emplace(s_prefix[i * l + k], qi);
  }

  AssignResult result;
  auto& diag = result.diagnostics;
  diag.s_star = s_star;
  diag.truncated_at_l = !triggered;  // prefetched thresholds ran out

  result.plan.query_count = m;
  result.plan.candidate_count = n;
  result.plan.rows.resize(m);
  diag.per_query.resize(m);
  const double ms = m_d * s_star;
  const double row_target = 1.0 / m_d;
  const double drop_eps = 1e-12 / m_d;
  for (std::size_t i = 0; i < m; ++i) {
    // Closed-form neighborhood size: largest k with s_k <= s*, capped so the
    // residual position k+1 stays inside the prefetched row.
    const double* sp = s_prefix.data() + i * l;
    std::size_t k = static_cast<std::size_t>(
        std::upper_bound(sp, sp + l, s_star) - sp);
    if (k > l - 1) {
      k = l - 1;
      diag.truncated_at_l = true;
    }
    diag.per_query[i] = k;
    auto& row = result.plan.rows[i];
    row.reserve(k + 1);
    double row_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double mass = 1.0 / (ms * densities.at(i, j));
      row.emplace_back(neighbors.row_indices(i)[j], mass);
      row_sum += mass;
    }
    const double residual = row_target - row_sum;
    if (residual > drop_eps) {
      row.emplace_back(neighbors.row_indices(i)[k], residual);
    } else if (residual < -drop_eps) {
      throw std::runtime_error("kde assignment produced a negative residual");
    }
    // Residuals within drop_eps of zero are clamped away; the row sum stays
    // well inside the 1e-9 invariant and the support stays minimal.
  }

  // Assumption and exact objective need the inverse-density total over all
  // N candidates; available only when the table covers every candidate.
  if (densities.unique.size() == n) {
    double inv_total = 0.0;
    for (const auto& [pos, rho] : densities.unique) inv_total += 1.0 / rho;
    diag.assumption_violated = (s_star > 0.5 * inv_total);

    double cost_sum = 0.0;
    std::size_t support = 0;
    double max_dev = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& row = result.plan.rows[i];
      support += row.size();
      for (std::size_t j = 0; j < row.size(); ++j) {
        cost_sum += row[j].second * neighbors.row_distances(i)[j];
        const double rho = densities.at(i, j);
        const double ref = (1.0 / rho) / (m_d * inv_total);
        max_dev = std::max(max_dev, rho * std::abs(row[j].second - ref));
      }
    }
    if (support < m * n) max_dev = std::max(max_dev, 1.0 / (m_d * inv_total));
    diag.objective_value =
        lhs_scale * cost_sum + (1.0 - config.alpha) * m_d * max_dev;
  }
  return result;
}

AssignResult assign_tv(const NeighborTable& neighbors,
                       const SelectionConfig& config) {
  check_table(neighbors);
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0))
    throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(config.c > 0.0)) throw std::invalid_argument("c must be positive");
  const std::size_t m = neighbors.query_count;
  const std::size_t l = neighbors.prefetch;
  const std::size_t n = neighbors.candidate_count;
  if (n < 2) throw std::invalid_argument("tv assignment needs N > 1");

  double threshold;
  if (config.alpha == 0.0) {
    threshold = std::numeric_limits<double>::infinity();
  } else if (config.tv_threshold == TvThresholdRule::theorem) {
    threshold = (1.0 - config.alpha) * config.c / config.alpha;
  } else {
    threshold = (1.0 - config.alpha) * config.c / (2.0 * config.alpha);
  }

  const double m_d = static_cast<double>(m);
  const double u = 1.0 / (m_d * static_cast<double>(n));

  AssignResult result;
  result.plan.query_count = m;
  result.plan.candidate_count = n;
  result.plan.rows.resize(m);
  result.diagnostics.per_query.resize(m);
  result.diagnostics.assumption_violated = false;  // closed form is unconditional

  double cost_sum = 0.0;
  double dev_sum = 0.0;  // sum |gamma - u| over support entries
  std::size_t support = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* d = neighbors.row_distances(i);
    // Distances are sorted, so qualifiers form a prefix of ranks 2..L.
    std::size_t q = 0;
    while (1 + q < l && d[1 + q] - d[0] < threshold) ++q;
    // All prefetched ranks qualified and unseen candidates remain; with a
    // zero threshold nothing past the 1-NN can ever qualify.
    if (1 + q == l && l < n && threshold > 0.0)
      result.diagnostics.truncated_at_l = true;
    result.diagnostics.per_query[i] = q;

    const double head = 1.0 / m_d - static_cast<double>(q) * u;
    if (!(head >= 0.0))
      throw std::runtime_error("tv assignment produced a negative 1-NN mass");
    auto& row = result.plan.rows[i];
    row.reserve(q + 1);
    row.emplace_back(neighbors.row_indices(i)[0], head);
    cost_sum += head * d[0];
    dev_sum += std::abs(head - u);
    for (std::size_t j = 1; j <= q; ++j) {
      row.emplace_back(neighbors.row_indices(i)[j], u);
      cost_sum += u * d[j];
    }
    support += 1 + q;
  }

  const double g_tv =
      0.5 * (dev_sum + static_cast<double>(m * n - support) * u);
  result.diagnostics.objective_value =
      (config.alpha / config.c) * cost_sum + (1.0 - config.alpha) * g_tv;
  return result;
}

AssignResult assign_closed_form(const NeighborTable& neighbors,
                                const DensityTable* densities,
                                const SelectionConfig& config) {
  switch (config.regularizer) {
    case Regularizer::uniform:
      return assign_uniform(neighbors, config);
    case Regularizer::kde:
      if (densities == nullptr)
        throw std::invalid_argument("kde assignment needs a density table");
      return assign_kde(neighbors, *densities, config);
    case Regularizer::tv:
      return assign_tv(neighbors, config);
  }
  throw std::logic_error("unreachable regularizer");
}

ProbabilityAssignment aggregate(const TransportPlan& plan) {
  ProbabilityAssignment out;
  out.candidate_count = plan.candidate_count;
  std::vector<std::pair<std::uint32_t, double>> all;
  std::size_t total = 0;
  for (const auto& row : plan.rows) total += row.size();
  all.reserve(total);
  for (const auto& row : plan.rows)
    all.insert(all.end(), row.begin(), row.end());
  std::stable_sort(all.begin(), all.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  double sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    double p = 0.0;
    while (j < all.size() && all[j].first == all[i].first) p += all[j++].second;
    if (p > 0.0) out.entries.emplace_back(all[i].first, p);
    sum += p;
    i = j;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::runtime_error("aggregated masses do not sum to 1");
  return out;
}

double objective_dense(const std::vector<double>& gamma, std::size_t m,
                       std::size_t n, const std::vector<double>& distances,
                       const std::vector<double>* densities,
                       const SelectionConfig& config) {
  if (gamma.size() != m * n || distances.size() != m * n)
    throw std::invalid_argument("objective: shape mismatch");
  double cost = 0.0;
  for (std::size_t e = 0; e < gamma.size(); ++e) cost += gamma[e] * distances[e];
  const double m_d = static_cast<double>(m);
  double g = 0.0;
  switch (config.regularizer) {
    case Regularizer::uniform: {
      const double u = 1.0 / (m_d * static_cast<double>(n));
      double dev = 0.0;
      for (double v : gamma) dev = std::max(dev, std::abs(v - u));
      g = m_d * dev;
      break;
    }
    case Regularizer::tv: {
      const double u = 1.0 / (m_d * static_cast<double>(n));
      double dev = 0.0;
      for (double v : gamma) dev += std::abs(v - u);
      g = 0.5 * dev;
      break;
    }
    case Regularizer::kde: {
      if (densities == nullptr || densities->size() != n)
        throw std::invalid_argument("kde objective needs one density per candidate");
      double inv_total = 0.0;
      for (double rho : *densities) {
        if (!(rho > 0.0))
          throw std::invalid_argument("densities must be positive");
        inv_total += 1.0 / rho;
      }
      double dev = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double rho = (*densities)[j];
          const double ref = (1.0 / rho) / (m_d * inv_total);
          dev = std::max(dev, rho * std::abs(gamma[i * n + j] - ref));
        }
      g = m_d * dev;
      break;
    }
  }
  return (config.alpha / config.c) * cost + (1.0 - config.alpha) * g;
}

double objective(const TransportPlan& plan, const std::vector<double>& distances,
                 const std::vector<double>* densities,
                 const SelectionConfig& config) {
  const std::size_t m = plan.query_count;
  const std::size_t n = plan.candidate_count;
  std::vector<double> gamma(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (const auto& [pos, mass] : plan.rows[i]) {
      if (pos >= n) throw std::invalid_argument("plan position out of range");
      gamma[i * n + pos] += mass;
    }
  return objective_dense(gamma, m, n, distances, densities, config);
}

void add_regularizer_subgradient(const std::vector<double>& gamma,
                                 std::size_t m, std::size_t n,
                                 const std::vector<double>* densities,
                                 const SelectionConfig& config,
                                 std::vector<double>& grad) {
  const double m_d = static_cast<double>(m);
  const double scale = 1.0 - config.alpha;
  const double u = 1.0 / (m_d * static_cast<double>(n));
  auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
  switch (config.regularizer) {
    case Regularizer::uniform: {
      // Subgradient concentrated on the first maximal deviation.
      std::size_t best = 0;
      double best_dev = -1.0;
      for (std::size_t e = 0; e < gamma.size(); ++e) {
        const double dev = std::abs(gamma[e] - u);
        if (dev > best_dev) {
          best_dev = dev;
          best = e;
        }
      }
      grad[best] += scale * m_d * sign(gamma[best] - u);
      break;
    }
    case Regularizer::tv: {
      for (std::size_t e = 0; e < gamma.size(); ++e)
        grad[e] += scale * 0.5 * sign(gamma[e] - u);
      break;
    }
    case Regularizer::kde: {
      double inv_total = 0.0;
      for (double rho : *densities) inv_total += 1.0 / rho;
      std::size_t best = 0;
      double best_dev = -1.0;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double rho = (*densities)[j];
          const double ref = (1.0 / rho) / (m_d * inv_total);
          const double dev = rho * std::abs(gamma[i * n + j] - ref);
          if (dev > best_dev) {
            best_dev = dev;
            best = i * n + j;
          }
        }
      const double rho = (*densities)[best % n];
      const double ref = (1.0 / rho) / (m_d * inv_total);
      grad[best] += scale * m_d * rho * sign(gamma[best] - ref);
      break;
    }
  }
}

}  // namespace tsds
