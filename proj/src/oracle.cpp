#include "tsds/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tsds/rng.hpp"

namespace tsds {

std::vector<double> random_feasible(std::size_t m, std::size_t n,
                                    std::uint64_t seed) {
  if (m == 0 || n == 0) throw std::invalid_argument("empty plan shape");
  std::mt19937_64 g(splitmix64(seed ^ 0xfea51b1eULL));
  std::vector<double> gamma(m * n);
  const double target = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    // Exponential gaps normalize to a flat draw on the simplex.
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double v = u01(g);
      if (v < 0x1.0p-53) v = 0x1.0p-53;
      gamma[i * n + j] = -std::log(v);
      sum += gamma[i * n + j];
    }
    const double scale = target / sum;
    for (std::size_t j = 0; j < n; ++j) gamma[i * n + j] *= scale;
  }
  return gamma;
}

void project_scaled_simplex(std::vector<double>& row, double target) {
  const std::size_t n = row.size();
  if (n == 0) throw std::invalid_argument("empty row");
  std::vector<double> u(row);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    css += u[k];
    const double t = (css - target) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  for (double& v : row) v = std::max(v - theta, 0.0);
}

namespace {

void project_rows(std::vector<double>& gamma, std::size_t m, std::size_t n,
                  double target, std::vector<double>& scratch) {
  for (std::size_t i = 0; i < m; ++i) {
    scratch.assign(gamma.begin() + i * n, gamma.begin() + (i + 1) * n);
    project_scaled_simplex(scratch, target);
    std::copy(scratch.begin(), scratch.end(), gamma.begin() + i * n);
  }
}

}  // namespace

MinimizeResult minimize_rt(std::size_t m, std::size_t n,
                           const std::vector<double>& distances,
                           const std::vector<double>* densities,
                           const SelectionConfig& config,
                           const OracleConfig& oracle) {
  if (m * n > oracle.max_cells)
    throw std::invalid_argument("minimize_rt: instance exceeds desk-scale cap");
  if (distances.size() != m * n)
    throw std::invalid_argument("minimize_rt: distance shape mismatch");
  const double target = 1.0 / static_cast<double>(m);

  double step = oracle.step_scale;
  if (step <= 0.0) {
    // Scale the step to the subgradient's infinity-norm bound so progress
    // per iteration is a stable fraction of the row radius.
    double dmax = 0.0;
    for (double d : distances) dmax = std::max(dmax, d);
    const double lip = (config.alpha / config.c) * std::max(dmax, 1e-9) +
                       (1.0 - config.alpha) * static_cast<double>(m) + 1e-9;
    step = target / lip;
  }

  MinimizeResult best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<double> scratch(n);
  for (std::size_t r = 0; r < oracle.restarts; ++r) {
    std::vector<double> gamma;
    if (r == 0) {
      gamma.assign(m * n, 1.0 / (static_cast<double>(m) * static_cast<double>(n)));
    } else {
      gamma = random_feasible(m, n, splitmix64(oracle.seed ^ (0xabcdULL + r)));
    }
    double obj = objective_dense(gamma, m, n, distances, densities, config);
    if (obj < best.objective) best = {gamma, obj};

    std::vector<double> grad(m * n);
    for (std::size_t t = 1; t <= oracle.iterations; ++t) {
      const double scale = config.alpha / config.c;
      for (std::size_t e = 0; e < grad.size(); ++e) grad[e] = scale * distances[e];
      add_regularizer_subgradient(gamma, m, n, densities, config, grad);
      const double eta = step / std::sqrt(static_cast<double>(t));
      for (std::size_t e = 0; e < gamma.size(); ++e) gamma[e] -= eta * grad[e];
      project_rows(gamma, m, n, target, scratch);
      obj = objective_dense(gamma, m, n, distances, densities, config);
      if (obj < best.objective) {
        best.plan = gamma;
        best.objective = obj;
      }
    }
  }
  return best;
}

OracleReport verify_optimality(const TransportPlan& plan,
                               const std::vector<double>& distances,
                               const std::vector<double>* densities,
                               const SelectionConfig& config,
                               const OracleConfig& oracle) {
  OracleReport report;
  report.closed_form_objective = objective(plan, distances, densities, config);
  const MinimizeResult found = minimize_rt(plan.query_count, plan.candidate_count,
                                           distances, densities, config, oracle);
  report.oracle_objective = found.objective;
  report.gap = report.closed_form_objective - report.oracle_objective;
  for (std::size_t s = 0; s < oracle.mc_samples; ++s) {
    const auto gamma =
        random_feasible(plan.query_count, plan.candidate_count,
                        splitmix64(oracle.seed ^ (0x5a5a5aULL + s)));
    const double obj = objective_dense(gamma, plan.query_count,
                                       plan.candidate_count, distances,
                                       densities, config);
    if (obj < report.closed_form_objective - oracle.tolerance)
      ++report.mc_violations;
  }
  report.pass = report.gap <= oracle.tolerance && report.mc_violations == 0;
  return report;
}

SyntheticInstance make_instance(std::size_t m, std::size_t n, Regularizer r,
                                std::uint64_t seed) {
  if (m == 0 || n == 0) throw std::invalid_argument("empty instance shape");
  SyntheticInstance inst;
  inst.m = m;
  inst.n = n;
  std::mt19937_64 g(splitmix64(seed ^ 0x1857a7eULL));
  inst.distances.resize(m * n);
  for (double& d : inst.distances) d = u01(g);
  inst.densities.resize(n);
  for (double& rho : inst.densities) rho = 1.0 + 3.0 * u01(g);
  const double alphas[] = {0.2, 0.5, 0.8};
  const double cs[] = {1.0, 5.0};
  inst.config.regularizer = r;
  inst.config.alpha = alphas[uniform_index(g, 3)];
  inst.config.c = cs[uniform_index(g, 2)];
  inst.config.h = 0.2;
  inst.config.prefetch = n;
  inst.config.kde_neighbors = n;
  inst.config.seed = seed;

  inst.neighbors.query_count = m;
  inst.neighbors.prefetch = n;
  inst.neighbors.candidate_count = n;
  inst.neighbors.indices.resize(m * n);
  inst.neighbors.distances.resize(m * n);
  std::vector<std::pair<double, std::uint32_t>> order(n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      order[j] = {inst.distances[i * n + j], static_cast<std::uint32_t>(j)};
    std::sort(order.begin(), order.end());
    for (std::size_t k = 0; k < n; ++k) {
      inst.neighbors.indices[i * n + k] = order[k].second;
      inst.neighbors.distances[i * n + k] = order[k].first;
    }
  }

  inst.density_table.query_count = m;
  inst.density_table.prefetch = n;
  inst.density_table.h = inst.config.h;
  inst.density_table.neighbors_used = n;
  inst.density_table.values.resize(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < n; ++k)
      inst.density_table.values[i * n + k] =
          inst.densities[inst.neighbors.indices[i * n + k]];
  inst.density_table.unique.reserve(n);
  for (std::size_t j = 0; j < n; ++j)
    inst.density_table.unique.emplace_back(static_cast<std::uint32_t>(j),
                                           inst.densities[j]);
  return inst;
}

}  // namespace tsds
