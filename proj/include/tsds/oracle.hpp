#pragma once

#include <cstdint>
#include <vector>

#include "tsds/assign.hpp"

namespace tsds {

// Numerical cross-check for the closed-form assigners: a projected
// subgradient minimizer over the product of scaled simplices, plus
// Monte-Carlo dominance sampling. Desk scale only.
struct OracleConfig {
  std::size_t iterations = 50000;
  std::size_t restarts = 5;
  std::size_t mc_samples = 10000;
  double tolerance = 1e-6;
  double step_scale = 0.0;  // a in a/sqrt(t); 0 picks a Lipschitz-scaled value
  std::uint64_t seed = 0;
  std::size_t max_cells = 200;  // refuse instances with M*N beyond this
};

// One feasible plan drawn row-wise from the flat (symmetric Dirichlet)
// distribution on the simplex, scaled to row sum 1/M. Deterministic per seed.
std::vector<double> random_feasible(std::size_t m, std::size_t n,
                                    std::uint64_t seed);

// Euclidean projection of row onto {x >= 0, sum x = target}, in place.
// Sort-based exact algorithm.
void project_scaled_simplex(std::vector<double>& row, double target);

struct MinimizeResult {
  std::vector<double> plan;  // m*n row-major, best iterate seen
  double objective = 0.0;
};

// Diminishing-step projected subgradient descent with restarts; returns the
// best iterate across all restarts. Deterministic per config.
MinimizeResult minimize_rt(std::size_t m, std::size_t n,
                           const std::vector<double>& distances,
                           const std::vector<double>* densities,
                           const SelectionConfig& config,
                           const OracleConfig& oracle);

struct OracleReport {
  double closed_form_objective = 0.0;
  double oracle_objective = 0.0;
  double gap = 0.0;  // closed-form minus oracle; positive means oracle won
  std::size_t mc_violations = 0;  // sampled plans beating closed form by > tol
  bool pass = false;
};

// pass iff the closed-form objective is within tolerance of the oracle's
// best and no Monte-Carlo sample beats it by more than tolerance.
OracleReport verify_optimality(const TransportPlan& plan,
                               const std::vector<double>& distances,
                               const std::vector<double>* densities,
                               const SelectionConfig& config,
                               const OracleConfig& oracle);

// Random desk-scale instance from the distribution the optimality sweep
// runs on: distances U[0,1], densities U[1,4], alpha from {0.2, 0.5, 0.8},
// C from {1, 5}, L = N. Deterministic per seed.
struct SyntheticInstance {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<double> distances;  // m*n dense, by candidate position
  std::vector<double> densities;  // n
  NeighborTable neighbors;
  DensityTable density_table;
  SelectionConfig config;
};

SyntheticInstance make_instance(std::size_t m, std::size_t n, Regularizer r,
                                std::uint64_t seed);

}  // namespace tsds
