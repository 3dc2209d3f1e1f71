#include "tsds/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

namespace tsds {

namespace {

// Min-cost flow with nonnegative edge costs: successive shortest paths,
// Dijkstra over reduced costs. Flows stay integral, so the optimum is exact
// up to fp summation of the path costs.
class MinCostFlow {
 public:
  explicit MinCostFlow(std::size_t nodes) : graph_(nodes) {}

  void add_edge(int from, int to, long long cap, double cost) {
    graph_[from].push_back({to, cap, cost, static_cast<int>(graph_[to].size())});
    graph_[to].push_back({from, 0, -cost, static_cast<int>(graph_[from].size()) - 1});
  }

  // Pushes exactly `target` units from s to t, returns total cost.
  // Throws if the network cannot carry the flow.
  double run(int s, int t, long long target) {
    const std::size_t n = graph_.size();
    std::vector<double> potential(n, 0.0), dist(n);
    std::vector<int> prev_node(n), prev_edge(n);
    double total = 0.0;
    long long pushed = 0;
    while (pushed < target) {
      const double inf = std::numeric_limits<double>::infinity();
      dist.assign(n, inf);
      dist[s] = 0.0;
      using Item = std::pair<double, int>;
      std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
      heap.push({0.0, s});
      while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[u]) continue;
        for (std::size_t k = 0; k < graph_[u].size(); ++k) {
          const Edge& e = graph_[u][k];
          if (e.cap <= 0) continue;
          // fp noise can push a reduced cost epsilon-negative; clamp.
          const double rc =
              std::max(0.0, e.cost + potential[u] - potential[e.to]);
          if (dist[u] + rc < dist[e.to]) {
            dist[e.to] = dist[u] + rc;
            prev_node[e.to] = u;
            prev_edge[e.to] = static_cast<int>(k);
            heap.push({dist[e.to], e.to});
          }
        }
      }
      if (dist[t] == inf)
        throw std::runtime_error("transport network exhausted before target flow");
      for (std::size_t v = 0; v < n; ++v)
        if (dist[v] < inf) potential[v] += dist[v];
      long long bottleneck = target - pushed;
      for (int v = t; v != s; v = prev_node[v])
        bottleneck = std::min(bottleneck,
                              graph_[prev_node[v]][prev_edge[v]].cap);
      for (int v = t; v != s; v = prev_node[v]) {
        Edge& e = graph_[prev_node[v]][prev_edge[v]];
        e.cap -= bottleneck;
        graph_[e.to][e.rev].cap += bottleneck;
        total += static_cast<double>(bottleneck) * e.cost;
      }
      pushed += bottleneck;
    }
    return total;
  }

 private:
  struct Edge {
    int to;
    long long cap;
    double cost;
    int rev;
  };
  std::vector<std::vector<Edge>> graph_;
};

double point_distance(const double* a, const double* b, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = a[d] - b[d];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace

double emd(const double* a, std::size_t na, const double* b, std::size_t nb,
           std::size_t dim) {
  if (na == 0 || nb == 0) throw std::invalid_argument("emd: empty point set");
  // Scale both uniform weights to the smallest integral supplies.
  const long long g = std::gcd(static_cast<long long>(na),
                               static_cast<long long>(nb));
  const long long left_supply = static_cast<long long>(nb) / g;
  const long long right_demand = static_cast<long long>(na) / g;
  const long long target = static_cast<long long>(na) * left_supply;

  const int source = 0;
  const int sink = static_cast<int>(na + nb) + 1;
  MinCostFlow flow(na + nb + 2);
  for (std::size_t i = 0; i < na; ++i)
    flow.add_edge(source, static_cast<int>(1 + i), left_supply, 0.0);
  for (std::size_t j = 0; j < nb; ++j)
    flow.add_edge(static_cast<int>(1 + na + j), sink, right_demand, 0.0);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j)
      flow.add_edge(static_cast<int>(1 + i), static_cast<int>(1 + na + j),
                    target, point_distance(a + i * dim, b + j * dim, dim));

  const double cost = flow.run(source, sink, target);
  // One unit carries g/(na*nb) probability mass.
  return cost * static_cast<double>(g) /
         (static_cast<double>(na) * static_cast<double>(nb));
}

double alignment_metric(const EmbeddingSet& sample, const EmbeddingSet& queries,
                        std::size_t cap) {
  if (sample.count() == 0 || queries.count() == 0)
    throw std::invalid_argument("alignment_metric: empty input");
  if (sample.dim != queries.dim)
    throw std::invalid_argument("alignment_metric: dim mismatch");
  if (sample.count() > cap || queries.count() > cap)
    throw std::invalid_argument("alignment_metric: input exceeds exact-solve cap");

  const std::size_t dim = sample.dim;
  std::vector<double> a(sample.count() * dim), b(queries.count() * dim);
  for (std::size_t i = 0; i < sample.vectors.size(); ++i)
    a[i] = static_cast<double>(sample.vectors[i]);
  for (std::size_t i = 0; i < queries.vectors.size(); ++i)
    b[i] = static_cast<double>(queries.vectors[i]);
  return emd(a.data(), sample.count(), b.data(), queries.count(), dim);
}

double effective_support(const ProbabilityAssignment& assignment) {
  double entropy = 0.0;
  for (const auto& [pos, p] : assignment.entries) entropy -= p * std::log(p);
  return std::exp(entropy);
}

DupRobustnessReport dup_robustness(const EmbeddingSet& candidates,
                                   const EmbeddingSet& queries,
                                   const SelectionConfig& config,
                                   const DuplicationSpec& spec,
                                   const PipelineOptions& options) {
  const SelectionOutput baseline = run_selection(queries, candidates, config, options);
  auto [duplicated, record] = inject_duplicates(candidates, spec);
  const SelectionOutput treated = run_selection(queries, duplicated, config, options);

  std::vector<char> chosen(candidates.count(), 0);
  for (std::size_t row : record.original_rows) chosen[row] = 1;

  double baseline_mass = 0.0;
  for (const auto& [pos, p] : baseline.assignment.entries)
    if (chosen[pos]) baseline_mass += p;

  // Originals keep their positions; every appended row is a copy.
  double treated_mass = 0.0;
  for (const auto& [pos, p] : treated.assignment.entries)
    if (pos >= candidates.count() || chosen[pos]) treated_mass += p;

  DupRobustnessReport report;
  report.regularizer = config.regularizer;
  report.fraction = spec.fraction;
  report.factor = spec.factor;
  report.mass_on_duplicated_content = treated_mass;
  report.baseline_mass = baseline_mass;
  if (baseline_mass == 0.0 && treated_mass == 0.0)
    report.inflation_ratio = 1.0;
  else if (baseline_mass == 0.0)
    report.inflation_ratio = std::numeric_limits<double>::infinity();
  else
    report.inflation_ratio = treated_mass / baseline_mass;
  report.effective_support = effective_support(treated.assignment);
  report.baseline_effective_support = effective_support(baseline.assignment);
  return report;
}

nlohmann::json to_json(const DupRobustnessReport& report) {
  nlohmann::json j;
  j["regularizer"] = regularizer_name(report.regularizer);
  j["fraction"] = report.fraction;
  j["factor"] = report.factor;
  j["mass_on_duplicated_content"] = report.mass_on_duplicated_content;
  j["baseline_mass"] = report.baseline_mass;
  // json has no inf; an unbounded ratio (mass appeared from nothing) is null.
  j["inflation_ratio"] = std::isfinite(report.inflation_ratio)
                             ? nlohmann::json(report.inflation_ratio)
                             : nlohmann::json(nullptr);
  j["effective_support"] = report.effective_support;
  j["baseline_effective_support"] = report.baseline_effective_support;
  return j;
}

std::string csv_header() {
  return "regularizer,fraction,factor,mass_on_duplicated_content,"
         "baseline_mass,inflation_ratio,effective_support,"
         "baseline_effective_support";
}

std::string to_csv_row(const DupRobustnessReport& report) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%s,%.17g,%u,%.17g,%.17g,%.17g,%.17g,%.17g",
                regularizer_name(report.regularizer).c_str(), report.fraction,
                report.factor, report.mass_on_duplicated_content,
                report.baseline_mass, report.inflation_ratio,
                report.effective_support, report.baseline_effective_support);
  return buf;
}

}  // namespace tsds
