#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsds/assign.hpp"
#include "tsds/bench.hpp"
#include "tsds/density.hpp"
#include "tsds/embedding_set.hpp"
#include "tsds/knn.hpp"
#include "tsds/pipeline.hpp"
#include "tsds/sampler.hpp"

namespace py = pybind11;

namespace {

// rows: (n, dim) float array; ids become 0..n-1 unless given.
tsds::EmbeddingSet to_set(const py::array& rows,
                          const std::optional<py::array>& ids) {
  auto arr = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(rows);
  if (!arr || arr.ndim() != 2)
    throw std::invalid_argument("embeddings must be a 2-d array");
  tsds::EmbeddingSet set;
  const auto n = static_cast<std::size_t>(arr.shape(0));
  set.dim = static_cast<std::uint32_t>(arr.shape(1));
  if (n == 0 || set.dim == 0)
    throw std::invalid_argument("embeddings must be non-empty");
  set.vectors.assign(arr.data(), arr.data() + n * set.dim);
  if (ids.has_value()) {
    auto id_arr =
        py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>::ensure(*ids);
    if (!id_arr || id_arr.ndim() != 1 ||
        static_cast<std::size_t>(id_arr.shape(0)) != n)
      throw std::invalid_argument("ids must be a 1-d array matching row count");
    set.ids.assign(id_arr.data(), id_arr.data() + n);
  } else {
    set.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) set.ids[i] = i;
  }
  return set;
}

tsds::SelectionConfig make_config(const std::string& regularizer, double alpha,
                                  double c, double h, std::size_t prefetch,
                                  std::size_t kde_neighbors,
                                  const std::string& tv_threshold,
                                  std::uint64_t seed) {
  tsds::SelectionConfig config;
  config.regularizer = tsds::parse_regularizer(regularizer);
  config.alpha = alpha;
  config.c = c;
  config.h = h;
  config.prefetch = prefetch;
  config.kde_neighbors = kde_neighbors;
  if (tv_threshold == "theorem")
    config.tv_threshold = tsds::TvThresholdRule::theorem;
  else if (tv_threshold == "algorithm")
    config.tv_threshold = tsds::TvThresholdRule::algorithm;
  else
    throw std::invalid_argument("tv_threshold must be theorem or algorithm");
  config.seed = seed;
  return config;
}

tsds::PipelineOptions make_options(const std::string& mode,
                                   std::uint32_t partitions,
                                   std::uint32_t coarse_fetch,
                                   std::uint64_t seed, unsigned threads) {
  tsds::PipelineOptions options;
  if (mode == "exact")
    options.index.mode = tsds::IndexMode::exact;
  else if (mode == "two_stage")
    options.index.mode = tsds::IndexMode::two_stage;
  else
    throw std::invalid_argument("mode must be exact or two_stage");
  options.index.partition_count = partitions;
  options.index.coarse_fetch = coarse_fetch;
  options.index.seed = seed;
  options.index.threads = threads;
  options.kde.threads = threads;
  return options;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "task-specific data selection: transport-based candidate weighting";

  m.def(
      "select",
      [](const py::array& queries, const py::array& candidates,
         const std::string& regularizer, double alpha, double c, double h,
         std::size_t prefetch, std::size_t kde_neighbors,
         const std::string& tv_threshold, std::uint64_t seed,
         const std::string& mode, std::uint32_t partitions,
         std::uint32_t coarse_fetch, unsigned threads) {
        const tsds::EmbeddingSet q = to_set(queries, std::nullopt);
        const tsds::EmbeddingSet d = to_set(candidates, std::nullopt);
        const auto config = make_config(regularizer, alpha, c, h, prefetch,
                                        kde_neighbors, tv_threshold, seed);
        tsds::SelectionOutput output;
        {
          py::gil_scoped_release release;
          output = tsds::run_selection(
              q, d, config, make_options(mode, partitions, coarse_fetch, seed, threads));
        }
        const std::size_t support = output.assignment.entries.size();
        py::array_t<std::uint32_t> positions(support);
        py::array_t<double> p(support);
        auto* pos_ptr = positions.mutable_data();
        auto* p_ptr = p.mutable_data();
        for (std::size_t i = 0; i < support; ++i) {
          pos_ptr[i] = output.assignment.entries[i].first;
          p_ptr[i] = output.assignment.entries[i].second;
        }
        py::dict result;
        result["positions"] = positions;
        result["p"] = p;
        result["truncated"] = output.diagnostics.truncated_at_l;
        result["assumption_violated"] =
            output.diagnostics.assumption_violated.has_value()
                ? py::cast(*output.diagnostics.assumption_violated)
                : py::none();
        result["objective_value"] =
            output.diagnostics.objective_value.has_value()
                ? py::cast(*output.diagnostics.objective_value)
                : py::none();
        if (config.regularizer == tsds::Regularizer::uniform)
          result["K"] = output.diagnostics.k;
        if (config.regularizer == tsds::Regularizer::kde)
          result["s_star"] = output.diagnostics.s_star;
        return result;
      },
      py::arg("queries"), py::arg("candidates"), py::arg("regularizer") = "kde",
      py::arg("alpha") = 0.6, py::arg("c") = 5.0, py::arg("h") = 0.2,
      py::arg("prefetch") = 1000, py::arg("kde_neighbors") = 1000,
      py::arg("tv_threshold") = "theorem", py::arg("seed") = 0,
      py::arg("mode") = "exact", py::arg("partitions") = 0,
      py::arg("coarse_fetch") = 0, py::arg("threads") = 0,
      "Run the selection pipeline; returns candidate positions, their "
      "probabilities, and diagnostics.");

  m.def(
      "knn",
      [](const py::array& queries, const py::array& candidates, std::size_t l,
         const std::string& mode, std::uint32_t partitions,
         std::uint32_t coarse_fetch, std::uint64_t seed, unsigned threads) {
        const tsds::EmbeddingSet q = to_set(queries, std::nullopt);
        const tsds::EmbeddingSet d = to_set(candidates, std::nullopt);
        tsds::NeighborTable table;
        {
          py::gil_scoped_release release;
          const tsds::Index index = tsds::build_index(
              d, make_options(mode, partitions, coarse_fetch, seed, threads).index);
          table = tsds::get_knn(index, q, l);
        }
        const auto m_rows = static_cast<py::ssize_t>(table.query_count);
        const auto l_cols = static_cast<py::ssize_t>(table.prefetch);
        py::array_t<std::uint32_t> indices({m_rows, l_cols});
        py::array_t<double> distances({m_rows, l_cols});
        std::copy(table.indices.begin(), table.indices.end(),
                  indices.mutable_data());
        std::copy(table.distances.begin(), table.distances.end(),
                  distances.mutable_data());
        return py::make_tuple(indices, distances);
      },
      py::arg("queries"), py::arg("candidates"), py::arg("l"),
      py::arg("mode") = "exact", py::arg("partitions") = 0,
      py::arg("coarse_fetch") = 0, py::arg("seed") = 0, py::arg("threads") = 0,
      "Sorted l-nearest-neighbor positions and distances per query row.");

  m.def(
      "kde_full",
      [](const py::array& points, std::size_t i_neighbors, double h,
         std::size_t cap) {
        const tsds::EmbeddingSet set = to_set(points, std::nullopt);
        std::vector<double> rho;
        {
          py::gil_scoped_release release;
          rho = tsds::compute_kde_full(set, i_neighbors, h, cap);
        }
        return py::array_t<double>(static_cast<py::ssize_t>(rho.size()),
                                   rho.data());
      },
      py::arg("points"), py::arg("i_neighbors"), py::arg("h"),
      py::arg("cap") = 10000,
      "Exact all-pairs Epanechnikov densities over one point set.");

  m.def(
      "sample",
      [](const py::array& ids, const py::array& weights,
         std::size_t n_per_epoch, std::size_t epochs, std::uint64_t seed,
         bool fixed) {
        auto id_arr =
            py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>::ensure(ids);
        auto w_arr =
            py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(weights);
        if (!id_arr || !w_arr || id_arr.ndim() != 1 || w_arr.ndim() != 1)
          throw std::invalid_argument("ids and weights must be 1-d arrays");
        std::vector<std::uint64_t> id_vec(id_arr.data(),
                                          id_arr.data() + id_arr.shape(0));
        std::vector<double> w_vec(w_arr.data(), w_arr.data() + w_arr.shape(0));
        tsds::SamplePlan plan;
        plan.draws_per_epoch = n_per_epoch;
        plan.epochs = epochs;
        plan.seed = seed;
        plan.fixed = fixed;
        std::vector<std::vector<std::uint64_t>> drawn;
        {
          py::gil_scoped_release release;
          drawn = tsds::sample_records(id_vec, w_vec, plan);
        }
        py::list out;
        for (const auto& epoch : drawn)
          out.append(py::array_t<std::uint64_t>(
              static_cast<py::ssize_t>(epoch.size()), epoch.data()));
        return out;
      },
      py::arg("ids"), py::arg("weights"), py::arg("n_per_epoch"),
      py::arg("epochs") = 1, py::arg("seed") = 0, py::arg("fixed") = false,
      "Seeded categorical draws with replacement; one id array per epoch.");

  m.def(
      "alignment_metric",
      [](const py::array& sample, const py::array& queries, std::size_t cap) {
        const tsds::EmbeddingSet a = to_set(sample, std::nullopt);
        const tsds::EmbeddingSet b = to_set(queries, std::nullopt);
        py::gil_scoped_release release;
        return tsds::alignment_metric(a, b, cap);
      },
      py::arg("sample"), py::arg("queries"), py::arg("cap") = 500,
      "Exact 1-Wasserstein distance between two uniform point clouds.");

  m.def(
      "effective_support",
      [](const py::array& weights) {
        auto w_arr =
            py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(weights);
        if (!w_arr || w_arr.ndim() != 1)
          throw std::invalid_argument("weights must be a 1-d array");
        tsds::ProbabilityAssignment assignment;
        assignment.candidate_count = static_cast<std::size_t>(w_arr.shape(0));
        for (py::ssize_t i = 0; i < w_arr.shape(0); ++i)
          if (w_arr.data()[i] > 0.0)
            assignment.entries.emplace_back(static_cast<std::uint32_t>(i),
                                            w_arr.data()[i]);
        return tsds::effective_support(assignment);
      },
      py::arg("weights"),
      "exp of the Shannon entropy of a probability vector.");
}
