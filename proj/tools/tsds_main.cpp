#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "tsds/bench.hpp"
#include "tsds/embedding_set.hpp"
#include "tsds/log.hpp"
#include "tsds/oracle.hpp"
#include "tsds/pipeline.hpp"
#include "tsds/rng.hpp"
#include "tsds/sampler.hpp"

namespace {

using nlohmann::json;

// "x1,x2,...:stddev:count"
tsds::GaussianComponent parse_component(const std::string& text) {
  const auto first = text.find(':');
  const auto second = text.find(':', first + 1);
  if (first == std::string::npos || second == std::string::npos)
    throw std::invalid_argument("component must be mean,..:stddev:count, got '" +
                                text + "'");
  tsds::GaussianComponent comp;
  std::stringstream mean(text.substr(0, first));
  std::string item;
  while (std::getline(mean, item, ','))
    comp.mean.push_back(std::stod(item));
  if (comp.mean.empty())
    throw std::invalid_argument("component mean is empty in '" + text + "'");
  comp.stddev = std::stod(text.substr(first + 1, second - first - 1));
  const long long count = std::stoll(text.substr(second + 1));
  if (comp.stddev < 0.0)
    throw std::invalid_argument("component stddev must be >= 0");
  if (count < 1)
    throw std::invalid_argument("component count must be >= 1");
  comp.count = static_cast<std::size_t>(count);
  return comp;
}

struct SelectFlags {
  std::string candidates, queries, out;
  std::string regularizer = "kde";
  std::string tv_threshold = "theorem";
  std::string mode = "exact";
  std::string index_path, densities_out;
  double alpha = 0.6, c = 5.0, h = 0.2;
  std::size_t prefetch = 1000, kde_neighbors = 1000;
  std::uint32_t partitions = 0, coarse_fetch = 0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

tsds::SelectionConfig to_config(const SelectFlags& f) {
  tsds::SelectionConfig config;
  config.regularizer = tsds::parse_regularizer(f.regularizer);
  config.alpha = f.alpha;
  config.c = f.c;
  config.h = f.h;
  config.prefetch = f.prefetch;
  config.kde_neighbors = f.kde_neighbors;
  config.tv_threshold = f.tv_threshold == "algorithm"
                            ? tsds::TvThresholdRule::algorithm
                            : tsds::TvThresholdRule::theorem;
  config.seed = f.seed;
  return config;
}

tsds::PipelineOptions to_pipeline_options(const SelectFlags& f) {
  tsds::PipelineOptions options;
  options.index.mode = f.mode == "two_stage" ? tsds::IndexMode::two_stage
                                             : tsds::IndexMode::exact;
  options.index.partition_count = f.partitions;
  options.index.coarse_fetch = f.coarse_fetch;
  options.index.seed = f.seed;
  options.index.threads = f.threads;
  options.kde.threads = f.threads;
  return options;
}

std::ostream& open_or_stdout(std::ofstream& file, const std::string& path) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open for write: " + path);
  return file;
}

int run_verify(std::size_t m, std::size_t n, std::size_t trials,
               const std::string& regularizer, std::uint64_t seed,
               const tsds::OracleConfig& base, const std::string& out_path) {
  const tsds::Regularizer reg = tsds::parse_regularizer(regularizer);
  std::ofstream file;
  std::ostream& out = open_or_stdout(file, out_path);

  json header;
  header["m"] = m;
  header["n"] = n;
  header["trials"] = trials;
  header["regularizer"] = regularizer;
  header["seed"] = seed;
  header["iterations"] = base.iterations;
  header["restarts"] = base.restarts;
  header["mc_samples"] = base.mc_samples;
  header["tolerance"] = base.tolerance;
  out << header.dump() << '\n';

  std::size_t failed = 0, excluded = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto inst = tsds::make_instance(
        m, n, reg, tsds::splitmix64(seed ^ (0xbe9c0ULL + t)));
    const auto closed =
        tsds::assign_closed_form(inst.neighbors, &inst.density_table, inst.config);
    tsds::OracleConfig oracle = base;
    oracle.seed = tsds::splitmix64(seed ^ (0x0e7acfeULL + t));
    const auto* rho =
        reg == tsds::Regularizer::kde ? &inst.densities : nullptr;
    const auto report = tsds::verify_optimality(closed.plan, inst.distances,
                                                rho, inst.config, oracle);
    const bool assumption_violated =
        closed.diagnostics.assumption_violated.value_or(false);
    if (assumption_violated)
      ++excluded;
    else if (!report.pass)
      ++failed;

    json line;
    line["trial"] = t;
    line["alpha"] = inst.config.alpha;
    line["c"] = inst.config.c;
    line["closed_form_objective"] = report.closed_form_objective;
    line["oracle_objective"] = report.oracle_objective;
    line["gap"] = report.gap;
    line["mc_violations"] = report.mc_violations;
    line["assumption_violated"] = assumption_violated;
    line["pass"] = report.pass;
    out << line.dump() << '\n';
  }
  json summary;
  summary["summary"] = true;
  summary["trials"] = trials;
  summary["failed"] = failed;
  summary["excluded_assumption_violations"] = excluded;
  out << summary.dump() << '\n';
  out.flush();
  if (failed > 0)
    tsds::log_at(tsds::LogLevel::warn, "%zu of %zu trials failed optimality",
                 failed, trials);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-specific data selection over embedded examples"};
  // --h is a real flag (kernel size), so help stays long-form only.
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1);
  int exit_code = 0;

  // ingest
  auto* ingest = app.add_subcommand(
      "ingest", "convert a JSONL embedding file to the binary format");
  ingest->set_help_flag("--help", "print this help and exit");
  struct {
    std::string input, out;
    bool normalize = false;
    std::uint64_t seed = 0;
  } ing;
  ingest->add_option("--input", ing.input, "JSONL file, {\"id\",\"vec\"} per line")
      ->required();
  ingest->add_option("--out", ing.out, "output embedding file")->required();
  ingest->add_flag("--normalize", ing.normalize, "scale rows to unit norm");
  ingest->add_option("--seed", ing.seed, "unused; accepted for uniformity");
  ingest->callback([&] {
    tsds::EmbeddingSet set = tsds::ingest_jsonl(ing.input);
    if (ing.normalize) tsds::normalize(set);
    tsds::write_binary(set, ing.out);
    tsds::log_at(tsds::LogLevel::info,
                 "ingested %zu rows of dim %u (normalized=%d) into %s",
                 set.count(), set.dim, static_cast<int>(set.normalized),
                 ing.out.c_str());
  });

  // synth
  auto* synth = app.add_subcommand(
      "synth", "generate a Gaussian-mixture embedding corpus");
  synth->set_help_flag("--help", "print this help and exit");
  struct {
    std::vector<std::string> components;
    std::string out;
    bool normalize = false;
    std::uint64_t seed = 0;
  } sy;
  synth
      ->add_option("--component", sy.components,
                   "mean,..:stddev:count (repeatable)")
      ->required();
  synth->add_option("--out", sy.out, "output embedding file")->required();
  synth->add_flag("--normalize", sy.normalize, "scale rows to unit norm");
  synth->add_option("--seed", sy.seed, "generator seed");
  synth->callback([&] {
    std::vector<tsds::GaussianComponent> components;
    components.reserve(sy.components.size());
    for (const auto& text : sy.components)
      components.push_back(parse_component(text));
    tsds::EmbeddingSet set = tsds::synth_mixture(components, sy.seed);
    if (sy.normalize) tsds::normalize(set);
    tsds::write_binary(set, sy.out);
    tsds::log_at(tsds::LogLevel::info, "synthesized %zu rows of dim %u into %s",
                 set.count(), set.dim, sy.out.c_str());
  });

  // index
  auto* index = app.add_subcommand("index", "build and persist a knn index");
  index->set_help_flag("--help", "print this help and exit");
  struct {
    std::string candidates, out;
    std::string mode = "two_stage";
    std::uint32_t partitions = 0, coarse_fetch = 0;
    std::uint64_t seed = 0;
    unsigned threads = 0;
  } ix;
  index->add_option("--candidates", ix.candidates, "candidate embedding file")
      ->required();
  index->add_option("--out", ix.out, "output index file")->required();
  index->add_option("--mode", ix.mode, "exact or two_stage")
      ->check(CLI::IsMember({"exact", "two_stage"}));
  index->add_option("--partitions", ix.partitions,
                    "coarse partition count (0 = auto)");
  index->add_option("--coarse-fetch", ix.coarse_fetch,
                    "candidates gathered before re-ranking (0 = auto)");
  index->add_option("--seed", ix.seed, "partitioning seed");
  index->add_option("--threads", ix.threads, "worker cap (0 = all cores)");
  index->callback([&] {
    const tsds::EmbeddingSet set = tsds::read_binary(ix.candidates);
    tsds::IndexParams params;
    params.mode = ix.mode == "two_stage" ? tsds::IndexMode::two_stage
                                         : tsds::IndexMode::exact;
    params.partition_count = ix.partitions;
    params.coarse_fetch = ix.coarse_fetch;
    params.seed = ix.seed;
    params.threads = ix.threads;
    const tsds::Index built = tsds::build_index(set, params);
    tsds::save_index(built, ix.out, tsds::fnv1a_file(ix.candidates));
    tsds::log_at(tsds::LogLevel::info, "indexed %zu rows (%s) into %s",
                 set.count(), ix.mode.c_str(), ix.out.c_str());
  });

  // select
  auto* select = app.add_subcommand(
      "select", "compute the selection distribution over candidates");
  select->set_help_flag("--help", "print this help and exit");
  SelectFlags se;
  select->add_option("--candidates", se.candidates, "candidate embedding file")
      ->required();
  select->add_option("--queries", se.queries, "query embedding file")
      ->required();
  select->add_option("--out", se.out, "assignment output (JSONL)")->required();
  select->add_option("--regularizer", se.regularizer, "uniform, kde, or tv")
      ->check(CLI::IsMember({"uniform", "kde", "tv"}));
  select->add_option("--alpha", se.alpha, "cost/diversity tradeoff")
      ->check(CLI::Range(0.0, 1.0));
  select->add_option("--c", se.c, "cost scaling constant")
      ->check(CLI::PositiveNumber);
  select->add_option("--h", se.h, "kernel size (kde)")
      ->check(CLI::PositiveNumber);
  select->add_option("--prefetch", se.prefetch, "neighbors retrieved per query")
      ->check(CLI::PositiveNumber);
  select->add_option("--kde-neighbors", se.kde_neighbors,
                     "neighbors used per density estimate")
      ->check(CLI::PositiveNumber);
  select->add_option("--tv-threshold", se.tv_threshold,
                     "tv qualifying rule: theorem or algorithm")
      ->check(CLI::IsMember({"theorem", "algorithm"}));
  select->add_option("--mode", se.mode, "retrieval when no --index given")
      ->check(CLI::IsMember({"exact", "two_stage"}));
  select->add_option("--partitions", se.partitions, "two_stage partitions");
  select->add_option("--coarse-fetch", se.coarse_fetch, "two_stage gather size");
  select->add_option("--index", se.index_path, "reuse a persisted index");
  select->add_option("--export-densities", se.densities_out,
                     "also write {\"id\",\"rho\"} JSONL (kde only)");
  select->add_option("--seed", se.seed, "seed recorded and used throughout");
  select->add_option("--threads", se.threads, "worker cap (0 = all cores)");
  select->callback([&] {
    const tsds::EmbeddingSet candidates = tsds::read_binary(se.candidates);
    const tsds::EmbeddingSet queries = tsds::read_binary(se.queries);
    const tsds::SelectionConfig config = to_config(se);
    if (!se.densities_out.empty() && config.regularizer != tsds::Regularizer::kde)
      throw std::invalid_argument("--export-densities needs --regularizer kde");

    tsds::SelectionOutput output;
    if (se.index_path.empty()) {
      output = tsds::run_selection(queries, candidates, config,
                                   to_pipeline_options(se));
    } else {
      auto [loaded, stored_hash] = tsds::load_index(se.index_path, candidates);
      if (stored_hash != tsds::fnv1a_file(se.candidates))
        throw std::invalid_argument(se.index_path +
                                    ": index was built from a different "
                                    "candidate file");
      output = tsds::run_selection(queries, candidates, config,
                                   to_pipeline_options(se), &loaded);
    }
    tsds::write_assignment_jsonl(se.out, output, candidates.ids);
    if (!se.densities_out.empty())
      tsds::write_densities_jsonl(se.densities_out, output.densities,
                                  candidates.ids);
    tsds::log_at(tsds::LogLevel::info, "assignment over %zu candidates -> %s",
                 candidates.count(), se.out.c_str());
  });

  // sample
  auto* sample = app.add_subcommand(
      "sample", "draw seeded samples from an assignment file");
  sample->set_help_flag("--help", "print this help and exit");
  struct {
    std::string assignment, out;
    std::size_t n_per_epoch = 0, epochs = 1;
    std::uint64_t seed = 0;
    bool fixed = false, compact = false;
  } sa;
  sample->add_option("--assignment", sa.assignment, "assignment JSONL")
      ->required();
  sample->add_option("--out", sa.out, "sample output (JSONL)")->required();
  sample->add_option("--n-per-epoch", sa.n_per_epoch, "draws per epoch")
      ->required()
      ->check(CLI::PositiveNumber);
  sample->add_option("--epochs", sa.epochs, "epoch count")
      ->check(CLI::PositiveNumber);
  sample->add_option("--seed", sa.seed, "sampling seed");
  sample->add_flag("--fixed", sa.fixed, "reuse epoch 0's stream every epoch");
  sample->add_flag("--compact", sa.compact, "one id array per epoch");
  sample->callback([&] {
    const tsds::AssignmentFile file = tsds::read_assignment_jsonl(sa.assignment);
    tsds::SamplePlan plan;
    plan.draws_per_epoch = sa.n_per_epoch;
    plan.epochs = sa.epochs;
    plan.seed = sa.seed;
    plan.fixed = sa.fixed;
    const auto epochs = tsds::sample_records(file.ids, file.p, plan);
    json header;
    header["n_per_epoch"] = sa.n_per_epoch;
    header["epochs"] = sa.epochs;
    header["seed"] = sa.seed;
    header["fixed"] = sa.fixed;
    header["compact"] = sa.compact;
    header["support"] = file.ids.size();
    tsds::write_samples_jsonl(sa.out, epochs, header, sa.compact);
    tsds::log_at(tsds::LogLevel::info, "%zu epochs x %zu draws -> %s",
                 sa.epochs, sa.n_per_epoch, sa.out.c_str());
  });

  // verify
  auto* verify = app.add_subcommand(
      "verify", "check closed-form optimality against the numerical oracle");
  verify->set_help_flag("--help", "print this help and exit");
  struct {
    std::size_t m = 2, n = 6, trials = 50;
    std::string regularizer = "uniform";
    std::string out;
    std::uint64_t seed = 0;
    tsds::OracleConfig oracle;
  } ve;
  verify->add_option("--m", ve.m, "query count")->check(CLI::PositiveNumber);
  verify->add_option("--n", ve.n, "candidate count")
      ->check(CLI::PositiveNumber);
  verify->add_option("--trials", ve.trials, "random instances to check")
      ->check(CLI::PositiveNumber);
  verify->add_option("--regularizer", ve.regularizer, "uniform, kde, or tv")
      ->check(CLI::IsMember({"uniform", "kde", "tv"}));
  verify->add_option("--seed", ve.seed, "instance generation seed");
  verify->add_option("--iterations", ve.oracle.iterations,
                     "subgradient iterations per restart");
  verify->add_option("--restarts", ve.oracle.restarts, "oracle restarts");
  verify->add_option("--mc-samples", ve.oracle.mc_samples,
                     "Monte-Carlo feasible draws");
  verify->add_option("--tolerance", ve.oracle.tolerance, "objective tolerance");
  verify->add_option("--out", ve.out, "report stream (default stdout)");
  verify->callback([&] {
    exit_code = run_verify(ve.m, ve.n, ve.trials, ve.regularizer, ve.seed,
                           ve.oracle, ve.out);
  });

  // bench-dup
  auto* bench = app.add_subcommand(
      "bench-dup", "duplicate-robustness benchmark over a candidate corpus");
  bench->set_help_flag("--help", "print this help and exit");
  SelectFlags bd;
  struct {
    double fraction = 0.01;
    std::uint32_t factor = 10;
    std::string regularizers = "all";
    bool csv = false;
  } bde;
  bench->add_option("--candidates", bd.candidates, "candidate embedding file")
      ->required();
  bench->add_option("--queries", bd.queries, "query embedding file")
      ->required();
  bench->add_option("--fraction", bde.fraction, "share of rows to duplicate")
      ->check(CLI::Range(0.0, 1.0));
  bench->add_option("--factor", bde.factor, "copies per chosen row");
  bench->add_option("--regularizer", bde.regularizers,
                    "uniform, kde, tv, or all");
  bench->add_option("--alpha", bd.alpha, "cost/diversity tradeoff")
      ->check(CLI::Range(0.0, 1.0));
  bench->add_option("--c", bd.c, "cost scaling constant")
      ->check(CLI::PositiveNumber);
  bench->add_option("--h", bd.h, "kernel size (kde)")
      ->check(CLI::PositiveNumber);
  bench->add_option("--prefetch", bd.prefetch, "neighbors retrieved per query")
      ->check(CLI::PositiveNumber);
  bench->add_option("--kde-neighbors", bd.kde_neighbors,
                    "neighbors used per density estimate")
      ->check(CLI::PositiveNumber);
  bench->add_option("--tv-threshold", bd.tv_threshold,
                    "tv qualifying rule: theorem or algorithm")
      ->check(CLI::IsMember({"theorem", "algorithm"}));
  bench->add_option("--seed", bd.seed, "duplication and pipeline seed");
  bench->add_option("--threads", bd.threads, "worker cap (0 = all cores)");
  bench->add_option("--out", bd.out, "report output (default stdout)");
  bench->add_flag("--csv", bde.csv, "flat rows instead of JSON");
  bench->callback([&] {
    const tsds::EmbeddingSet candidates = tsds::read_binary(bd.candidates);
    const tsds::EmbeddingSet queries = tsds::read_binary(bd.queries);
    std::vector<tsds::Regularizer> regs;
    if (bde.regularizers == "all")
      regs = {tsds::Regularizer::uniform, tsds::Regularizer::kde,
              tsds::Regularizer::tv};
    else
      regs = {tsds::parse_regularizer(bde.regularizers)};

    tsds::DuplicationSpec spec;
    spec.fraction = bde.fraction;
    spec.factor = bde.factor;
    spec.seed = bd.seed;

    std::ofstream file;
    std::ostream& out = open_or_stdout(file, bd.out);
    json config_header;
    config_header["fraction"] = spec.fraction;
    config_header["factor"] = spec.factor;
    config_header["alpha"] = bd.alpha;
    config_header["c"] = bd.c;
    config_header["h"] = bd.h;
    config_header["prefetch"] = bd.prefetch;
    config_header["kde_neighbors"] = bd.kde_neighbors;
    config_header["seed"] = bd.seed;
    if (bde.csv) {
      out << "# " << config_header.dump() << '\n' << tsds::csv_header() << '\n';
    } else {
      out << config_header.dump() << '\n';
    }
    for (tsds::Regularizer reg : regs) {
      tsds::SelectionConfig config = to_config(bd);
      config.regularizer = reg;
      const auto report = tsds::dup_robustness(candidates, queries, config,
                                               spec, to_pipeline_options(bd));
      out << (bde.csv ? tsds::to_csv_row(report) : tsds::to_json(report).dump())
          << '\n';
    }
    out.flush();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return exit_code;
}
