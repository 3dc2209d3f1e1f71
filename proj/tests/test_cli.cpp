#include <sys/wait.h>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "tsds/embedding_set.hpp"
#include "tsds/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "tsds_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunResult run(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const auto out = work_dir() / ("stdout." + std::to_string(counter));
  const auto err = work_dir() / ("stderr." + std::to_string(counter));
  ++counter;
  std::string cmd = env + (env.empty() ? "" : " ") + TSDS_CLI_BIN + " " + args +
                    " > " + out.string() + " 2> " + err.string();
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string path_of(const char* name) { return (work_dir() / name).string(); }

std::vector<json> parse_lines(const std::string& text) {
  std::vector<json> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) lines.push_back(json::parse(line));
  return lines;
}

// Shared corpus; built once, used by the later cases.
void ensure_corpus() {
  static const bool ready = [] {
    auto c = run("synth --component 0,0:0.3:120 --component 3,3:0.3:80 --out " +
                 path_of("c.tsem") + " --seed 5");
    REQUIRE(c.code == 0);
    auto q = run("synth --component 0,0:0.25:40 --out " + path_of("q.tsem") +
                 " --seed 9");
    REQUIRE(q.code == 0);
    return true;
  }();
  (void)ready;
}

std::string select_args(const char* out_name) {
  return std::string("select --candidates ") + path_of("c.tsem") +
         " --queries " + path_of("q.tsem") + " --regularizer kde" +
         " --alpha 0.6 --c 5 --h 0.35 --prefetch 64 --kde-neighbors 64" +
         " --seed 4 --out " + path_of(out_name);
}

}  // namespace

TEST_CASE("cli: help and argument errors") {
  CHECK(run("--help").code == 0);
  CHECK(run("select --help").code == 0);
  CHECK(run("no-such-command").code == 1);
  CHECK(run("").code == 1);  // a subcommand is required

  ensure_corpus();
  auto bad_alpha = run("select --candidates " + path_of("c.tsem") +
                       " --queries " + path_of("q.tsem") +
                       " --alpha 1.5 --out " + path_of("nope.jsonl"));
  CHECK(bad_alpha.code == 1);
  CHECK(bad_alpha.err.find("--alpha") != std::string::npos);

  auto missing = run("select --candidates " + path_of("absent.tsem") +
                     " --queries " + path_of("q.tsem") + " --out " +
                     path_of("nope.jsonl"));
  CHECK(missing.code == 1);
  CHECK(missing.err.find("error") != std::string::npos);
}

TEST_CASE("cli: ingest validates and converts") {
  {
    std::ofstream out(path_of("rows.jsonl"));
    out << "{\"id\": 3, \"vec\": [1.0, 2.0]}\n{\"id\": 4, \"vec\": [5, 6]}\n";
  }
  auto ok = run("ingest --input " + path_of("rows.jsonl") + " --out " +
                path_of("rows.tsem"));
  CHECK(ok.code == 0);
  auto set = tsds::read_binary(path_of("rows.tsem"));
  CHECK(set.count() == 2);
  CHECK(set.ids == std::vector<std::uint64_t>{3, 4});

  {
    std::ofstream out(path_of("badrows.jsonl"));
    out << "{\"id\": 3, \"vec\": [1.0, 2.0]}\n{\"id\": 4, \"vec\": [5]}\n";
  }
  auto bad = run("ingest --input " + path_of("badrows.jsonl") + " --out " +
                 path_of("badrows.tsem"));
  CHECK(bad.code == 1);
  CHECK(bad.err.find(":2:") != std::string::npos);
}

TEST_CASE("cli: selection produces a deterministic, well-formed assignment") {
  ensure_corpus();
  auto first = run(select_args("p.jsonl") + " --export-densities " +
                   path_of("d.jsonl"));
  REQUIRE(first.code == 0);

  auto file = tsds::read_assignment_jsonl(path_of("p.jsonl"));
  CHECK(file.header["M"] == 40);
  CHECK(file.header["N"] == 200);
  CHECK(file.header["regularizer"] == "kde");
  CHECK(file.header["alpha"] == 0.6);
  CHECK(file.header.contains("s_star"));
  CHECK_FALSE(file.header.contains("K"));
  CHECK(file.header.contains("truncated"));
  CHECK(file.header.contains("assumption_violated"));
  CHECK(file.header["seed"] == 4);
  double total = 0.0;
  for (std::size_t i = 0; i < file.p.size(); ++i) {
    CHECK(file.p[i] > 0.0);
    if (i) CHECK(file.p[i] <= file.p[i - 1]);
    total += file.p[i];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

  // Density sidecar: ascending ids, positive densities.
  auto dens_lines = parse_lines(slurp(path_of("d.jsonl")));
  REQUIRE(dens_lines.size() > 1);
  std::uint64_t last_id = 0;
  for (std::size_t i = 1; i < dens_lines.size(); ++i) {
    const auto id = dens_lines[i]["id"].get<std::uint64_t>();
    if (i > 1) CHECK(id > last_id);
    last_id = id;
    CHECK(dens_lines[i]["rho"].get<double>() >= 1.0);
  }

  auto rerun = run(select_args("p2.jsonl"));
  REQUIRE(rerun.code == 0);
  CHECK(slurp(path_of("p.jsonl")) == slurp(path_of("p2.jsonl")));

  // Chatty logging goes to stderr and leaves the payload untouched.
  auto logged = run(select_args("p3.jsonl"), "TSDS_LOG=debug");
  REQUIRE(logged.code == 0);
  CHECK_FALSE(logged.err.empty());
  CHECK(slurp(path_of("p.jsonl")) == slurp(path_of("p3.jsonl")));

  auto unwritable = run(select_args("../no/such/dir/p.jsonl"));
  CHECK(unwritable.code == 2);
}

TEST_CASE("cli: persisted indexes are reused and provenance-checked") {
  ensure_corpus();
  auto built = run("index --candidates " + path_of("c.tsem") + " --out " +
                   path_of("c.tsix") + " --mode two_stage --partitions 8" +
                   " --seed 3");
  REQUIRE(built.code == 0);

  auto with_index = run(select_args("pi.jsonl") + " --index " + path_of("c.tsix"));
  REQUIRE(with_index.code == 0);

  // Same shape, different content: the stored hash must catch it.
  auto other = run("synth --component 0,0:0.3:120 --component 3,3:0.3:80 --out " +
                   path_of("c2.tsem") + " --seed 6");
  REQUIRE(other.code == 0);
  auto mismatch = run("select --candidates " + path_of("c2.tsem") +
                      " --queries " + path_of("q.tsem") + " --index " +
                      path_of("c.tsix") + " --out " + path_of("pm.jsonl"));
  CHECK(mismatch.code == 1);
  CHECK(mismatch.err.find("different candidate") != std::string::npos);
}

TEST_CASE("cli: sampling is reproducible and honors the record format") {
  ensure_corpus();
  REQUIRE(run(select_args("ps.jsonl")).code == 0);
  const std::string sample_args = "sample --assignment " + path_of("ps.jsonl") +
                                  " --out " + path_of("s.jsonl") +
                                  " --n-per-epoch 50 --epochs 2 --seed 7";
  REQUIRE(run(sample_args).code == 0);
  auto lines = parse_lines(slurp(path_of("s.jsonl")));
  REQUIRE(lines.size() == 1 + 100);
  CHECK(lines[0]["n_per_epoch"] == 50);
  CHECK(lines[0]["epochs"] == 2);
  CHECK(lines[0]["seed"] == 7);
  for (std::size_t i = 1; i <= 100; ++i) {
    const std::size_t draw = i - 1;
    CHECK(lines[i]["epoch"] == draw / 50);
    CHECK(lines[i]["ordinal"] == draw % 50);
    CHECK(lines[i].contains("id"));
  }

  auto again = run("sample --assignment " + path_of("ps.jsonl") + " --out " +
                   path_of("s2.jsonl") + " --n-per-epoch 50 --epochs 2 --seed 7");
  REQUIRE(again.code == 0);
  CHECK(slurp(path_of("s.jsonl")) == slurp(path_of("s2.jsonl")));

  auto compact = run("sample --assignment " + path_of("ps.jsonl") + " --out " +
                     path_of("sc.jsonl") +
                     " --n-per-epoch 50 --epochs 2 --seed 7 --compact");
  REQUIRE(compact.code == 0);
  auto clines = parse_lines(slurp(path_of("sc.jsonl")));
  REQUIRE(clines.size() == 3);
  CHECK(clines[1]["ids"].size() == 50);
  CHECK(clines[2]["epoch"] == 1);
  // Compact and per-draw forms carry the same draws.
  for (std::size_t k = 0; k < 50; ++k) {
    CHECK(clines[1]["ids"][k] == lines[1 + k]["id"]);
    CHECK(clines[2]["ids"][k] == lines[51 + k]["id"]);
  }
}

TEST_CASE("cli: oracle verification emits a parseable report stream") {
  auto res = run(
      "verify --m 2 --n 6 --trials 3 --regularizer tv --seed 1"
      " --iterations 800 --restarts 1 --mc-samples 200");
  REQUIRE(res.code == 0);
  auto lines = parse_lines(res.out);
  REQUIRE(lines.size() == 5);  // header, three trials, summary
  CHECK(lines[0]["m"] == 2);
  CHECK(lines[0]["n"] == 6);
  CHECK(lines[0]["regularizer"] == "tv");
  for (std::size_t i = 1; i <= 3; ++i) {
    CHECK(lines[i]["trial"] == i - 1);
    CHECK(lines[i].contains("closed_form_objective"));
    CHECK(lines[i].contains("oracle_objective"));
    CHECK(lines[i].contains("gap"));
    CHECK(lines[i]["mc_violations"] == 0);
    CHECK(lines[i]["pass"] == true);
  }
  CHECK(lines[4]["summary"] == true);
  CHECK(lines[4]["trials"] == 3);
  CHECK(lines[4]["failed"] == 0);
}

TEST_CASE("cli: duplication benchmark in json and csv forms") {
  ensure_corpus();
  auto js = run("bench-dup --candidates " + path_of("c.tsem") + " --queries " +
                path_of("q.tsem") +
                " --fraction 0.05 --factor 3 --alpha 0.5 --c 5 --h 0.35" +
                " --prefetch 64 --kde-neighbors 64 --seed 2");
  REQUIRE(js.code == 0);
  auto lines = parse_lines(js.out);
  REQUIRE(lines.size() == 4);  // config + one report per regularizer
  CHECK(lines[0]["fraction"] == 0.05);
  CHECK(lines[1]["regularizer"] == "uniform");
  CHECK(lines[2]["regularizer"] == "kde");
  CHECK(lines[3]["regularizer"] == "tv");
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(lines[i].contains("inflation_ratio"));
    CHECK(lines[i].contains("effective_support"));
  }

  auto csv = run("bench-dup --candidates " + path_of("c.tsem") + " --queries " +
                 path_of("q.tsem") +
                 " --fraction 0.05 --factor 3 --regularizer kde --alpha 0.5" +
                 " --c 5 --h 0.35 --prefetch 64 --kde-neighbors 64 --seed 2" +
                 " --csv");
  REQUIRE(csv.code == 0);
  std::stringstream ss(csv.out);
  std::string comment, header, row, extra;
  REQUIRE(std::getline(ss, comment));
  REQUIRE(std::getline(ss, header));
  REQUIRE(std::getline(ss, row));
  CHECK_FALSE(std::getline(ss, extra));
  CHECK(comment.rfind("# ", 0) == 0);
  CHECK(header.find("inflation_ratio") != std::string::npos);
  CHECK(std::count(header.begin(), header.end(), ',') ==
        std::count(row.begin(), row.end(), ','));
}
