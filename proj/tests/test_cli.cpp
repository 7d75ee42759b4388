#include <doctest.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "lkge/cli.hpp"
#include "lkge/error.hpp"
#include "lkge/experiment.hpp"
#include "support.hpp"

using namespace lkge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Routes the CLI's logger into a buffer so messages can be inspected.
std::ostringstream& log_buffer() {
  static std::ostringstream buffer;
  static const bool installed = [] {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(buffer);
    auto logger = std::make_shared<spdlog::logger>("lkge", sink);
    spdlog::drop("lkge");
    spdlog::register_logger(logger);
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)installed;
  return buffer;
}

int cli(std::vector<std::string> args) {
  log_buffer().str("");
  args.insert(args.begin(), "lkge-bench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

void write_run(const fs::path& dir, std::uint64_t seed, double mrr,
               double lr = 0.01) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.learning_rate = lr;
  json run = {{"config", to_json(cfg)},
              {"union", {{"mrr", mrr}, {"hits1", 0.1}, {"hits3", 0.2}, {"hits10", 0.3}}},
              {"fwt", 0.05},
              {"bwt", nullptr},
              {"cumulative_train_seconds", {1.0, 2.0}}};
  fs::create_directories(dir);
  test::write_file(dir / "run.json", run.dump());
}

constexpr const char* kQuick =
    R"({"dim": 8, "max_epochs": 3, "batch_size": 128, "learning_rate": 0.01, "margin": 4})";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help exits successfully") {
  CHECK(cli({"--help"}) == 0);
  CHECK(cli({"eval", "--help"}) == 0);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}) == 2);
  CHECK(cli({"frobnicate"}) == 2);
  CHECK(cli({"eval"}) == 2);
  test::TempDir dir;
  CHECK(cli({"train", "--dataset", (dir / "ds").string(), "--out",
             (dir / "run").string(), "--strategy", "bogus"}) == 2);
}

TEST_CASE("a missing dataset exits with 1 and names the path") {
  test::TempDir dir;
  const auto missing = (dir / "no-such-dataset").string();
  CHECK(cli({"train", "--dataset", missing, "--out", (dir / "run").string()}) == 1);
  CHECK(log_buffer().str().find(missing) != std::string::npos);
}

TEST_CASE("build, train and evaluate from the command line") {
  test::TempDir dir;
  const auto kg = test::small_kg(21);
  write_triples(dir / "kg.tsv", kg.facts, kg.vocab);
  test::write_file(dir / "cfg.json", kQuick);

  REQUIRE(cli({"build-dataset", "--input", (dir / "kg.tsv").string(), "--out",
               (dir / "ds").string(), "--variant", "entity", "--seed", "4"}) == 0);
  const auto ds = load_dataset(dir / "ds");
  CHECK(ds.build.variant == "entity");
  CHECK(ds.size() == 5);

  REQUIRE(cli({"train", "--dataset", (dir / "ds").string(), "--out",
               (dir / "run").string(), "--strategy", "lkge", "--config",
               (dir / "cfg.json").string(), "--seed", "3"}) == 0);
  const auto run = read_json(dir / "run" / "run.json");
  CHECK(run.at("config").at("dim") == 8);
  CHECK(run.at("config").at("seed") == 3);

  REQUIRE(cli({"eval", "--dataset", (dir / "ds").string(), "--run",
               (dir / "run").string(), "--out", (dir / "eval.json").string()}) == 0);
  const auto ev = read_json(dir / "eval.json");
  CHECK(ev.at("union").at("mrr").get<double>() ==
        doctest::Approx(run.at("union").at("mrr").get<double>()));

  REQUIRE(cli({"eval", "--dataset", (dir / "ds").string(), "--checkpoint",
               (dir / "run" / "snapshot2.ckpt").string(), "--snapshot", "2",
               "--out", (dir / "s2.json").string()}) == 0);
  const auto s2 = read_json(dir / "s2.json");
  CHECK(s2.at("metrics").at("mrr").get<double>() ==
        doctest::Approx(run.at("h").at(1).at(1).get<double>()));

  // Snapshot 3 is beyond what the snapshot-2 model knows.
  CHECK(cli({"eval", "--dataset", (dir / "ds").string(), "--checkpoint",
             (dir / "run" / "snapshot2.ckpt").string(), "--snapshot", "3",
             "--out", (dir / "s3.json").string()}) == 1);
}

TEST_CASE("existing outputs are kept unless forced") {
  test::TempDir dir;
  const auto kg = test::small_kg(22);
  write_triples(dir / "kg.tsv", kg.facts, kg.vocab);
  const std::vector<std::string> args = {"build-dataset", "--input",
                                         (dir / "kg.tsv").string(), "--out",
                                         (dir / "ds").string()};
  REQUIRE(cli(args) == 0);
  const auto before = test::read_file(dir / "ds" / "meta.json");
  test::write_file(dir / "ds" / "meta.json", before + " ");
  REQUIRE(cli(args) == 0);
  CHECK(test::read_file(dir / "ds" / "meta.json") == before + " ");
  auto forced = args;
  forced.push_back("--force");
  REQUIRE(cli(forced) == 0);
  CHECK(test::read_file(dir / "ds" / "meta.json") == before);
}

TEST_CASE("seed aggregation") {
  test::TempDir dir;
  SUBCASE("a single seed has zero spread") {
    write_run(dir / "a", 1, 0.25);
    const std::vector<fs::path> dirs{dir / "a"};
    const auto agg = aggregate_seeds(dirs);
    CHECK(agg.metrics.at("union_mrr").mean == doctest::Approx(0.25));
    CHECK(agg.metrics.at("union_mrr").stddev == 0.0);
    CHECK(agg.metrics.count("bwt") == 0);
    CHECK(agg.metrics.at("train_seconds").mean == doctest::Approx(2.0));
  }
  SUBCASE("two seeds average") {
    write_run(dir / "a", 1, 0.20);
    write_run(dir / "b", 2, 0.22);
    const std::vector<fs::path> dirs{dir / "a", dir / "b"};
    const auto agg = aggregate_seeds(dirs);
    CHECK(agg.metrics.at("union_mrr").mean == doctest::Approx(0.21));
    CHECK(agg.metrics.at("union_mrr").stddev == doctest::Approx(0.0141421356));
    CHECK(agg.seeds == std::vector<std::uint64_t>{1, 2});
  }
  SUBCASE("runs that differ beyond the seed are refused") {
    write_run(dir / "a", 1, 0.20);
    write_run(dir / "b", 2, 0.22, 0.02);
    const std::vector<fs::path> dirs{dir / "a", dir / "b"};
    CHECK_THROWS_AS(aggregate_seeds(dirs), ConfigError);
  }
}

TEST_CASE("summarize uses the sample standard deviation") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto s = summarize(v);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.stddev == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(s.n == 4);
}

TEST_CASE("an experiment manifest trains every seed and writes means") {
  test::TempDir dir;
  const auto kg = test::small_kg(23);
  write_triples(dir / "kg.tsv", kg.facts, kg.vocab);
  const json manifest = {
      {"dataset", {{"triples", "kg.tsv"}, {"builder", {{"variant", "fact"}, {"seed", 2}}}}},
      {"runs",
       {{{"name", "ft"}, {"strategy", "finetune"}, {"config", json::parse(kQuick)}},
        {{"name", "ours"}, {"strategy", "lkge"}, {"config", json::parse(kQuick)}}}},
      {"seeds", {1, 2}},
      {"output_root", "out"}};
  test::write_file(dir / "manifest.json", manifest.dump(2));
  REQUIRE(cli({"experiment", "--manifest", (dir / "manifest.json").string()}) == 0);
  for (auto name : {"ft", "ours"}) {
    for (auto seed : {"seed1", "seed2"}) {
      CHECK(fs::exists(dir / "out" / name / seed / "run.json"));
    }
  }
  const auto means = read_json(dir / "out" / "means.json");
  CHECK(means.at("runs").at("ours").at("num_seeds") == 2);
  CHECK(means.at("dataset").at("num_snapshots") == 5);

  // Re-running reuses the finished runs.
  const auto stamp = fs::last_write_time(dir / "out" / "ours" / "seed1" / "run.json");
  REQUIRE(cli({"experiment", "--manifest", (dir / "manifest.json").string()}) == 0);
  CHECK(fs::last_write_time(dir / "out" / "ours" / "seed1" / "run.json") == stamp);

  REQUIRE(cli({"report", "--input", (dir / "out" / "means.json").string(), "--out",
               (dir / "table.csv").string()}) == 0);
  const auto csv = test::read_file(dir / "table.csv");
  CHECK(csv.rfind("model,", 0) == 0);
  CHECK(csv.find("ours,") != std::string::npos);
  CHECK(csv.find("ft,") != std::string::npos);
}

}  // TEST_SUITE
