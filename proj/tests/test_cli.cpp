#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "aecs/cli.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using aecs::cli::run_command;

namespace {

struct Run {
  int status = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.status = run_command(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("aecs_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string cfg(const std::string& name) { return fixture("configs/" + name).string(); }

}  // namespace

TEST_CASE("cli: search from a fixture config") {
  const auto dir = scratch("search");
  const auto r = run({"search", "--config", cfg("search_ok.json"), "--out", (dir / "run1").string()});
  REQUIRE(r.status == 0);
  CHECK(r.out.find("chosen (0,2,0)") != std::string::npos);
  for (const auto* f : {"config.json", "summary.json", "trace.jsonl"}) CHECK(fs::exists(dir / "run1" / f));
  const auto summary = nlohmann::json::parse(slurp(dir / "run1" / "summary.json"));
  CHECK(summary["chosen"] == nlohmann::json::array({0, 2, 0}));
  const auto echo = nlohmann::json::parse(slurp(dir / "run1" / "config.json"));
  CHECK(echo["seed"] == 7);
  CHECK(echo["search"]["repeats"] == 5);
  CHECK(echo["search"]["epsilon"] == 0.08);  // defaults expanded
  CHECK(echo["heuristic"]["alpha"] == 0.5);

  // Trace has one line per measurement.
  std::ifstream trace(dir / "run1" / "trace.jsonl");
  int lines = 0;
  for (std::string line; std::getline(trace, line);) {
    const auto rec = nlohmann::json::parse(line);
    CHECK(rec.contains("selection"));
    CHECK(rec.contains("speed_tps"));
    ++lines;
  }
  CHECK(lines == summary["measurement_count"].get<int>());
}

TEST_CASE("cli: flags override the config file") {
  const auto dir = scratch("override");
  const auto r = run({"search", "--config", cfg("search_ok.json"), "--repeats", "3", "--seed", "11", "--out",
                      (dir / "o").string()});
  REQUIRE(r.status == 0);
  const auto echo = nlohmann::json::parse(slurp(dir / "o" / "config.json"));
  CHECK(echo["search"]["repeats"] == 3);
  CHECK(echo["seed"] == 11);
  CHECK(echo["device"]["preset"] == "mate40pro");
}

TEST_CASE("cli: the seed is recorded even when drawn from entropy") {
  const auto dir = scratch("entropy");
  REQUIRE(run({"tree", "--preset", "mate40pro", "--root", "1,2,0", "--out", (dir / "t").string()}).status == 0);
  const auto echo = nlohmann::json::parse(slurp(dir / "t" / "config.json"));
  CHECK(echo["seed"].is_number_unsigned());
}

TEST_CASE("cli: config errors exit 1 with field diagnostics") {
  auto r = run({"search", "--config", cfg("unknown_field.json")});
  CHECK(r.status == 1);
  CHECK(r.err.find("search.repeatz") != std::string::npos);

  r = run({"search", "--config", cfg("wrong_type.json")});
  CHECK(r.status == 1);
  CHECK(r.err.find("heuristic.alpha") != std::string::npos);

  r = run({"search", "--config", cfg("bad_value.json")});
  CHECK(r.status == 1);
  CHECK(r.err.find("epsilon") != std::string::npos);

  r = run({"search", "--config", cfg("unknown_preset.json")});
  CHECK(r.status == 1);
  CHECK(r.err.find("pixel9") != std::string::npos);

  r = run({"search", "--config", cfg("malformed.json")});
  CHECK(r.status == 1);

  r = run({"search", "--config", cfg("does_not_exist.json")});
  CHECK(r.status == 1);

  r = run({"search", "--preset", "mate40pro", "--repeats", "many"});
  CHECK(r.status == 1);

  r = run({"tree", "--preset", "mate40pro", "--root", "2,0,0"});
  CHECK(r.status == 1);

  r = run({"search"});
  CHECK(r.status == 1);
}

TEST_CASE("cli: unknown or missing subcommand prints usage and exits 1") {
  auto r = run({"frobnicate"});
  CHECK(r.status == 1);
  CHECK(r.err.find("unknown subcommand 'frobnicate'") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);
  r = run({});
  CHECK(r.status == 1);
  CHECK(run({"--help"}).status == 0);
}

TEST_CASE("cli: runtime errors exit 2") {
  const auto dir = scratch("runtime");
  {
    std::ofstream f(dir / "efficient_only.json");
    f << R"({"descriptor": {"device_name": "eff", "clusters":
          [{"cores": 4, "max_freq_ghz": 1.8, "core_type": "efficient"}]}})";
  }
  auto r = run({"search", "--device", (dir / "efficient_only.json").string(), "--seed", "1"});
  CHECK(r.status == 2);

  { std::ofstream f(dir / "occupied"); }
  r = run({"search", "--preset", "mate40pro", "--seed", "1", "--repeats", "2", "--out",
           (dir / "occupied").string()});
  CHECK(r.status == 2);
}

TEST_CASE("cli: tree, presets, describe") {
  auto r = run({"tree", "--preset", "mate40pro", "--root", "1,2,0"});
  REQUIRE(r.status == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 5);

  r = run({"presets"});
  REQUIRE(r.status == 0);
  for (const auto& name : aecs::preset_names()) CHECK(r.out.find(name) != std::string::npos);

  r = run({"describe", "--sysfs", fixture("sysfs/mate40pro").string(), "--name", "snap"});
  REQUIRE(r.status == 0);
  CHECK(r.out.find("snap") != std::string::npos);
  CHECK(r.out.find("2.54") != std::string::npos);

  r = run({"describe", "--descriptor", fixture("descriptors/reversed.json").string()});
  CHECK(r.status == 0);
  r = run({"describe", "--sysfs", fixture("sysfs/inconsistent").string()});
  CHECK(r.status == 1);
}

TEST_CASE("cli: ablate and theorems write reports") {
  const auto dir = scratch("reports");
  auto r = run({"ablate", "--presets", "mate40pro,iphone12", "--trials", "10", "--seed", "3", "--out",
                (dir / "a").string()});
  REQUIRE(r.status == 0);
  CHECK(r.out.find("| | exhaustive (optimal) | AECS w/o heuristic | AECS |") != std::string::npos);
  for (const auto* f : {"report.csv", "report.md", "report.json", "config.json", "summary.json"}) {
    CHECK(fs::exists(dir / "a" / f));
  }
  r = run({"ablate", "--presets", "mate40pro", "--trials", "5", "--seed", "3", "--format", "csv"});
  CHECK(r.status == 0);
  CHECK(r.out.rfind("device,", 0) == 0);
  CHECK(run({"ablate", "--presets", "pixel9", "--trials", "5"}).status == 1);

  r = run({"theorems", "--preset", "mate40pro", "--variance-trials", "500", "--pairs", "200", "--seed", "5",
           "--out", (dir / "t").string()});
  REQUIRE(r.status == 0);
  CHECK(fs::exists(dir / "t" / "report.json"));
}

TEST_CASE("cli: re-running from the echoed config is byte-identical") {
  const auto dir = scratch("echo");
  const std::vector<std::vector<std::string>> commands = {
      {"search", "--preset", "galaxya56", "--repeats", "5", "--seed", "99"},
      {"oracle", "--preset", "xiaomi15pro", "--repeats", "3", "--seed", "5"},
      {"tree", "--preset", "mate40pro", "--root", "1,2,0"},
  };
  for (const auto& base : commands) {
    const auto first = dir / (base[0] + "_a");
    const auto second = dir / (base[0] + "_b");
    auto args = base;
    args.insert(args.end(), {"--out", first.string()});
    REQUIRE(run(args).status == 0);
    REQUIRE(run({base[0], "--config", (first / "config.json").string(), "--out", second.string()}).status == 0);
    CHECK(slurp(first / "summary.json") == slurp(second / "summary.json"));
    if (fs::exists(first / "trace.jsonl")) {
      CHECK(slurp(first / "trace.jsonl") == slurp(second / "trace.jsonl"));
    }
  }
}
