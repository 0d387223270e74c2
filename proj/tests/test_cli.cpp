#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "reconverge/cli.hpp"
#include "reconverge/metrics.hpp"
#include "reconverge/workload_gen.hpp"

using namespace reconverge;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("reconverge_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

} // namespace

TEST_CASE("gen writes a model and a truth sidecar") {
  const fs::path dir = scratch("gen");
  const fs::path model = dir / "h.json";
  const Result r = cli({"gen", "hammock", "--out", model.string(), "--seed", "3", "--bias", "0.5"});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(model));
  CHECK(fs::exists(dir / "h.truth"));
  const ProgramModel m = load_model_file(model.string());
  CHECK(validate_model(m).empty());
  const GroundTruth t = load_truth_file((dir / "h.truth").string());
  CHECK(t.sites.size() == m.branch_sites().size());
  CHECK(m == gen_hammock({.branch_bias = {0.5}, .seed = 3}).model);
}

TEST_CASE("gen rejects bad input") {
  const fs::path dir = scratch("genbad");
  CHECK(cli({"gen", "spiral", "--out", (dir / "x.json").string()}).code == kExitInvalid);
  CHECK(cli({"gen", "hammock", "--out", (dir / "x.json").string(), "--bias", "2"}).code == kExitInvalid);
  CHECK(cli({"gen", "hammock"}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("run with budget zero gives an empty but valid report") {
  const fs::path dir = scratch("run0");
  REQUIRE(cli({"gen", "nested", "--out", (dir / "n.json").string()}).code == kExitOk);
  const Result r = cli({"run", "--model", (dir / "n.json").string(), "--budget", "0", "--format", "json", "--out",
                        (dir / "out").string()});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::ordered_json::parse(slurp(dir / "out" / "summary.json"));
  REQUIRE(j["runs"].size() == 1);
  const MetricSet m = metrics_from_json(j["runs"][0]);
  CHECK(m.retired == 0);
  CHECK(m.mp_resolved == 0);
  CHECK(j["runs"][0]["label"] == "n_mpp_s1");
  CHECK(fs::exists(dir / "out" / "n_mpp_s1" / "events.ndjson"));
  CHECK(fs::exists(dir / "out" / "n_mpp_s1" / "per_branch.csv"));
}

TEST_CASE("run across seeds and policies, then compare and audit") {
  const fs::path dir = scratch("runs");
  const std::string model = (dir / "h.json").string();
  REQUIRE(cli({"gen", "hammock", "--out", model}).code == kExitOk);
  for (const char* pol : {"mpp", "mpp_max"}) {
    const Result r = cli({"run", "--model", model, "--seed", "1,2", "--policy", pol, "--budget", "20000", "--format",
                          "csv", "--out", (dir / pol).string()});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.rfind(kCsvHeader, 0) == 0);
    CHECK(r.out.find("\namean,") != std::string::npos);
    CHECK(fs::exists(dir / pol / "summary.csv"));
  }
  const Result c = cli({"compare", (dir / "mpp").string(), (dir / "mpp_max").string(), "--format", "csv"});
  REQUIRE(c.code == kExitOk);
  CHECK(c.out.find("h_s1,") != std::string::npos);
  CHECK(c.out.find("h_s2,") != std::string::npos);
  CHECK(c.out.find("amean,") != std::string::npos);

  const Result a = cli({"audit", (dir / "mpp").string(), (dir / "mpp_max").string()});
  CHECK(a.code == kExitOk);
  CHECK(a.out.find("0 violations") != std::string::npos);
}

TEST_CASE("audit fails on a tampered event log") {
  const fs::path dir = scratch("tamper");
  const std::string model = (dir / "h.json").string();
  REQUIRE(cli({"gen", "hammock", "--out", model}).code == kExitOk);
  REQUIRE(cli({"run", "--model", model, "--budget", "20000", "--out", (dir / "o").string()}).code == kExitOk);
  const fs::path ev = dir / "o" / "h_mpp_s1" / "events.ndjson";
  std::string text = slurp(ev);
  const auto pos = text.find("\"verdict\":\"correct\"");
  REQUIRE(pos != std::string::npos);
  // Point that resolution at the branch itself.
  const auto line_start = text.rfind('\n', pos) + 1;
  const auto mpc = text.find("\"merge_pc\":", line_start);
  const auto mend = text.find(',', mpc);
  const auto pcpos = text.find("\"pc\":", line_start);
  const auto pcend = text.find(',', pcpos);
  const std::string pc = text.substr(pcpos + 5, pcend - pcpos - 5);
  text.replace(mpc, mend - mpc, "\"merge_pc\":" + pc);
  write(ev, text);
  CHECK(cli({"audit", (dir / "o").string()}).code == kExitAudit);
}

TEST_CASE("flags may not duplicate config keys") {
  const fs::path dir = scratch("dup");
  const std::string model = (dir / "h.json").string();
  REQUIRE(cli({"gen", "hammock", "--out", model}).code == kExitOk);
  write(dir / "cfg.json", R"({"seed": 4, "pipeline": {"budget": 1000}})");
  const std::string cfg = (dir / "cfg.json").string();
  const std::string out = (dir / "o").string();
  CHECK(cli({"run", "--model", model, "--config", cfg, "--seed", "5", "--out", out}).code == kExitUsage);
  CHECK(cli({"run", "--model", model, "--config", cfg, "--budget", "5", "--out", out}).code == kExitUsage);
  CHECK(cli({"run", "--model", model, "--config", cfg, "--out", out}).code == kExitOk);
  CHECK(fs::exists(dir / "o" / "h_mpp_s4"));
}

TEST_CASE("invalid config and model files are validation errors") {
  const fs::path dir = scratch("invalid");
  const std::string model = (dir / "h.json").string();
  REQUIRE(cli({"gen", "hammock", "--out", model}).code == kExitOk);
  write(dir / "bad.json", R"({"pipeline": {"rob_sise": 4}})");
  const Result r = cli({"run", "--model", model, "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == kExitInvalid);
  CHECK(r.err.find("rob_sise") != std::string::npos);
  write(dir / "broken.json", "{ not json");
  CHECK(cli({"run", "--model", (dir / "broken.json").string(), "--out", (dir / "o").string()}).code == kExitInvalid);
  CHECK(cli({"run", "--model", (dir / "missing.json").string(), "--out", (dir / "o").string()}).code == kExitInvalid);
  CHECK(cli({"run", "--model", model, "--policy", "oracle", "--out", (dir / "o").string()}).code == kExitInvalid);
  CHECK(cli({"run", "--model", model}).code == kExitUsage);
  CHECK(cli({"audit", (dir / "nowhere").string()}).code == kExitInvalid);
}

TEST_CASE("experiment spec file with relative paths") {
  const fs::path dir = scratch("spec");
  REQUIRE(cli({"gen", "loop", "--out", (dir / "l.json").string()}).code == kExitOk);
  write(dir / "c.json", R"({"pipeline": {"budget": 5000}})");
  write(dir / "x.json", R"({"runs": [{"model": "l.json", "config": "c.json", "seeds": [1, 2], "policy": "mpp_max"}],
                            "out": "res", "format": "csv"})");
  const Result r = cli({"run", "--spec", (dir / "x.json").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(dir / "res" / "l_mpp_max_s1" / "report.csv"));
  CHECK(fs::exists(dir / "res" / "l_mpp_max_s2" / "metrics.json"));
  CHECK(cli({"run", "--spec", (dir / "x.json").string(), "--format", "json"}).code == kExitUsage);
  CHECK(cli({"run", "--spec", (dir / "x.json").string(), "--seed", "3"}).code == kExitUsage);
}

TEST_CASE("run output is byte-identical across executions") {
  const fs::path dir = scratch("det");
  const std::string model = (dir / "r.json").string();
  REQUIRE(cli({"gen", "random", "--seed", "17", "--out", model}).code == kExitOk);
  for (const char* o : {"a", "b"})
    REQUIRE(cli({"run", "--model", model, "--seed", "1,2,3", "--budget", "10000", "--out", (dir / o).string()}).code ==
            kExitOk);
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    if (e.is_directory()) {
      for (const char* f : {"events.ndjson", "report.txt", "metrics.json", "run.json"})
        CHECK(slurp(e.path() / f) == slurp(dir / "b" / e.path().filename() / f));
    } else {
      CHECK(slurp(e.path()) == slurp(dir / "b" / e.path().filename()));
    }
  }
}

TEST_CASE("thread limit honours the environment") {
  ::setenv("RECONVERGE_THREADS", "3", 1);
  CHECK(run_thread_limit() == 3);
  ::setenv("RECONVERGE_THREADS", "zero", 1);
  CHECK(run_thread_limit() >= 1);
  ::unsetenv("RECONVERGE_THREADS");
}
