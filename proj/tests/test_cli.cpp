#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "foldlab/cli.hpp"

using namespace foldlab;
using namespace foldlab::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("foldlab_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

struct Proc {
  int code = -1;
  std::string out;
};

/// Runs the foldlab binary with stdout and stderr captured.
Proc invoke(const std::string& args) {
  const std::string cmd = std::string(FOLDLAB_BIN) + " " + args + " 2>&1";
  Proc p;
  FILE* f = popen(cmd.c_str(), "r");
  REQUIRE(f != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, f)) p.out += buf;
  const int st = pclose(f);
  p.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& body) {
  const fs::path p = dir / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_CASE("list output matches the snapshot") {
  const std::string golden = slurp(fs::path(FOLDLAB_TEST_DATA) / "list.golden");
  CHECK(list_experiments() == golden);
  const Proc p = invoke("list");
  CHECK(p.code == 0);
  CHECK(p.out == golden);
  CHECK(p.out.find("key-estimate  Theorem 3.1") != std::string::npos);
  CHECK(p.out.find("rate-sweep    Prop. 2.1 / 2.3") != std::string::npos);
  CHECK(experiments().size() == 8);
}

TEST_CASE("number formatting and config hashing") {
  CHECK(format_number(1.0 / 3.0) == "0.333333333333");
  CHECK(format_number(-2.0) == "-2");
  CHECK(format_number(1e-20) == "1e-20");
  const json a = json::parse(R"({"experiment":"det-verify","betas":[1,2]})");
  const json b = json::parse(R"({"betas":[1,2],"experiment":"det-verify"})");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  CHECK(config_hash(a) != config_hash(json::parse(R"({"experiment":"det-verify","betas":[1,3]})")));
}

TEST_CASE("checks re-derive pass from their numbers") {
  CHECK(make_check("a", 1.04, 1.0, 0.05).pass);
  CHECK_FALSE(make_check("a", 1.06, 1.0, 0.05).pass);
  CHECK(make_check("b", -0.2, -1.0 / 6, 0.1, "le").pass);
  CHECK_FALSE(make_check("b", 0.0, -1.0 / 6, 0.1, "le").pass);
  CHECK(make_check("c", 0.5, 1.0, 0.6, "ge").pass);
  CHECK(make_check("d", 1.0, 1.0, 0.0, "eq").pass);
  CHECK_THROWS_AS(make_check("e", 1.0, 1.0, 0.0, "lt"), InvalidArgument);
}

TEST_CASE("det-verify defaults: 100 comparisons, deterministic CSV") {
  const json cfg = json::parse(R"({"experiment":"det-verify"})");
  const Report r1 = run(cfg, 1), r2 = run(cfg, 1), r3 = run(cfg, 2);
  CHECK(r1.pass());
  CHECK(r1.table.rows.size() == 100);
  CHECK(to_csv(r1) == to_csv(r2));
  CHECK(to_csv(r1) != to_csv(r3));
  const std::string csv = to_csv(r1);
  CHECK(csv.rfind("# foldlab-csv schema=1 experiment=det-verify", 0) == 0);
  std::istringstream is(csv);
  std::string line;
  int rows = 0;
  std::getline(is, line);
  std::getline(is, line);
  CHECK(line.rfind("config_hash,seed,", 0) == 0);
  while (std::getline(is, line)) {
    ++rows;
    CHECK(line.rfind(r1.config_hash + ",1,", 0) == 0);
  }
  CHECK(rows == 100);
  for (const Check& c : r1.checks) CHECK(make_check(c.name, c.value, c.expected, c.tolerance, c.comparator).pass == c.pass);
  const json s = to_summary(r1);
  for (const char* k : {"experiment", "config_hash", "seed", "results", "pass"}) CHECK(s.contains(k));
  CHECK(s["results"].is_array());
  CHECK(s["pass"] == true);
}

TEST_CASE("config validation happens before compute") {
  CHECK_THROWS_AS(run(json::parse(R"({"experiment":"nope"})"), 1), ConfigError);
  CHECK_THROWS_AS(run(json::parse(R"({"betas":[1]})"), 1), ConfigError);
  CHECK_THROWS_AS(run(json::parse(R"({"experiment":"det-verify","typo":1})"), 1), ConfigError);
  CHECK_THROWS_AS(run(json::parse(R"({"experiment":"det-verify","samples":"many"})"), 1), ConfigError);
  CHECK_THROWS_AS(run(json::parse(R"({"experiment":"key-estimate","delta":0.3})"), 1), ConfigError);
  CHECK_THROWS_AS(run(json::parse(R"({"experiment":"regime-check","couplings":[1.0]})"), 1), ConfigError);
  CHECK_THROWS_AS(run(json::parse(R"({"experiment":"rate-sweep","family":"cond-ii","lambda_exp":[3,4]})"), 1), ConfigError);
  try {
    run(json::parse(R"({"experiment":"key-estimate","beta":-1})"), 1);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    CHECK(m.find("beta > 0") != std::string::npos);
    CHECK(m.find("beta != -1") != std::string::npos);
  }
}

TEST_CASE("exit codes and report files") {
  const fs::path d = scratch("exit");
  const auto bad = write_config(d, "bad.json", R"({"experiment":"fold-check","beta":-1})");
  Proc p = invoke("run " + bad.string() + " --out " + (d / "o").string());
  CHECK(p.code == 1);
  CHECK(p.out.find("beta > 0") != std::string::npos);
  CHECK(p.out.find("beta != -1") != std::string::npos);
  CHECK_FALSE(fs::exists(d / "o" / "fold-check.csv"));

  CHECK(invoke("").code == 1);
  CHECK(invoke("run").code == 1);
  CHECK(invoke("run " + (d / "missing.json").string()).code == 1);
  CHECK(invoke("run " + write_config(d, "junk.json", "{not json").string()).code == 1);
  CHECK(invoke("frobnicate").code == 1);

  const auto flat = write_config(d, "flat.json", R"({"experiment":"cotlar","gains":{"0":1,"1":1,"2":1}})");
  p = invoke("run " + flat.string() + " --out " + (d / "o").string());
  CHECK(p.code == 2);
  CHECK(fs::exists(d / "o" / "cotlar.summary.json"));
  CHECK(json::parse(slurp(d / "o" / "cotlar.summary.json"))["pass"] == false);

  const auto geo = write_config(d, "geo.json", R"({"experiment":"cotlar","gains":{"0":1,"1":0.25,"2":0.0625}})");
  CHECK(invoke("run " + geo.string() + " --out " + (d / "o").string()).code == 0);
}

TEST_CASE("flags override config fields; CSV independent of threads and output dir") {
  const fs::path d = scratch("flags");
  const auto cfg = write_config(d, "dv.json", R"({"experiment":"det-verify","seed":5,"out":"ignored","threads":1})");
  CHECK(invoke("run " + cfg.string() + " --out " + (d / "a").string() + " --threads 1").code == 0);
  CHECK(invoke("run " + cfg.string() + " --out " + (d / "b").string() + " --threads 3").code == 0);
  const std::string a = slurp(d / "a" / "det-verify.csv"), b = slurp(d / "b" / "det-verify.csv");
  CHECK(!a.empty());
  CHECK(a == b);
  CHECK(json::parse(slurp(d / "a" / "det-verify.summary.json"))["seed"] == 5);

  CHECK(invoke("run " + cfg.string() + " --out " + (d / "c").string() + " --seed 9").code == 0);
  CHECK(json::parse(slurp(d / "c" / "det-verify.summary.json"))["seed"] == 9);
  CHECK(slurp(d / "c" / "det-verify.csv") != a);

  CHECK(invoke("run " + cfg.string() + " --out " + (d / "e").string() + " --set samples=3 --set 'betas=[0.5,2]'").code == 0);
  const json s = json::parse(slurp(d / "e" / "det-verify.summary.json"));
  CHECK(s["measured"]["comparisons"] == 12);
  CHECK(invoke("run " + cfg.string() + " --set beta_typo=1").code == 1);
  CHECK(invoke("run " + cfg.string() + " --threads 0").code == 1);
}

TEST_CASE("curve-fold and fold-check through the runner") {
  Report r = run(json::parse(R"({"experiment":"curve-fold"})"), 1);
  CHECK(r.pass());
  CHECK(r.results["x0"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  r = run(json::parse(R"({"experiment":"curve-fold","k":3,"expected_third":-24})"), 1);
  CHECK(r.pass());
  r = run(json::parse(R"({"experiment":"fold-check"})"), 1);
  CHECK(r.pass());
  CHECK(r.table.rows.size() == 2);
}

TEST_CASE("rate-sweep on the curve fold reports a slope near -1/3") {
  const Report r = run(json::parse(R"({"experiment":"rate-sweep","family":"curve"})"), 1);
  CHECK(r.pass());
  const json s = to_summary(r);
  CHECK(std::abs(s["measured"]["slope"].get<double>() + 1.0 / 3.0) < 0.05);
  bool found = false;
  for (const auto& c : s["results"])
    if (c["name"] == "slope") found = std::abs(c["value"].get<double>() + 1.0 / 3.0) < 0.05;
  CHECK(found);
}
