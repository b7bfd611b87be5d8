#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "smoothconv/config.hpp"
#include "smoothconv/suite.hpp"

using namespace smoothconv;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"({"experiments": [
  {"name": "tiny", "experiment": "maximal", "n": 2, "q": 2, "p": 2, "T": 1,
   "mesh_exponents": [4], "trajectories": 200, "seed": 5,
   "generator": {"type": "diagonal", "lambdas": [-1, 0]},
   "integrand": {"recipe": "constant", "matrix": [[1, 0], [0, 1]]}}
]})";

const char* kTwoKinds = R"({"experiments": [
  {"name": "tiny_max", "experiment": "maximal", "n": 1, "q": 3, "p": [1, 2], "T": 1,
   "mesh_exponents": [4], "trajectories": 200, "seed": 5,
   "generator": {"type": "zero"}, "integrand": {"matrix": [[1]]}, "gamma": {"samples": 2000}},
  {"name": "tiny_ito", "experiment": "ito_convergence", "n": 2, "q": 2, "p": 2, "T": 1,
   "mesh_exponents": [2, 4], "trajectories": 200, "quad_points": 9,
   "generator": {"type": "zero"}, "integrand": {"matrix": [[1, 0], [0, 1]]}},
  {"name": "tiny_lenglart", "experiment": "lenglart", "n": 2, "q": 2, "p": 2, "T": 1,
   "mesh_exponents": [5], "trajectories": 400, "r": [0.5],
   "generator": {"type": "diagonal", "lambdas": [-1, -0.5]}, "integrand": {"matrix": [[1, 0], [0, 1]]}}
]})";

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("smoothconv_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return (path / name).string();
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

int cli(const std::string& args) {
  const std::string cmd = std::string(SMOOTHCONV_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("minimal config parses") {
  const auto cs = parse_config_text(kMinimal, "cfg.json");
  REQUIRE(cs.size() == 1);
  CHECK(cs[0].name == "tiny");
  CHECK(cs[0].seed == 5);
  CHECK(cs[0].space.q() == 2.0);
  CHECK(cs[0].gamma.method == GammaMethod::exact2);
}

TEST_CASE("p lists expand into named configs with derived seeds") {
  const auto cs = parse_config_text(kTwoKinds, "cfg.json", 7);
  REQUIRE(cs.size() == 4);
  CHECK(cs[0].name == "tiny_max_p1");
  CHECK(cs[1].name == "tiny_max_p2");
  CHECK(cs[0].base_name == "tiny_max");
  CHECK(cs[2].seed == derive_seed(7, "tiny_ito"));
  CHECK(derive_seed(7, "tiny_ito") != derive_seed(8, "tiny_ito"));
  CHECK(parse_config_text(kTwoKinds, "cfg.json", 7)[2].seed == cs[2].seed);
}

TEST_CASE("config errors name the offending field") {
  std::string bad = kMinimal;
  SUBCASE("q below 2") {
    bad.replace(bad.find("\"q\": 2"), 6, "\"q\": 1.5");
    const auto e = error_of(bad);
    CHECK(e.find("experiments[0].q") != std::string::npos);
    CHECK(e.find("2-smooth") != std::string::npos);
  }
  SUBCASE("unknown field") {
    bad.replace(bad.find("\"T\": 1"), 6, "\"T\": 1, \"colour\": 3");
    CHECK(error_of(bad).find("colour") != std::string::npos);
  }
  SUBCASE("malformed JSON gives line and column") {
    bad.replace(bad.find("\"p\": 2,"), 7, "\"p\": 2");
    CHECK(error_of(bad).find("cfg.json:2:") != std::string::npos);
  }
  SUBCASE("uncertifiable generator") {
    bad.replace(bad.find("{\"type\": \"diagonal\", \"lambdas\": [-1, 0]}"), 40,
                "{\"type\": \"dense\", \"matrix\": [[0, 1], [0, 0]]}");
    CHECK(error_of(bad).find("uncertifiable generator") != std::string::npos);
  }
  SUBCASE("duplicate names") {
    const std::string text = kMinimal;
    const auto first = text.find("{\"name\"");
    const std::string entry = text.substr(first, text.rfind(']') - first);
    CHECK(error_of("{\"experiments\": [" + entry + "," + entry + "]}").find("duplicate") != std::string::npos);
  }
  SUBCASE("holdout without group") {
    bad.replace(bad.find("\"T\": 1"), 6, "\"T\": 1, \"role\": \"holdout\"");
    CHECK(error_of(bad).find("group") != std::string::npos);
  }
}

TEST_CASE("suite runs, refuses to overwrite, and honours force") {
  TempDir dir;
  const auto cfg = dir.write("c.json", kMinimal);
  RunManifest m;
  m.config_paths = {cfg};
  m.out_dir = (dir.path / "run").string();
  std::ostringstream log;
  CHECK(run_suite(m, log) == 0);
  CHECK(fs::exists(dir.path / "run" / "COMPLETE"));
  CHECK_FALSE(fs::exists(dir.path / "run.partial"));
  const auto results = slurp(dir.path / "run" / "results.csv");
  CHECK(results.substr(0, results.find('\n')) == "experiment,config,group,role,q,p,T,seed,statistic,param,value,se");
  const auto summary = nlohmann::json::parse(slurp(dir.path / "run" / "summary.json"));
  CHECK(summary["complete"] == true);
  CHECK(summary["all_passed"] == true);
  CHECK_THROWS_AS(run_suite(m, log), RunDirectoryError);
  m.force = true;
  CHECK(run_suite(m, log) == 0);
}

TEST_CASE("selectors") {
  TempDir dir;
  const auto cfg = dir.write("c.json", kTwoKinds);
  RunManifest m;
  m.config_paths = {cfg};
  m.out_dir = (dir.path / "run").string();
  std::ostringstream log;
  SUBCASE("empty list runs nothing") {
    m.selectors = std::vector<std::string>{};
    CHECK(run_suite(m, log) == 0);
    CHECK_FALSE(fs::exists(dir.path / "run"));
  }
  SUBCASE("unknown selector") {
    m.selectors = std::vector<std::string>{"bogus"};
    CHECK_THROWS_AS(run_suite(m, log), ConfigError);
  }
  SUBCASE("lenglart only") {
    m.selectors = std::vector<std::string>{"lenglart"};
    CHECK(run_suite(m, log) == 0);
    const auto text = slurp(dir.path / "run" / "summary.json");
    CHECK(text.find("factor at r=0.5 is 3") != std::string::npos);
    CHECK(text.find("tiny_ito") == std::string::npos);
  }
}

TEST_CASE("plot tables") {
  TempDir dir;
  CHECK_THROWS_AS(emit_plotdata(dir.path.string()), RunDirectoryError);
  const auto cfg = dir.write("c.json", kTwoKinds);
  RunManifest m;
  m.config_paths = {cfg};
  m.out_dir = (dir.path / "run").string();
  m.selectors = std::vector<std::string>{"maximal", "ito_convergence"};
  std::ostringstream log;
  REQUIRE(run_suite(m, log) == 0);
  const auto files = emit_plotdata(m.out_dir);
  CHECK(files.size() == 2);
  const auto ito = slurp(dir.path / "run" / "plot" / "ito_convergence.csv");
  CHECK(ito.rfind("config,statistic,param_name,param,value,se", 0) == 0);
  CHECK(ito.find("mesh_exponent") != std::string::npos);
  const auto maximal = slurp(dir.path / "run" / "plot" / "maximal.csv");
  CHECK(maximal.find("tiny_max_p2,c_hat,T,1,") != std::string::npos);
}

TEST_CASE("constants table") {
  const auto rows = constants_table({2.0, 3.0}, {2.0, 4.0}, 2, 2000, 3);
  CHECK(rows.size() == 4);
  CHECK(rows[0].K_hat == doctest::Approx(2.0).epsilon(1e-9));
  std::ostringstream out;
  write_constants_csv(rows, out);
  CHECK(out.str().rfind("q,p,K_hat,C_hat,seed,n_samples\n", 0) == 0);
}

TEST_CASE("command-line exit codes") {
  TempDir dir;
  const auto good = dir.write("good.json", kMinimal);
  std::string bad_text = kMinimal;
  bad_text.replace(bad_text.find("\"q\": 2"), 6, "\"q\": 1.5");
  const auto bad = dir.write("bad.json", bad_text);
  const auto out = (dir.path / "run").string();
  CHECK(cli("run " + good + " --out " + out + " --workers 2") == 0);
  CHECK(cli("run " + good + " --out " + out) == 2);
  CHECK(cli("run " + good + " --out " + out + " --force") == 0);
  CHECK(cli("plotdata " + out) == 0);
  CHECK(cli("run " + bad + " --out " + (dir.path / "bad_run").string()) == 2);
  CHECK(cli("plotdata " + (dir.path / "missing").string()) == 2);
  CHECK(cli("run " + good + " --out " + (dir.path / "sel").string() + " --select nonsense") == 2);
  CHECK(cli("constants --q 2,3 --p 2 --samples 500") == 0);
  CHECK(cli("frobnicate") != 0);
}
