#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nlslide/cli.hpp"
#include "nlslide/config.hpp"
#include "nlslide/errors.hpp"
#include "nlslide/output.hpp"

using namespace nlslide;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = std::string(NLSLIDE_SOURCE_DIR) + "/configs/";

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nlslide");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nlslide_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

const char* kPlanar = R"(
[system]
variables = x, y
h = "y"   # switching surface
plus = "1", "-1"
minus = "0", "1"
[scan]
lo = -1
hi = 1
step = 0.5
[integrate]
p0 = 0, 1
T = 3
eps = 1e-2, 1e-3, 1e-4
branch = 1
)";

}  // namespace

TEST_CASE("config parsing builds the system and grids") {
  const auto cfg = parse_config(kPlanar);
  CHECK(cfg.system().dim() == 2);
  CHECK(cfg.system().zero_correction());
  REQUIRE(cfg.scan.has_value());
  CHECK(cfg.scan->size() == 5);
  REQUIRE(cfg.slow.has_value());  // defaults to the scan grid
  CHECK(cfg.eps.size() == 3);
  CHECK(cfg.policy.kind == BranchPolicy::Kind::Fixed);
  CHECK(cfg.policy.index == 1);
  CHECK(cfg.hash.size() == 16);
  CHECK(cfg.hash == hex64(fnv1a64(kPlanar)));
}

TEST_CASE("config validation lists every problem") {
  const char* text = R"(
[system]
variables = x, y
h = "y"
plus = "1", "-1", "2"
minus = "0", "q"
colour = "red"
[scan]
lo = -1
hi = oops
step = 0.5
[mystery]
a = 1
[integrate]
branch = sideways
)";
  try {
    parse_config(text, "bad.cfg");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad.cfg") == 0);
    CHECK(msg.find("unknown section [mystery]") != std::string::npos);
    CHECK(msg.find("plus: expected 2 components") != std::string::npos);
    CHECK(msg.find("unbound variable 'q'") != std::string::npos);
    CHECK(msg.find("colour") != std::string::npos);
    CHECK(msg.find("not a number: 'oops'") != std::string::npos);
    CHECK(msg.find("branch") != std::string::npos);
    CHECK(msg.find("6 problems") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("[system]\nvariables = x\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("key = 1\n"), ConfigError);
  // correction must vanish at lambda = +-1
  CHECK_THROWS_WITH_AS(parse_config("[system]\nvariables = x, y\nh = \"y\"\nplus = \"1\", \"1\"\nminus = \"1\", \"1\"\n"
                                    "correction = \"lambda\", \"0\"\n"),
                       doctest::Contains("[system]: model"), ConfigError);
}

TEST_CASE("number lists") {
  CHECK(parse_number_list("1, -2.5,3e-1") == std::vector<double>{1, -2.5, 0.3});
  CHECK_THROWS_AS(parse_number_list("1,,2"), ConfigError);
  CHECK_THROWS_AS(parse_number_list("1, x"), ConfigError);
}

TEST_CASE("exit codes and error lines") {
  auto r = cli({"classify", "missing.cfg"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("config: file not found", 0) == 0);
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"simulate", kConfigs + "pwconst.cfg", "--mode", "sideways"}).code == 2);
  r = cli({"catalog", "run", "nope"});
  CHECK(r.code == 1);
  CHECK(r.err == "catalog: unknown fixture 'nope'\n");
  r = cli({"slide", kConfigs + "ex1.cfg", "--at", "0,1"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("manifold:", 0) == 0);
  r = cli({"slide", kConfigs + "ex1.cfg", "--at", "0,0", "--branch", "5"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("branch:", 0) == 0);
  CHECK(cli({"--version"}).code == 0);
}

TEST_CASE("slide reports roots and fields") {
  auto r = cli({"slide", kConfigs + "ex10.cfg", "--at", "0,0,0"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("nl_sliding, 1 branch\n") != std::string::npos);
  CHECK(r.out.find("branch 0: lambda = 0 field = (0, 0.5, 0)") != std::string::npos);
  r = cli({"slide", kConfigs + "ex1.cfg", "--at", "0,0", "--branch", "1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("branch 1: lambda = 0.5 field = (-0.5, 0)") != std::string::npos);
  CHECK(r.out.find("branch 0:") == std::string::npos);
}

TEST_CASE("catalog commands") {
  auto r = cli({"catalog", "list"});
  CHECK(r.code == 0);
  CHECK(r.out.find("ex11b") != std::string::npos);
  r = cli({"catalog", "run", "ex1"});
  CHECK(r.code == 0);
  CHECK(r.out.find("result: PASS") != std::string::npos);
  CHECK(r.out.find("boundaries") != std::string::npos);
  r = cli({"catalog", "run", "ex4", "--json"});
  CHECK(r.code == 0);
  CHECK(r.out.find("\"id\": \"ex4\"") != std::string::npos);
}

TEST_CASE("csv formatting and atomic writes") {
  CHECK(csv_number(0.1) == "0.10000000000000001");
  CHECK(csv_number(-2) == "-2");
  const fs::path dir = scratch("atomic");
  write_file_atomic((dir / "a.csv").string(), "x\n");
  write_file_atomic((dir / "a.csv").string(), "y\n");
  CHECK(slurp(dir / "a.csv") == "y\n");
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.is_regular_file() ? 1 : 0;
  CHECK(files == 1);
  fs::remove_all(dir);
}

TEST_CASE("commands write deterministic artifacts") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const std::string cfg = kConfigs + "ex1.cfg";
  for (const auto& d : {a, b}) {
    REQUIRE(cli({"classify", cfg, "--out", d.string()}).code == 0);
    REQUIRE(cli({"slowfast", cfg, "--out", d.string()}).code == 0);
    REQUIRE(cli({"simulate", cfg, "--out", d.string()}).code == 0);
    REQUIRE(cli({"converge", cfg, "--out", d.string()}).code == 0);
    REQUIRE(cli({"portrait", cfg, "--out", d.string()}).code == 0);
  }
  for (const char* name : {"scan.csv", "boundaries.csv", "slow_manifold.csv", "equilibria.csv", "trajectory.csv",
                           "events.csv", "convergence.csv", "portrait_trajectories.csv", "portrait.svg"}) {
    INFO(name);
    const std::string x = slurp(a / name);
    CHECK(!x.empty());
    CHECK(x == slurp(b / name));
  }
  const std::string scan = slurp(a / "scan.csv");
  CHECK(scan.rfind("# nlslide ", 0) == 0);
  CHECK(scan.find("\nx1,class,nl_class,n_branches,lambda_0,lambda_1\n") != std::string::npos);
  CHECK(slurp(a / "trajectory.csv").find("\nt,x1,x2,regime,branch\n") != std::string::npos);
  CHECK(slurp(a / "events.csv").find("\nt,kind,x1,x2\n") != std::string::npos);
  CHECK(slurp(a / "slow_manifold.csv").find("\ntheta,lambda,x1,hyperbolic,dalpha_dtheta") != std::string::npos);
  CHECK(slurp(a / "equilibria.csv").find("\ntheta,x1,eig_real_1,eig_imag_1,type") != std::string::npos);
  const std::string svg = slurp(a / "portrait.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("sliding") != std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("portrait rejects spatial systems") {
  const auto r = cli({"portrait", kConfigs + "ex10.cfg", "--out", scratch("p3").string()});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("model:", 0) == 0);
}
