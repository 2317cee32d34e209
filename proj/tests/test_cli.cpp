#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "glance/cli.hpp"

using namespace glance;
using namespace glance::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("glance_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = -1;
  std::string out, err;
};

// runs the installed binary with the output directory set to `dir`
Run invoke(const fs::path& dir, const std::string& args) {
  const fs::path o = dir.string() + ".stdout", e = dir.string() + ".stderr";
  const std::string cmd = std::string(GLANCE_CLI_PATH) + " -o " + dir.string() + " " + args + " > " + o.string() +
                          " 2> " + e.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

RunConfig parse(const std::string& text) {
  RunConfig c;
  read_config(json::parse(text), c);
  return c;
}

template <class Fn>
std::string config_error_of(Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration schema

TEST(Config, DefaultsValidateForEveryCommand) {
  for (const auto& name : command_names()) {
    RunConfig c;
    c.command = name;
    EXPECT_NO_THROW(validate(c)) << name;
  }
}

TEST(Config, UnknownFieldNamesItsPath) {
  EXPECT_EQ(config_error_of([] { parse(R"({"hamiltonian": {"nam": "free"}})"); }),
            "config.hamiltonian.nam: unknown field");
  EXPECT_EQ(config_error_of([] { parse(R"({"colour": 1})"); }), "config.colour: unknown field");
}

TEST(Config, TypeErrorsNameTheElement) {
  EXPECT_EQ(config_error_of([] { parse(R"({"density": {"grid": [5, "a", 6]}})"); }),
            "config.density.grid[1]: expected an integer");
  EXPECT_EQ(config_error_of([] { parse(R"({"E": 1.0})"); }), "config.E: expected an array");
  EXPECT_EQ(config_error_of([] { parse(R"({"plots": "yes"})"); }), "config.plots: expected a boolean");
  EXPECT_EQ(config_error_of([] { parse(R"({"seed": -1})"); }), "config.seed: expected a non-negative integer");
}

TEST(Config, SchemaVersionIsChecked) {
  EXPECT_NE(config_error_of([] { parse(R"({"schema": "glance.config/0"})"); }).find("config.schema"), std::string::npos);
  EXPECT_NO_THROW(parse(R"({"schema": "glance.config/1"})"));
}

TEST(Config, ToleranceAndShapeChecks) {
  RunConfig c;
  c.command = "flow";
  c.ode_tol = 0.0;
  EXPECT_EQ(config_error_of([&] { validate(c); }), "tolerances.ode: must be positive");
  c = RunConfig{};
  c.command = "density";
  c.density.grid = {5, 8};
  EXPECT_EQ(config_error_of([&] { validate(c); }), "density.grid: expected 3 entries");
  c = RunConfig{};
  c.command = "walk";
  EXPECT_EQ(config_error_of([&] { validate(c); }), "command: unknown command 'walk'");
  c = RunConfig{};
  c.command = "flow";
  c.h = {0.05, -1.0};
  EXPECT_EQ(config_error_of([&] { validate(c); }), "h[1]: must be positive");
}

TEST(Config, RhoTableAndExpressionAgree) {
  const auto vars = spatial_variable_names(2);
  const Polynomial a = polynomial_from_json("1 + x^2 + 3*x*y", vars, "rho");
  const Polynomial b = polynomial_from_json(json::parse(R"([
      {"exponent": [0, 0], "coefficient": 1},
      {"exponent": [2, 0], "coefficient": 1},
      {"exponent": [1, 1], "coefficient": 3}])"),
                                            vars, "rho");
  EXPECT_EQ(a.terms(), b.terms());
  EXPECT_EQ(polynomial_from_json(polynomial_to_json(a), vars, "rho").terms(), a.terms());
  EXPECT_EQ(config_error_of([&] { polynomial_from_json(json::parse(R"([{"exponent": [1], "coefficient": 1}])"), vars, "rho"); }),
            "rho[0].exponent: expected 2 entries");
  EXPECT_NE(config_error_of([&] { polynomial_from_json("1 + q", vars, "rho"); }).find("rho: "), std::string::npos);
}

TEST(Config, JsonRoundTrip) {
  RunConfig c;
  c.command = "transition";
  c.E = {0.9, 1.1};
  c.transition.samples = 90;
  c.rho = json::parse(R"([{"exponent": [0, 0], "coefficient": 2}])");
  RunConfig d;
  read_config(to_json(c), d);
  EXPECT_EQ(to_json(c), to_json(d));
}

// ---------------------------------------------------------------------------
// Plumbing

TEST(Plumbing, Sha256KnownDigests) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Plumbing, ThreadCountFromEnvironment) {
  ::setenv("GLANCE_THREADS", "3", 1);
  EXPECT_EQ(thread_count(), 3);
  ::setenv("GLANCE_THREADS", "zero", 1);
  EXPECT_THROW(thread_count(), ConfigError);
  ::setenv("GLANCE_THREADS", "0", 1);
  EXPECT_THROW(thread_count(), ConfigError);
  ::unsetenv("GLANCE_THREADS");
  EXPECT_GE(thread_count(), 1);
}

TEST(Plumbing, ParallelForVisitsEveryIndexOnce) {
  ::setenv("GLANCE_THREADS", "4", 1);
  std::vector<std::atomic<int>> hits(257);
  parallel_for(hits.size(), [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(64, [](std::size_t i) {
                 if (i == 17) throw CausticError("boom");
               }),
               CausticError);
  ::unsetenv("GLANCE_THREADS");
}

TEST(Plumbing, ErrorKinds) {
  EXPECT_EQ(error_kind(CausticError("x")), "caustic");
  EXPECT_EQ(error_kind(NotGlancingError("x")), "not-glancing");
  EXPECT_EQ(error_kind(InvariantFailure("x")), "invariant");
  EXPECT_EQ(error_kind(IntegrationError("x", 0.5)), "integration");
  EXPECT_EQ(error_kind(ValidityDomainError("x")), "validity-domain");
}

TEST(Plumbing, InProcessRunWritesManifest) {
  RunConfig c;
  c.command = "classify";
  c.output_dir = scratch("inproc").string();
  const auto r = run(c);
  EXPECT_EQ(r.summary["case"], 7);
  const json m = json::parse(slurp(fs::path(c.output_dir) / "manifest.json"));
  EXPECT_EQ(m["config_sha256"], sha256_hex(to_json(c).dump()));
  EXPECT_EQ(m["files"].size(), 1u);
}

// ---------------------------------------------------------------------------
// Binary

TEST(Binary, ClassifyCaseOneAtATwo) {
  const auto r = invoke(scratch("classify"), "classify --case I --a 2");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("A_z = ((2,4),(4,8))"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("B_z = (-4,2)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("case 7"), std::string::npos) << r.out;
}

TEST(Binary, ClassifyJsonAndUserPolynomials) {
  const auto r = invoke(scratch("classify_json"), "--json classify --f1 'p1 - 2*x1 + x2' --f2 'p2 + x1'");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["case"], 7);
  EXPECT_EQ(j["B"], json::parse("[-4.0, 2.0]"));
}

TEST(Binary, CaseFourIsANumericFailure) {
  const auto r = invoke(scratch("case4"), "--json classify --case IV --alpha 1 --beta 0.5 --gamma 2");
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(json::parse(r.out)["invariant"], "not-glancing");
}

TEST(Binary, TransitionRegimesAndFigureFiles) {
  const fs::path d = scratch("transition");
  const auto r = invoke(d, "transition --hamiltonian conformal2 --rho '1+x^2+y^2' --E 0.9,1.0,1.1");
  ASSERT_EQ(r.code, 0) << r.err;
  const json s = json::parse(slurp(d / "transition.json"));
  ASSERT_EQ(s["samples"].size(), 3u);
  EXPECT_EQ(s["samples"][0]["regime"], "infinity-curve");
  EXPECT_EQ(s["samples"][1]["regime"], "degenerate-trajectory");
  EXPECT_EQ(s["samples"][2]["regime"], "empty");
  EXPECT_EQ(s["samples"][0]["self_intersections"], 1);
  EXPECT_EQ(s["samples"][0]["cusps"], 2);
  for (const char* f : {"fig1_eps0.9.csv", "fig2_eps0.9.csv", "fig1_eps1.csv", "fig2_eps1.1.csv", "transition.gp"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  EXPECT_EQ(slurp(d / "fig1_eps0.9.csv").rfind("y,py\n", 0), 0u);
  EXPECT_NE(slurp(d / "fig1_eps1.1.csv").find("# regime: empty"), std::string::npos);
}

TEST(Binary, ManifestListsEveryFileWithChecksum) {
  const fs::path d = scratch("manifest");
  ASSERT_EQ(invoke(d, "density --grid 2,3,2").code, 0);
  const json m = json::parse(slurp(d / "manifest.json"));
  std::size_t listed = 0;
  for (const auto& f : m["files"]) {
    EXPECT_EQ(f["sha256"], sha256_hex(slurp(d / f["path"].get<std::string>()))) << f["path"];
    ++listed;
  }
  std::size_t on_disk = 0;
  for (const auto& e : fs::directory_iterator(d))
    if (e.path().filename() != "manifest.json") ++on_disk;
  EXPECT_EQ(listed, on_disk);
  EXPECT_EQ(m["config"]["density"]["grid"], json::parse("[2, 3, 2]"));
  EXPECT_TRUE(m["versions"].contains("eigen"));
}

TEST(Binary, DensityOutputIsDeterministic) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(invoke(a, "--seed 7 density --grid 3,4,3").code, 0);
  ::setenv("GLANCE_THREADS", "1", 1);
  ASSERT_EQ(invoke(b, "--seed 7 density --grid 3,4,3").code, 0);
  ::unsetenv("GLANCE_THREADS");
  EXPECT_EQ(slurp(a / "density.csv"), slurp(b / "density.csv"));
  const json ma = json::parse(slurp(a / "manifest.json")), mb = json::parse(slurp(b / "manifest.json"));
  EXPECT_EQ(ma["files"], mb["files"]);
  EXPECT_EQ(slurp(a / "density.csv").rfind("phi,psi,t,F,detPPpsi\n", 0), 0u);
}

TEST(Binary, ConfigFileWithFlagOverride) {
  const fs::path d = scratch("config");
  const fs::path cfg = d.string() + ".json";
  std::ofstream(cfg) << R"({"schema": "glance.config/1",
    "hamiltonian": {"name": "conformal2", "rho": [{"exponent": [0, 0], "coefficient": 1},
                                                  {"exponent": [2, 0], "coefficient": 1},
                                                  {"exponent": [0, 2], "coefficient": 1}]},
    "manifold": {"name": "plane_wave"}, "E": [0.95], "transition": {"samples": 120}})";
  const auto r = invoke(d, "--config " + cfg.string() + " --E 1.05 transition");
  ASSERT_EQ(r.code, 0) << r.err;
  const json s = json::parse(slurp(d / "transition.json"));
  ASSERT_EQ(s["samples"].size(), 1u);
  EXPECT_EQ(s["samples"][0]["regime"], "empty");
  EXPECT_EQ(json::parse(slurp(d / "manifest.json"))["config"]["transition"]["samples"], 120);
}

TEST(Binary, ConfigErrorsExitTwo) {
  const fs::path d = scratch("bad");
  EXPECT_EQ(invoke(d, "--hamiltonian bogus flow").code, 2);
  EXPECT_EQ(invoke(d, "--no-such-flag flow").code, 2);
  EXPECT_EQ(invoke(d, "").code, 2);
  const fs::path cfg = d.string() + ".json";
  std::ofstream(cfg) << R"({"flow": {"samples": "many"}})";
  const auto r = invoke(d, "--config " + cfg.string() + " flow");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("config.flow.samples: expected an integer"), std::string::npos) << r.err;
  EXPECT_EQ(invoke(d, "--hamiltonian conformal1 evaluate --compare-exact").code, 2);
}

TEST(Binary, FlowConservesEnergy) {
  const fs::path d = scratch("flow");
  const auto r = invoke(d, "--json --hamiltonian conformal2 flow --x 0.5,0 --p 0,1 --t 2 --samples 11");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LT(json::parse(r.out)["energy_drift"].get<double>(), 1e-8);
  EXPECT_EQ(slurp(d / "flow.csv").rfind("t,x1,x2,p1,p2,H\n", 0), 0u);
}

TEST(Binary, GlancingSearchOnTheShiftedExample) {
  const auto r = invoke(scratch("glancing"), "--json glancing --x0 0.8,0 --phi-min -1.5 --phi-max 1.5");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  int maxima = 0;
  for (const auto& p : j["points"])
    if (p["kind"] == "max") {
      ++maxima;
      EXPECT_NEAR(p["E0"].get<double>(), 2.0, 1e-12);
    }
  EXPECT_EQ(maxima, 2);
}

TEST(Binary, EvaluateColumnsAndCaustic) {
  const fs::path d = scratch("evaluate");
  const auto r = invoke(d, "--hamiltonian free --h 0.05 evaluate --x1 0.8,0.8,1 --x2 0.3,0.3,1 --compare-exact");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(d / "evaluate.csv");
  EXPECT_EQ(csv.rfind("x1,x2,Re(u),Im(u),abs(u),u_exact,abs_diff,pde_residual\n", 0), 0u);
  // the x-projection of the cylinder is singular over the origin
  const auto c = invoke(scratch("caustic"), "--json --hamiltonian free evaluate --x1 0,0,1 --x2 0,0,1");
  EXPECT_EQ(c.code, 3);
  EXPECT_EQ(json::parse(c.out)["invariant"], "caustic");
}

TEST(Binary, VerifyAllPasses) {
  const fs::path d = scratch("verify");
  const auto r = invoke(d, "verify-all");
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  int pass = 0;
  std::istringstream lines(r.out);
  for (std::string l; std::getline(lines, l);)
    if (l.rfind("PASS", 0) == 0) ++pass;
  EXPECT_EQ(pass, 10);
  EXPECT_EQ(json::parse(slurp(d / "verify_all.json"))["passed"], 10);
}
