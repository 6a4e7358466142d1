#include "dkg/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace dkg;
using namespace dkg::cli;
using nlohmann::json;

namespace {

const fs::path kConfigs = DKG_CONFIG_DIR;

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("dkg_cli_test_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

int run_binary(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(DKG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string config_error_field(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

json with(const std::string& kv) {
  json doc = json::object();
  apply_override(doc, kv);
  return doc;
}

std::string small_config() { return (kConfigs / "small.json").string(); }

}  // namespace

TEST(Config, DefaultsParseAndRoundTrip) {
  const RunConfig c = parse_config(json::object());
  EXPECT_EQ(c.n, 16);
  EXPECT_EQ(c.K, 2);
  EXPECT_EQ(c.sample_stride, 4u);
  const RunConfig d = parse_config(to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));
}

TEST(Config, ShippedPresetsParse) {
  for (const auto& e : fs::directory_iterator(kConfigs)) {
    if (e.path().extension() != ".json" || e.path().filename() == "manifest.schema.json") continue;
    SCOPED_TRACE(e.path().string());
    EXPECT_NO_THROW(parse_config(json::parse(slurp(e.path()))));
  }
}

TEST(Config, UnknownKeysNameTheField) {
  EXPECT_EQ(config_error_field({{"grids", json::object()}}), "grids");
  EXPECT_EQ(config_error_field({{"grid", {{"N", 8}}}}), "grid.N");
  EXPECT_EQ(config_error_field({{"pair", {{"preset", "identity-gamma0"}, {"G", 1}}}}), "pair.G");
}

TEST(Config, ValidationNamesTheField) {
  EXPECT_EQ(config_error_field(with("grid.n=7")), "grid.n");
  EXPECT_EQ(config_error_field(with("grid.n=\"16\"")), "grid.n");
  EXPECT_EQ(config_error_field(with("grid.L=0")), "grid.L");
  EXPECT_EQ(config_error_field(with("masses.M=1.5")), "masses.M");
  EXPECT_EQ(config_error_field(with("masses.m=-0.1")), "masses.m");
  EXPECT_EQ(config_error_field(with("data.epsilon=0")), "data.epsilon");
  EXPECT_EQ(config_error_field(with("data.seed=-1")), "data.seed");
  EXPECT_EQ(config_error_field(with("time.dt=0.3")), "time.t_max");
  EXPECT_EQ(config_error_field(with("time.t_max=5")), "time.t_max");  // 4 sigma + t_max > L
  EXPECT_EQ(config_error_field(with("xnorm.K=3")), "xnorm.K");
  EXPECT_EQ(config_error_field(with("xnorm.sample_stride=3")), "xnorm.sample_stride");
  EXPECT_EQ(config_error_field(with("iteration.max_iter=0")), "iteration.max_iter");
  EXPECT_EQ(config_error_field(with("sweep.m=[0, 2]")), "sweep.m[1]");
  EXPECT_EQ(config_error_field(with("output.trajectories=1")), "output.trajectories");
  EXPECT_EQ(config_error_field(with("pair.preset=other")), "pair.preset");
  EXPECT_EQ(config_error_field(with("schema_version=2")), "schema_version");
}

TEST(Config, NoWrapBoundaryIsInclusive) {
  json doc = with("time.t_max=4");  // 4 * 1 + 4 = 8 = L
  EXPECT_NO_THROW(parse_config(doc));
}

TEST(Override, ParsesJsonWithStringFallback) {
  json doc = json::object();
  apply_override(doc, "grid.L=6.5");
  apply_override(doc, "sweep.M=[0, 0.5]");
  apply_override(doc, "pair.preset=identity-gamma0");
  apply_override(doc, "output.trajectories=false");
  EXPECT_EQ(doc["grid"]["L"], 6.5);
  EXPECT_EQ(doc["sweep"]["M"], json::array({0, 0.5}));
  EXPECT_EQ(doc["pair"]["preset"], "identity-gamma0");
  EXPECT_EQ(doc["output"]["trajectories"], false);
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(doc, "=3"), ConfigError);
}

TEST(Config, MatrixPairIsCheckedForHermiticity) {
  const GammaSet g = GammaSet::standard();
  json doc = with("pair.preset=matrices");
  doc["pair"]["F"] = cli::detail::matrix_json(Mat4::Identity());
  doc["pair"]["H"] = cli::detail::matrix_json(g[0]);
  const RunConfig ok = parse_config(doc);
  const InteractionPair p = make_pair(ok, g);
  EXPECT_EQ(max_abs(p.H - g[0]), 0.0);

  doc["pair"]["H"] = cli::detail::matrix_json(cplx(0, 1) * Mat4::Identity());
  try {
    make_pair(parse_config(doc), g);
    FAIL() << "non-Hermitian H accepted";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "pair.H");
  }
  doc["pair"]["H"] = json::array({1, 2, 3});
  EXPECT_EQ(config_error_field(doc), "pair.H");
  doc["pair"].erase("H");
  EXPECT_EQ(config_error_field(doc), "pair.H");
}

TEST(Manifest, RoundTripAndDetectsTampering) {
  const fs::path d = fresh_dir("manifest");
  {
    RunOutput out(d, "unit");
    out.text("a.csv", "csv", [](std::ostream& os) { os << "x\n1\n"; });
    out.json_file("sub/b.json", "summary", {{"k", 1}});
    out.finish(nullptr);
  }
  const json m = json::parse(slurp(d / "manifest.json"));
  EXPECT_TRUE(validate_manifest(m, d).empty());
  EXPECT_EQ(m["files"].size(), 2u);
  EXPECT_EQ(m["files"][0]["bytes"], 4u);

  std::ofstream(d / "extra.txt") << "x";
  EXPECT_EQ(validate_manifest(m, d).size(), 1u);
  fs::remove(d / "extra.txt");
  std::ofstream(d / "a.csv") << "changed";
  EXPECT_FALSE(validate_manifest(m, d).empty());
  fs::remove(d / "a.csv");
  EXPECT_FALSE(validate_manifest(m, d).empty());

  json bad = m;
  bad["schema_version"] = 2;
  EXPECT_FALSE(validate_manifest(bad, d).empty());
  bad = m;
  bad.erase("files");
  EXPECT_FALSE(validate_manifest(bad, d).empty());
}

TEST(RunCommand, ConfigErrorIsReportedAsJson) {
  const fs::path d = fresh_dir("inproc_error");
  const std::string out_arg = d.string();
  std::vector<std::string> args = {"dkg", "iterate", "--override", "masses.M=2", "--out", out_arg};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  EXPECT_EQ(run_command(static_cast<int>(argv.size()), argv.data(), out, err), 2);
  const json e = json::parse(err.str());
  EXPECT_EQ(e["error"]["type"], "config");
  EXPECT_EQ(e["error"]["field"], "masses.M");
  EXPECT_EQ(json::parse(slurp(d / "error.json")), e);
  EXPECT_FALSE(fs::exists(d / "manifest.json"));
}

TEST(RunCommand, UsageErrors) {
  std::ostringstream out, err;
  std::vector<std::string> args = {"dkg", "frobnicate"};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  EXPECT_EQ(run_command(static_cast<int>(argv.size()), argv.data(), out, err), 2);
  EXPECT_EQ(json::parse(err.str())["error"]["type"], "usage");
}

TEST(Binary, CheckAlgebraWritesValidManifest) {
  const fs::path d = fresh_dir("algebra");
  ASSERT_EQ(run_binary("check-algebra --out " + d.string()), 0);
  const json m = json::parse(slurp(d / "manifest.json"));
  EXPECT_TRUE(validate_manifest(m, d).empty());
  EXPECT_EQ(m["status"], "ok");
  const json a = json::parse(slurp(d / "algebra.json"));
  EXPECT_EQ(a["clifford_violation"], 0.0);
}

TEST(Binary, IterateProducesTheDocumentedArtifacts) {
  const fs::path d = fresh_dir("iterate");
  ASSERT_EQ(run_binary("iterate --config " + small_config() + " --out " + d.string()), 0);
  const json m = json::parse(slurp(d / "manifest.json"));
  EXPECT_TRUE(validate_manifest(m, d).empty());
  for (const char* f : {"iteration_log.csv", "timing.json", "summary.json", "nonlinear.csv", "solution.csv",
                        "psi_sup.dat", "v_sup.dat", "traj/psi_00000.bin", "traj/v_00016.bin"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  const json s = json::parse(slurp(d / "summary.json"));
  EXPECT_TRUE(s["converged"].get<bool>());
  for (double r : s["ratios"]) EXPECT_LT(r, 1.0);
  EXPECT_EQ(m["config"]["grid"]["n"], 8);

  // The resolved config reproduces the run.
  const fs::path cfg = d.string() + "_resolved.json";
  std::ofstream(cfg) << m["config"].dump();
  const fs::path d2 = fresh_dir("iterate_again");
  ASSERT_EQ(run_binary("iterate --config " + cfg.string() + " --out " + d2.string()), 0);
  EXPECT_EQ(slurp(d / "iteration_log.csv"), slurp(d2 / "iteration_log.csv"));
}

TEST(Binary, OutputIsIndependentOfThreadCount) {
  const fs::path a = fresh_dir("threads1"), b = fresh_dir("threads3");
  ASSERT_EQ(run_binary("iterate --config " + small_config() + " --threads 1 --out " + a.string()), 0);
  ASSERT_EQ(run_binary("iterate --config " + small_config() + " --out " + b.string(), "DKG_THREADS=3"), 0);
  for (const char* f : {"iteration_log.csv", "nonlinear.csv", "solution.csv", "traj/v_00008.bin"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Binary, BadThreadEnvironmentIsAConfigError) {
  const fs::path d = fresh_dir("threads_bad");
  EXPECT_EQ(run_binary("check-algebra --out " + d.string(), "DKG_THREADS=zero"), 2);
  EXPECT_EQ(json::parse(slurp(d / "error.json"))["error"]["field"], "DKG_THREADS");
}

TEST(Binary, DivergingRunKeepsItsLogAndFails) {
  const fs::path d = fresh_dir("diverge");
  EXPECT_EQ(run_binary("iterate --config " + small_config() + " --override data.epsilon=40 --out " + d.string()), 1);
  const json m = json::parse(slurp(d / "manifest.json"));
  EXPECT_EQ(m["status"], "error");
  EXPECT_TRUE(validate_manifest(m, d).empty());
  EXPECT_EQ(json::parse(slurp(d / "error.json"))["error"]["type"], "run");
  std::istringstream log(slurp(d / "iteration_log.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(log, line)) ++rows;
  EXPECT_GE(rows, 2);
}

TEST(Binary, ReportReproducesStoredNorms) {
  const fs::path run = fresh_dir("report_src"), rep = fresh_dir("report_out");
  ASSERT_EQ(run_binary("iterate --config " + small_config() + " --out " + run.string()), 0);
  ASSERT_EQ(run_binary("report --in " + run.string() + " --out " + rep.string()), 0);
  EXPECT_TRUE(validate_manifest(json::parse(slurp(rep / "manifest.json")), rep).empty());

  // report.csv rows are the solution.csv rows at the stored sample nodes.
  std::vector<std::string> sol, got;
  std::istringstream a(slurp(run / "solution.csv")), b(slurp(rep / "report.csv"));
  for (std::string l; std::getline(a, l);) sol.push_back(l);
  for (std::string l; std::getline(b, l);) got.push_back(l);
  ASSERT_EQ(got.size(), 6u);
  EXPECT_EQ(got[0], sol[0]);
  for (std::size_t k = 1; k < got.size(); ++k) EXPECT_EQ(got[k], sol[1 + 4 * (k - 1)]);
}

TEST(Binary, EvolveLinearConservesItsInvariants) {
  const fs::path d = fresh_dir("evolve");
  ASSERT_EQ(run_binary("evolve-linear --config " + small_config() + " --out " + d.string()), 0);
  const json s = json::parse(slurp(d / "summary.json"));
  EXPECT_LT(s["dirac_l2_relative_drift"].get<double>(), 1e-12);
  EXPECT_LT(s["kg_energy_relative_drift"].get<double>(), 1e-12);
  EXPECT_LE(s["kg_l2_max_ratio"].get<double>(), 1.0);
  EXPECT_TRUE(validate_manifest(json::parse(slurp(d / "manifest.json")), d).empty());
}

TEST(Binary, SweepWritesOneRowPerMassPair) {
  const fs::path d = fresh_dir("sweep");
  ASSERT_EQ(run_binary("sweep --config " + small_config() + " --out " + d.string()), 0);
  std::istringstream csv(slurp(d / "sweep.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 4);
}

TEST(Binary, VerifyIdentitiesListsEveryRow) {
  const fs::path d = fresh_dir("identities");
  ASSERT_EQ(run_binary("verify-identities --config " + small_config() + " --out " + d.string()), 0);
  EXPECT_EQ(json::parse(slurp(d / "summary.json"))["rows"], 89);
}
