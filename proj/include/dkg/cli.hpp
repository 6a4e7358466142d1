// Batch front end: run configuration, subcommands and run manifests.
//
// Every subcommand writes into one output directory and finishes with
// manifest.json listing each emitted file. Failures print a JSON error object
// on stderr (and to error.json when the output directory is usable).
#pragma once

#include "dkg/analysis.hpp"
#include "dkg/fft.hpp"
#include "dkg/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace dkg::cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;

/// A configuration problem tied to one dotted field path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  int n = 16;
  double L = 8.0;
  double M = 0.0;
  double m = 0.0;
  double epsilon = 0.01;
  double sigma = 1.0;
  std::uint64_t seed = 1;
  std::string pair_preset = "identity-gamma0";  // or "matrices"
  json pair_matrices;                           // {"F": ..., "H": ...} when preset == "matrices"
  double t_max = 4.0;
  double dt = 0.0625;
  int K = 2;
  double weight_exponent = 0.25;
  std::size_t sample_stride = 4;
  double tol = 1e-8;
  std::size_t max_iter = 30;
  std::vector<double> sweep_M{0.0};
  std::vector<double> sweep_m{0.0};
  bool trajectories = true;

  Grid grid() const { return Grid(n, L); }
  TimeGrid times() const { return TimeGrid::up_to(t_max, dt); }
  XNormConfig xnorm() const { return {K, weight_exponent, sample_stride}; }
  InitialData data() const { return gaussian_data(epsilon, sigma, grid(), seed); }
};

inline json default_config_json() {
  return {
      {"schema_version", kConfigSchemaVersion},
      {"grid", {{"n", 16}, {"L", 8.0}}},
      {"masses", {{"M", 0.0}, {"m", 0.0}}},
      {"data", {{"epsilon", 0.01}, {"sigma", 1.0}, {"seed", 1}}},
      {"pair", {{"preset", "identity-gamma0"}}},
      {"time", {{"t_max", 4.0}, {"dt", 0.0625}}},
      {"xnorm", {{"K", 2}, {"weight_exponent", 0.25}, {"sample_stride", 4}}},
      {"iteration", {{"tol", 1e-8}, {"max_iter", 30}}},
      {"sweep", {{"M", {0.0}}, {"m", {0.0}}}},
      {"output", {{"trajectories", true}}},
  };
}

namespace detail {

inline void merge_known(json& base, const json& over, const std::string& prefix) {
  if (!over.is_object()) throw ConfigError(prefix.empty() ? "config" : prefix, "expected an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError(path, "unknown field");
    if (base[it.key()].is_object() && !(prefix.empty() && it.key() == "pair"))
      merge_known(base[it.key()], it.value(), path);
    else
      base[it.key()] = it.value();
  }
}

inline const json& field(const json& j, const std::string& path) {
  const json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) throw ConfigError(path, "missing");
    cur = &(*cur)[key];
    if (dot == std::string::npos) return *cur;
    start = dot + 1;
  }
}

inline double get_number(const json& j, const std::string& path) {
  const json& v = field(j, path);
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

inline std::int64_t get_integer(const json& j, const std::string& path) {
  const json& v = field(j, path);
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  return v.get<std::int64_t>();
}

inline std::vector<double> get_numbers(const json& j, const std::string& path) {
  const json& v = field(j, path);
  if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(path, "expected an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline Mat4 parse_matrix(const json& j, const std::string& path) {
  // 4 rows of 4 entries; an entry is a number or [re, im].
  if (!j.is_array() || j.size() != 4) throw ConfigError(path, "expected 4 rows");
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) throw ConfigError(path, "expected 4 entries per row");
    for (int c = 0; c < 4; ++c) {
      const json& e = j[r][c];
      if (e.is_number())
        m(r, c) = cplx(e.get<double>(), 0.0);
      else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number())
        m(r, c) = cplx(e[0].get<double>(), e[1].get<double>());
      else
        throw ConfigError(path, "entries must be numbers or [re, im] pairs");
    }
  }
  return m;
}

inline json matrix_json(const Mat4& m) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

/// Applies "a.b.c=value" to a config document. The value is parsed as JSON
/// when possible and taken as a string otherwise.
inline void apply_override(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(kv, "override must look like key=value");
  const std::string path = kv.substr(0, eq), raw = kv.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* cur = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object()) throw ConfigError(path, "unknown field");
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    if (!cur->contains(key)) (*cur)[key] = json::object();
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

/// Resolves a config document (defaults filled in) into a validated RunConfig.
inline RunConfig parse_config(const json& doc) {
  json j = default_config_json();
  detail::merge_known(j, doc, "");
  using namespace detail;
  if (get_integer(j, "schema_version") != kConfigSchemaVersion)
    throw ConfigError("schema_version", "unsupported version (expected " + std::to_string(kConfigSchemaVersion) + ")");

  RunConfig c;
  const auto n = get_integer(j, "grid.n");
  if (n < 2 || n % 2 != 0 || n > 256) throw ConfigError("grid.n", "must be an even integer in [2, 256]");
  c.n = static_cast<int>(n);
  c.L = get_number(j, "grid.L");
  if (!(c.L > 0.0)) throw ConfigError("grid.L", "must be > 0");

  c.M = get_number(j, "masses.M");
  c.m = get_number(j, "masses.m");
  if (!(c.M >= 0.0 && c.M <= 1.0)) throw ConfigError("masses.M", "must lie in [0, 1]");
  if (!(c.m >= 0.0 && c.m <= 1.0)) throw ConfigError("masses.m", "must lie in [0, 1]");

  c.epsilon = get_number(j, "data.epsilon");
  if (!(c.epsilon > 0.0)) throw ConfigError("data.epsilon", "must be > 0");
  c.sigma = get_number(j, "data.sigma");
  if (!(c.sigma > 0.0)) throw ConfigError("data.sigma", "must be > 0");
  const auto seed = get_integer(j, "data.seed");
  if (seed < 0) throw ConfigError("data.seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);

  const json& pair = field(j, "pair");
  if (!pair.is_object()) throw ConfigError("pair", "expected an object");
  for (auto it = pair.begin(); it != pair.end(); ++it)
    if (it.key() != "preset" && it.key() != "F" && it.key() != "H") throw ConfigError("pair." + it.key(), "unknown field");
  if (!pair.contains("preset") || !pair["preset"].is_string()) throw ConfigError("pair.preset", "expected a string");
  c.pair_preset = pair["preset"].get<std::string>();
  if (c.pair_preset == "matrices") {
    if (!pair.contains("F")) throw ConfigError("pair.F", "missing");
    if (!pair.contains("H")) throw ConfigError("pair.H", "missing");
    detail::parse_matrix(pair["F"], "pair.F");
    detail::parse_matrix(pair["H"], "pair.H");
    c.pair_matrices = {{"F", pair["F"]}, {"H", pair["H"]}};
  } else if (c.pair_preset != "identity-gamma0") {
    throw ConfigError("pair.preset", "must be \"identity-gamma0\" or \"matrices\"");
  }

  c.t_max = get_number(j, "time.t_max");
  c.dt = get_number(j, "time.dt");
  if (!(c.t_max > 0.0)) throw ConfigError("time.t_max", "must be > 0");
  if (!(c.dt > 0.0)) throw ConfigError("time.dt", "must be > 0");
  try {
    (void)TimeGrid::up_to(c.t_max, c.dt);
  } catch (const std::invalid_argument&) {
    throw ConfigError("time.t_max", "must be a multiple of time.dt");
  }
  if (!(4.0 * c.sigma + c.t_max <= c.L))
    throw ConfigError("time.t_max", "no-wrap condition 4 sigma + t_max <= L violated");
  if (!(c.sigma < c.L / 4.0)) throw ConfigError("data.sigma", "must be < L/4");

  const auto K = get_integer(j, "xnorm.K");
  if (K < 0 || K > 2) throw ConfigError("xnorm.K", "must be 0, 1 or 2");
  c.K = static_cast<int>(K);
  c.weight_exponent = get_number(j, "xnorm.weight_exponent");
  if (!(c.weight_exponent >= 0.0 && c.weight_exponent <= 1.0))
    throw ConfigError("xnorm.weight_exponent", "must lie in [0, 1]");
  const auto stride = get_integer(j, "xnorm.sample_stride");
  if (stride < 1) throw ConfigError("xnorm.sample_stride", "must be >= 1");
  c.sample_stride = static_cast<std::size_t>(stride);
  if (c.times().steps % c.sample_stride != 0)
    throw ConfigError("xnorm.sample_stride", "must divide the number of time steps");

  c.tol = get_number(j, "iteration.tol");
  if (!(c.tol > 0.0)) throw ConfigError("iteration.tol", "must be > 0");
  const auto mi = get_integer(j, "iteration.max_iter");
  if (mi < 1) throw ConfigError("iteration.max_iter", "must be >= 1");
  c.max_iter = static_cast<std::size_t>(mi);

  c.sweep_M = get_numbers(j, "sweep.M");
  c.sweep_m = get_numbers(j, "sweep.m");
  for (std::size_t i = 0; i < c.sweep_M.size(); ++i)
    if (!(c.sweep_M[i] >= 0.0 && c.sweep_M[i] <= 1.0))
      throw ConfigError("sweep.M[" + std::to_string(i) + "]", "must lie in [0, 1]");
  for (std::size_t i = 0; i < c.sweep_m.size(); ++i)
    if (!(c.sweep_m[i] >= 0.0 && c.sweep_m[i] <= 1.0))
      throw ConfigError("sweep.m[" + std::to_string(i) + "]", "must lie in [0, 1]");

  const json& traj = field(j, "output.trajectories");
  if (!traj.is_boolean()) throw ConfigError("output.trajectories", "expected true or false");
  c.trajectories = traj.get<bool>();
  return c;
}

inline json to_json(const RunConfig& c) {
  json pair = {{"preset", c.pair_preset}};
  if (c.pair_preset == "matrices") {
    pair["F"] = c.pair_matrices["F"];
    pair["H"] = c.pair_matrices["H"];
  }
  return {
      {"schema_version", kConfigSchemaVersion},
      {"grid", {{"n", c.n}, {"L", c.L}}},
      {"masses", {{"M", c.M}, {"m", c.m}}},
      {"data", {{"epsilon", c.epsilon}, {"sigma", c.sigma}, {"seed", c.seed}}},
      {"pair", pair},
      {"time", {{"t_max", c.t_max}, {"dt", c.dt}}},
      {"xnorm", {{"K", c.K}, {"weight_exponent", c.weight_exponent}, {"sample_stride", c.sample_stride}}},
      {"iteration", {{"tol", c.tol}, {"max_iter", c.max_iter}}},
      {"sweep", {{"M", c.sweep_M}, {"m", c.sweep_m}}},
      {"output", {{"trajectories", c.trajectories}}},
  };
}

inline InteractionPair make_pair(const RunConfig& c, const GammaSet& g) {
  InteractionPair p = InteractionPair::identity_gamma0(g);
  if (c.pair_preset == "matrices") {
    p.F = detail::parse_matrix(c.pair_matrices["F"], "pair.F");
    p.H = detail::parse_matrix(c.pair_matrices["H"], "pair.H");
  }
  const auto rep = validate_interactions(p, g);
  if (rep.f_violation > 1e-12) throw ConfigError("pair.F", "gamma^0 F must be Hermitian");
  if (rep.h_violation > 1e-12) throw ConfigError("pair.H", "H must be Hermitian");
  return p;
}

// ---------------------------------------------------------------------------
// Output directory and manifest.

class RunOutput {
 public:
  RunOutput(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    fs::create_directories(dir_);
  }

  const fs::path& dir() const { return dir_; }

  template <class Writer>
  void text(const std::string& rel, const std::string& kind, Writer&& w) {
    const fs::path p = prepare(rel);
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot open " + p.string() + " for writing");
    w(os);
    os.close();
    if (!os) throw std::runtime_error("write failed: " + p.string());
    record(rel, kind, {});
  }

  void json_file(const std::string& rel, const std::string& kind, const json& j) {
    text(rel, kind, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }

  template <class T, int C>
  void snapshot(const std::string& rel, const std::string& kind, const Field<T, C>& f, double t) {
    write_snapshot(prepare(rel).string(), f, t);
    record(rel, kind, {{"time", t}});
  }

  /// Writes manifest.json; `config` is the resolved configuration (or null).
  void finish(const json& config, const std::string& status = "ok") const {
    json m = {{"schema", "dkg-run-manifest"},
              {"schema_version", kManifestSchemaVersion},
              {"command", command_},
              {"status", status},
              {"config", config},
              {"files", files_}};
    std::ofstream os(dir_ / "manifest.json");
    os << m.dump(2) << '\n';
    if (!os) throw std::runtime_error("write failed: manifest.json");
  }

 private:
  fs::path prepare(const std::string& rel) {
    const fs::path p = dir_ / rel;
    fs::create_directories(p.parent_path());
    return p;
  }
  void record(const std::string& rel, const std::string& kind, json extra) {
    json e = {{"path", rel}, {"kind", kind}, {"bytes", fs::file_size(dir_ / rel)}};
    for (auto it = extra.begin(); it != extra.end(); ++it) e[it.key()] = it.value();
    files_.push_back(std::move(e));
  }

  fs::path dir_;
  std::string command_;
  json files_ = json::array();
};

/// Structural check of a manifest against configs/manifest.schema.json, plus
/// the directory contents: every listed file exists with the listed size and
/// every regular file in the directory (except manifest.json and error.json)
/// is listed. Returns the problems found.
inline std::vector<std::string> validate_manifest(const json& m, const fs::path& dir) {
  std::vector<std::string> err;
  auto need = [&](const char* key, bool ok) {
    if (!m.contains(key))
      err.push_back(std::string("missing ") + key);
    else if (!ok)
      err.push_back(std::string("bad type for ") + key);
  };
  if (!m.is_object()) return {"manifest is not an object"};
  need("schema", m.contains("schema") && m["schema"] == "dkg-run-manifest");
  need("schema_version", m.contains("schema_version") && m["schema_version"] == kManifestSchemaVersion);
  need("command", m.contains("command") && m["command"].is_string());
  need("status", m.contains("status") && m["status"].is_string() &&
                     (m["status"] == "ok" || m["status"] == "error"));
  need("config", m.contains("config") && (m["config"].is_object() || m["config"].is_null()));
  need("files", m.contains("files") && m["files"].is_array());
  if (!err.empty()) return err;
  static const std::set<std::string> allowed = {"path", "kind", "bytes", "time"};
  std::set<std::string> listed;
  for (const auto& f : m["files"]) {
    if (!f.is_object() || !f.contains("path") || !f["path"].is_string() || !f.contains("kind") ||
        !f["kind"].is_string() || !f.contains("bytes") || !f["bytes"].is_number_unsigned()) {
      err.push_back("malformed file entry: " + f.dump());
      continue;
    }
    for (auto it = f.begin(); it != f.end(); ++it)
      if (!allowed.count(it.key())) err.push_back("unknown key " + it.key() + " in file entry");
    if (f.contains("time") && !f["time"].is_number()) err.push_back("bad time in " + f["path"].get<std::string>());
    const std::string rel = f["path"];
    if (!listed.insert(rel).second) err.push_back("duplicate entry " + rel);
    const fs::path p = dir / rel;
    if (!fs::is_regular_file(p))
      err.push_back("listed file missing: " + rel);
    else if (fs::file_size(p) != f["bytes"].get<std::uintmax_t>())
      err.push_back("size mismatch: " + rel);
  }
  if (fs::is_directory(dir))
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      const std::string rel = fs::relative(e.path(), dir).generic_string();
      if (rel == "manifest.json" || rel == "error.json") continue;
      if (!listed.count(rel)) err.push_back("unlisted file: " + rel);
    }
  return err;
}

// ---------------------------------------------------------------------------
// Subcommands.

namespace detail {

inline std::string node_name(const char* stem, std::size_t k) {
  std::ostringstream os;
  os << "traj/" << stem << '_' << std::setw(5) << std::setfill('0') << k << ".bin";
  return os.str();
}

inline void csv_precision(std::ostream& os) { os << std::setprecision(17); }

inline json fit_json(const std::optional<DecayFit>& f) {
  if (!f) return nullptr;
  return {{"t1", f->t1}, {"t2", f->t2}, {"exponent", f->exponent}, {"rms", f->rms}, {"samples", f->samples}};
}

inline std::optional<DecayFit> try_fit(const DecaySeries& s, double t1, double t2) {
  try {
    return s.fit(t1, t2);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

inline void write_solution(RunOutput& out, const RunConfig& c, const SpinorTrajectory& psi, const ScalarTrajectory& v,
                           json& summary) {
  out.text("solution.csv", "csv", [&](std::ostream& os) {
    csv_precision(os);
    os << "t,psi_l2,psi_sup,v_l2,v_sup\n";
    for (std::size_t k = 0; k < psi.size(); ++k)
      os << psi.time(k) << ',' << l2_norm(psi.values[k]) << ',' << sup_norm(psi.values[k]) << ','
         << l2_norm(v.values[k]) << ',' << sup_norm(v.values[k]) << '\n';
  });
  const auto ps = sup_series("psi_sup", psi), vs = sup_series("v_sup", v);
  out.text("psi_sup.dat", "series", [&](std::ostream& os) { write_series(os, ps); });
  out.text("v_sup.dat", "series", [&](std::ostream& os) { write_series(os, vs); });
  summary["decay"] = {{"psi_sup", fit_json(try_fit(ps, 2.0, c.t_max))}, {"v_sup", fit_json(try_fit(vs, 2.0, c.t_max))}};
  if (c.trajectories)
    for (std::size_t k = 0; k < psi.size(); k += c.sample_stride) {
      out.snapshot(node_name("psi", k), "snapshot-psi", psi.values[k], psi.time(k));
      out.snapshot(node_name("v", k), "snapshot-v", v.values[k], v.time(k));
    }
}

inline json run_check_algebra(RunOutput& out) {
  const GammaSet g = GammaSet::standard();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-10.0, 10.0), um(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::array<double, 4> xi;
    double r2 = 0.0;
    for (auto& x : xi) {
      x = u(rng);
      r2 += x * x;
    }
    const double M = um(rng);
    const Mat4 h = dirac_symbol(g, xi, M);
    worst = std::max(worst, max_abs(h * h - (r2 + M * M) * Mat4::Identity()));
  }
  const json report = {{"clifford_violation", check_clifford(g)},
                       {"adjoint_violation", check_adjoints(g)},
                       {"symbol_square_max_error", worst},
                       {"symbol_samples", 100}};
  out.json_file("algebra.json", "report", report);
  return report;
}

inline json run_verify_identities(RunOutput& out, const RunConfig& c) {
  const auto rows = identity_suite(c.grid(), GammaSet::standard());
  double comm = 0.0, leib = 0.0;
  out.text("identities.csv", "csv", [&](std::ostream& os) {
    csv_precision(os);
    os << "kind,relation,field,function,residual\n";
    for (const auto& r : rows) {
      os << r.kind << ',' << r.relation << ',' << r.field << ',' << r.function << ',' << r.residual << '\n';
      double& worst = r.kind == "commutator" ? comm : leib;
      worst = std::max(worst, r.residual);
    }
  });
  json s = {{"rows", rows.size()}, {"max_commutator_residual", comm}, {"max_leibniz_residual", leib}};
  out.json_file("summary.json", "summary", s);
  return s;
}

inline json run_evolve_linear(RunOutput& out, const RunConfig& c) {
  const GammaSet g = GammaSet::standard();
  const auto data = c.data();
  const auto times = c.times();
  const auto psi = dirac_evolve(data.psi0, SourceProvider<SpinorField>::none(), c.M, times, g);
  const auto v = kg_evolve(data.v0, data.v1, SourceProvider<ScalarField>::none(), c.m, times);
  SpinorTrajectory zpsi;
  ScalarTrajectory zv;
  zpsi.times = zv.times = times;
  zpsi.values.assign(times.size(), SpinorField(c.grid()));
  zv.values.assign(times.size(), ScalarField(c.grid()));

  const auto dirac = monitor_dirac_l2(psi, zpsi);
  const auto en = monitor_energy(v, zv, c.m);
  const auto kgl2 = monitor_kg_l2(v, zv, c.m);
  out.text("monitor_dirac_l2.csv", "csv", [&](std::ostream& os) { write_monitor_csv(os, dirac); });
  out.text("monitor_energy.csv", "csv", [&](std::ostream& os) { write_monitor_csv(os, en); });
  out.text("monitor_kg_l2.csv", "csv", [&](std::ostream& os) { write_monitor_csv(os, kgl2); });

  double l2_drift = 0.0, energy_drift = 0.0;
  const double n0 = dirac.left[0], e0 = en.left[0] * en.left[0];
  for (std::size_t k = 0; k < times.size(); ++k) {
    l2_drift = std::max(l2_drift, std::abs(dirac.left[k] - n0) / n0);
    energy_drift = std::max(energy_drift, std::abs(en.left[k] * en.left[k] - e0) / e0);
  }
  json s = {{"dirac_l2_relative_drift", l2_drift},
            {"kg_energy_relative_drift", energy_drift},
            {"kg_l2_max_ratio", kgl2.max_ratio()}};
  write_solution(out, c, psi, v, s);
  out.json_file("summary.json", "summary", s);
  return s;
}

inline json run_iterate(RunOutput& out, const RunConfig& c) {
  const GammaSet g = GammaSet::standard();
  const PicardProblem pb{c.data(), make_pair(c, g), c.M, c.m, c.times(), c.xnorm(), g};
  IterateOptions o;
  o.tol = c.tol;
  o.max_iter = c.max_iter;
  std::vector<std::array<double, 3>> steps;
  o.on_step = [&](std::size_t k, double d, double r) { steps.push_back({double(k), d, r}); };
  IterationState st;
  try {
    st = iterate(pb, o);
  } catch (const std::exception&) {
    // Keep the partial log of a diverging run.
    out.text("iteration_log.csv", "csv", [&](std::ostream& os) {
      csv_precision(os);
      os << "step,x_distance,ratio\n";
      for (const auto& s : steps) {
        os << std::size_t(s[0]) << ',' << s[1] << ',';
        if (!std::isnan(s[2])) os << s[2];
        os << '\n';
      }
    });
    throw;
  }
  out.text("iteration_log.csv", "csv", [&](std::ostream& os) { write_iteration_log(os, st); });
  out.json_file("timing.json", "timing", {{"step_seconds", st.step_seconds}});

  const auto res = fixed_point_residual(st.current.phi, st.current.u, pb.pair, c.M, c.m, g);
  const auto mon = monitor_nonlinear(st.current, pb.pair, c.K, g);
  out.text("nonlinear.csv", "csv", [&](std::ostream& os) {
    csv_precision(os);
    os << "t,dirac_source_l2,kg_source_l2,kg_source_l1\n";
    for (std::size_t k = 0; k < mon.dirac_source.times.size(); ++k)
      os << mon.dirac_source.times[k] << ',' << mon.dirac_source.values[k] << ',' << mon.kg_source.values[k] << ','
         << mon.kg_source_l1.values[k] << '\n';
  });
  json s = {{"converged", st.converged},
            {"iterations", st.iterations},
            {"distances", st.distances},
            {"ratios", st.ratios},
            {"x_norm_first", st.x_norms.front()},
            {"x_norm_final", st.final_x_norm},
            {"pde_residual", {{"dirac", res.dirac}, {"kg", res.kg}}}};
  write_solution(out, c, st.current.phi, st.current.u, s);
  out.json_file("summary.json", "summary", s);
  if (!st.converged) throw IterationFailure("picard: no convergence within iteration.max_iter");
  return s;
}

inline json run_sweep(RunOutput& out, const RunConfig& c) {
  const GammaSet g = GammaSet::standard();
  MassSweepOptions o;
  o.iterate.tol = c.tol;
  o.iterate.max_iter = c.max_iter;
  const auto rows = mass_sweep(c.data(), make_pair(c, g), c.sweep_M, c.sweep_m, c.times(), c.xnorm(), o, g);
  std::size_t failed = 0;
  out.text("sweep.csv", "csv", [&](std::ostream& os) {
    csv_precision(os);
    os << "M,m,converged,iterations,x_norm,ratio,psi_decay_exponent,v_decay_exponent,sup_v_l2,m_sup_v_l2,"
          "energy_bound,error\n";
    auto ex = [](const std::optional<DecayFit>& f) {
      return f ? f->exponent : std::numeric_limits<double>::quiet_NaN();
    };
    for (const auto& r : rows) {
      failed += r.converged ? 0 : 1;
      std::string e = r.error;
      std::ranges::replace(e, ',', ';');
      std::ranges::replace(e, '\n', ' ');
      os << r.M << ',' << r.m << ',' << (r.converged ? 1 : 0) << ',' << r.iterations << ',' << r.x_norm << ','
         << r.ratio << ',' << ex(r.psi_decay) << ',' << ex(r.v_decay) << ',' << r.sup_v << ',' << r.m_sup_v << ','
         << r.energy_bound << ',' << e << '\n';
    }
  });
  json s = {{"rows", rows.size()}, {"failed", failed}};
  out.json_file("summary.json", "summary", s);
  return s;
}

inline json run_report(RunOutput& out, const fs::path& in) {
  const json m = json::parse(read_file((in / "manifest.json").string()));
  if (const auto e = validate_manifest(m, in); !e.empty())
    throw std::runtime_error("report: input manifest invalid: " + e.front());
  SpinorTrajectory psi;
  ScalarTrajectory v;
  std::vector<double> tp, tv;
  for (const auto& f : m["files"]) {
    const std::string kind = f["kind"];
    if (kind == "snapshot-psi") {
      double t = 0.0;
      psi.values.push_back(read_snapshot<cplx, 4>((in / f["path"].get<std::string>()).string(), &t));
      tp.push_back(t);
    } else if (kind == "snapshot-v") {
      double t = 0.0;
      v.values.push_back(read_snapshot<double, 1>((in / f["path"].get<std::string>()).string(), &t));
      tv.push_back(t);
    }
  }
  if (tp.size() < 2 || tp != tv) throw std::runtime_error("report: input has no matching psi/v snapshot series");
  const double step = tp[1] - tp[0];
  psi.times = v.times = TimeGrid(tp.front(), step, tp.size() - 1);
  for (std::size_t k = 0; k < tp.size(); ++k)
    if (std::abs(psi.time(k) - tp[k]) > 1e-9 * std::max(1.0, tp[k]))
      throw std::runtime_error("report: snapshots are not uniformly spaced in time");

  out.text("report.csv", "csv", [&](std::ostream& os) {
    csv_precision(os);
    os << "t,psi_l2,psi_sup,v_l2,v_sup\n";
    for (std::size_t k = 0; k < tp.size(); ++k)
      os << tp[k] << ',' << l2_norm(psi.values[k]) << ',' << sup_norm(psi.values[k]) << ',' << l2_norm(v.values[k])
         << ',' << sup_norm(v.values[k]) << '\n';
  });
  const auto ps = sup_series("psi_sup", psi), vs = sup_series("v_sup", v);
  out.text("psi_sup.dat", "series", [&](std::ostream& os) { write_series(os, ps); });
  out.text("v_sup.dat", "series", [&](std::ostream& os) { write_series(os, vs); });
  json s = {{"source", m["command"]},
            {"snapshots", tp.size()},
            {"decay",
             {{"psi_sup", fit_json(try_fit(ps, 2.0, tp.back()))}, {"v_sup", fit_json(try_fit(vs, 2.0, tp.back()))}}}};
  out.json_file("report.json", "summary", s);
  return s;
}

inline json error_json(const std::string& type, const std::string& message, const std::string& field = {}) {
  json e = {{"type", type}, {"message", message}};
  if (!field.empty()) e["field"] = field;
  return {{"error", e}};
}

}  // namespace detail

/// Exit status: 0 success, 1 run failure, 2 usage or configuration error.
inline int run_command(int argc, char** argv, std::ostream& out_stream = std::cout, std::ostream& err_stream = std::cerr) {
  CLI::App app{"Dirac-Klein-Gordon pseudo-spectral simulator"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out", in_dir;
  std::vector<std::string> overrides;
  int threads = 0;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--override", overrides, "key=value applied to the configuration (repeatable)")->take_all();
  app.add_option("--threads", threads, "worker threads (default: DKG_THREADS or 1)")->check(CLI::PositiveNumber);
  app.fallthrough();
  auto* algebra = app.add_subcommand("check-algebra", "gamma-matrix algebra report");
  app.add_subcommand("verify-identities", "commutator and Leibniz residual table");
  app.add_subcommand("evolve-linear", "free Dirac and Klein-Gordon evolution with monitors");
  app.add_subcommand("iterate", "Picard iteration for the coupled system");
  app.add_subcommand("sweep", "Picard runs over the mass lattice");
  auto* report = app.add_subcommand("report", "re-render summaries from a stored run");
  report->add_option("--in", in_dir, "directory of a previous run")->required();
  (void)algebra;

  auto fail = [&](const json& e, int code, const fs::path* dir) {
    err_stream << e.dump() << '\n';
    if (dir) {
      std::error_code ec;
      fs::create_directories(*dir, ec);
      std::ofstream os(*dir / "error.json");
      if (os) os << e.dump(2) << '\n';
    }
    return code;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out_stream << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail(detail::error_json("usage", e.what()), 2, nullptr);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const fs::path dir(out_dir);
  json resolved = nullptr;
  try {
    if (threads == 0) {
      if (const char* env = std::getenv("DKG_THREADS")) {
        try {
          threads = std::stoi(env);
        } catch (const std::exception&) {
          throw ConfigError("DKG_THREADS", "expected a positive integer");
        }
        if (threads < 1) throw ConfigError("DKG_THREADS", "expected a positive integer");
      } else {
        threads = 1;
      }
    }
    set_threads(threads);

    json doc = json::object();
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) throw ConfigError("--config", "cannot open " + config_path);
      doc = json::parse(is, nullptr, false);
      if (doc.is_discarded()) throw ConfigError("--config", "not valid JSON: " + config_path);
    }
    for (const auto& o : overrides) apply_override(doc, o);
    const RunConfig cfg = parse_config(doc);
    resolved = to_json(cfg);

    RunOutput out(dir, command);
    json summary;
    int code = 0;
    if (command == "check-algebra") {
      summary = detail::run_check_algebra(out);
      code = summary["clifford_violation"].get<double>() <= 1e-14 && summary["adjoint_violation"].get<double>() == 0.0 &&
                     summary["symbol_square_max_error"].get<double>() <= 1e-12
                 ? 0
                 : 1;
    } else if (command == "verify-identities") {
      summary = detail::run_verify_identities(out, cfg);
    } else if (command == "evolve-linear") {
      summary = detail::run_evolve_linear(out, cfg);
    } else if (command == "iterate") {
      try {
        summary = detail::run_iterate(out, cfg);
      } catch (...) {
        out.finish(resolved, "error");
        throw;
      }
    } else if (command == "sweep") {
      summary = detail::run_sweep(out, cfg);
    } else if (command == "report") {
      summary = detail::run_report(out, fs::path(in_dir));
    }
    out.finish(resolved, code == 0 ? "ok" : "error");
    out_stream << summary.dump() << '\n';
    return code;
  } catch (const ConfigError& e) {
    return fail(detail::error_json("config", e.what(), e.field()), 2, &dir);
  } catch (const std::exception& e) {
    return fail(detail::error_json("run", e.what()), 1, &dir);
  }
}

}  // namespace dkg::cli
