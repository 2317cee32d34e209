#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include "glance/acceptance.hpp"
#include "glance/flow.hpp"
#include "glance/genfam.hpp"
#include "glance/glancing.hpp"
#include "glance/hamiltonians.hpp"
#include "glance/manifolds.hpp"
#include "glance/normal_form.hpp"
#include "glance/semiclassical.hpp"

namespace glance::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kSchema = "glance.config/1";
inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode { ok = 0, config_error = 2, numeric_failure = 3 };

/// A checked invariant did not hold; the message names it.
class InvariantFailure : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Configuration

struct FlowParams {
  std::vector<double> x{1.0, 0.0}, p{0.0, 1.0};
  double t = 1.0;
  int samples = 101;
};

struct GlancingParams {
  double phi_min = -2.0, phi_max = 2.0;
  std::vector<double> x0;  // non-empty: rho = (1 + |x - x0|^2) / 2
};

struct ClassifyParams {
  std::string mixed_case = "I";
  double a = 2.0;
  double alpha = 1.0, beta = 0.0, gamma = 1.0;
  std::string f1, f2, g;  // polynomials in x1, x2, p1, p2; override the case
};

struct DensityParams {
  double t_max = 0.8;
  double phi_min = -1.0, phi_max = 1.0;
  std::vector<int> grid{5, 8, 6};
};

struct EvaluateParams {
  std::vector<double> x1{0.4, 1.2, 3}, x2{0.4, 1.2, 3};  // min, max, count
  double t0 = 1.0;
  bool compare_exact = false;
  std::string amplitude = "one";  // one | bump
};

struct TransitionParams {
  double window = 0.75;
  int samples = 720;
  std::vector<double> u0{0.0, 0.0};
};

struct RunConfig {
  std::string command;
  std::string hamiltonian = "conformal1";
  int n = 2;
  json rho = "1+x^2+y^2";  // expression string or exponent-coefficient table
  std::string manifold = "bessel";
  double ode_tol = 1e-10;
  double newton_tol = 1e-12;
  std::vector<double> h{0.05};
  std::vector<double> E{1.0};
  std::string output_dir = "glance_out";
  unsigned seed = acceptance::Options{}.seed;
  bool plots = true;

  FlowParams flow;
  GlancingParams glancing;
  ClassifyParams classify;
  DensityParams density;
  EvaluateParams evaluate;
  TransitionParams transition;
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"flow",    "glancing",   "classify", "density",
                                              "evaluate", "transition", "verify-all"};
  return names;
}

namespace detail {

// Typed reads of a JSON object with the field path in every error.
class Reader {
 public:
  Reader(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    out = convert<T>(j_.at(key), path_ + "." + key);
  }

  json sub(const char* key) {
    seen_.push_back(key);
    return j_.contains(key) ? j_.at(key) : json::object();
  }

  void raw(const char* key, json& out) {
    seen_.push_back(key);
    if (j_.contains(key)) out = j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end())
        throw ConfigError(path_ + "." + k + ": unknown field");
  }

 private:
  std::string where() const { return path_; }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.get<long long>() < 0) throw ConfigError(path + ": expected a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path + ": expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ConfigError(path + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

  json j_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline void positive(double v, const std::string& path) {
  if (!(v > 0)) throw ConfigError(path + ": must be positive");
}

inline void length(std::size_t got, std::size_t want, const std::string& path) {
  if (got != want) throw ConfigError(path + ": expected " + std::to_string(want) + " entries");
}

}  // namespace detail

/// Polynomial from an expression string or a list of
/// {"exponent": [...], "coefficient": c} entries.
inline Polynomial polynomial_from_json(const json& j, const std::vector<std::string>& vars, const std::string& path) {
  if (j.is_string()) {
    try {
      return Polynomial::parse(j.get<std::string>(), vars);
    } catch (const Error& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }
  if (!j.is_array()) throw ConfigError(path + ": expected an expression string or an exponent-coefficient list");
  Polynomial q(static_cast<int>(vars.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    detail::Reader r(j[i], p);
    std::vector<int> e;
    double c = 0.0;
    r.get("exponent", e);
    r.get("coefficient", c);
    r.finish();
    detail::length(e.size(), vars.size(), p + ".exponent");
    try {
      q.add_term(e, c);
    } catch (const Error& err) {
      throw ConfigError(p + ": " + err.what());
    }
  }
  return q;
}

inline json polynomial_to_json(const Polynomial& q) {
  json out = json::array();
  for (const auto& [e, c] : q.terms()) out.push_back({{"exponent", e}, {"coefficient", c}});
  return out;
}

/// Validates cross-field constraints. Field paths follow the JSON layout.
inline void validate(const RunConfig& c) {
  using detail::positive;
  if (std::find(command_names().begin(), command_names().end(), c.command) == command_names().end())
    throw ConfigError("command: unknown command '" + c.command + "'");
  if (c.n < 1 || c.n > 3) throw ConfigError("hamiltonian.n: must be 1, 2 or 3");
  const auto& names = hamiltonians::registry_names();
  if (std::find(names.begin(), names.end(), c.hamiltonian) == names.end())
    throw ConfigError("hamiltonian.name: unknown hamiltonian '" + c.hamiltonian + "'");
  if (c.manifold != "bessel" && c.manifold != "plane_wave" && c.manifold != "vertical_fiber")
    throw ConfigError("manifold.name: expected bessel, plane_wave or vertical_fiber");
  positive(c.ode_tol, "tolerances.ode");
  positive(c.newton_tol, "tolerances.newton");
  for (std::size_t i = 0; i < c.h.size(); ++i) positive(c.h[i], "h[" + std::to_string(i) + "]");
  if (c.h.empty()) throw ConfigError("h: at least one value is required");
  if (c.E.empty()) throw ConfigError("E: at least one value is required");
  if (c.hamiltonian.rfind("conformal", 0) == 0) polynomial_from_json(c.rho, spatial_variable_names(c.n), "hamiltonian.rho");

  detail::length(c.flow.x.size(), static_cast<std::size_t>(c.n), "flow.x");
  detail::length(c.flow.p.size(), static_cast<std::size_t>(c.n), "flow.p");
  if (c.flow.samples < 2) throw ConfigError("flow.samples: must be at least 2");
  if (!(c.glancing.phi_max > c.glancing.phi_min)) throw ConfigError("glancing.phi_max: must exceed phi_min");
  if (!c.glancing.x0.empty()) detail::length(c.glancing.x0.size(), 2, "glancing.x0");
  parse_mixed_case(c.classify.mixed_case);
  positive(c.density.t_max, "density.t_max");
  detail::length(c.density.grid.size(), 3, "density.grid");
  for (int k = 0; k < 3; ++k)
    if (c.density.grid[k] < 1) throw ConfigError("density.grid[" + std::to_string(k) + "]: must be at least 1");
  for (const auto* r : {&c.evaluate.x1, &c.evaluate.x2}) {
    const std::string p = r == &c.evaluate.x1 ? "evaluate.x1" : "evaluate.x2";
    detail::length(r->size(), 3, p);
    if ((*r)[2] < 1 || (*r)[2] != std::floor((*r)[2])) throw ConfigError(p + "[2]: count must be a positive integer");
  }
  positive(c.evaluate.t0, "evaluate.t0");
  if (c.evaluate.amplitude != "one" && c.evaluate.amplitude != "bump")
    throw ConfigError("evaluate.amplitude: expected one or bump");
  positive(c.transition.window, "transition.window");
  if (c.transition.samples < 16) throw ConfigError("transition.samples: must be at least 16");
  detail::length(c.transition.u0.size(), 2, "transition.u0");
}

/// Reads a config document; missing fields keep the values already in `c`.
inline void read_config(const json& j, RunConfig& c) {
  detail::Reader r(j, "config");
  std::string schema = kSchema;
  r.get("schema", schema);
  if (schema != kSchema) throw ConfigError("config.schema: expected '" + std::string(kSchema) + "', got '" + schema + "'");
  r.get("command", c.command);
  {
    detail::Reader h(r.sub("hamiltonian"), "config.hamiltonian");
    h.get("name", c.hamiltonian);
    h.get("n", c.n);
    h.raw("rho", c.rho);
    h.finish();
  }
  {
    detail::Reader m(r.sub("manifold"), "config.manifold");
    m.get("name", c.manifold);
    m.finish();
  }
  {
    detail::Reader t(r.sub("tolerances"), "config.tolerances");
    t.get("ode", c.ode_tol);
    t.get("newton", c.newton_tol);
    t.finish();
  }
  r.get("h", c.h);
  r.get("E", c.E);
  r.get("output_dir", c.output_dir);
  r.get("seed", c.seed);
  r.get("plots", c.plots);
  {
    detail::Reader s(r.sub("flow"), "config.flow");
    s.get("x", c.flow.x);
    s.get("p", c.flow.p);
    s.get("t", c.flow.t);
    s.get("samples", c.flow.samples);
    s.finish();
  }
  {
    detail::Reader s(r.sub("glancing"), "config.glancing");
    s.get("phi_min", c.glancing.phi_min);
    s.get("phi_max", c.glancing.phi_max);
    s.get("x0", c.glancing.x0);
    s.finish();
  }
  {
    detail::Reader s(r.sub("classify"), "config.classify");
    s.get("case", c.classify.mixed_case);
    s.get("a", c.classify.a);
    s.get("alpha", c.classify.alpha);
    s.get("beta", c.classify.beta);
    s.get("gamma", c.classify.gamma);
    s.get("f1", c.classify.f1);
    s.get("f2", c.classify.f2);
    s.get("g", c.classify.g);
    s.finish();
  }
  {
    detail::Reader s(r.sub("density"), "config.density");
    s.get("t_max", c.density.t_max);
    s.get("phi_min", c.density.phi_min);
    s.get("phi_max", c.density.phi_max);
    s.get("grid", c.density.grid);
    s.finish();
  }
  {
    detail::Reader s(r.sub("evaluate"), "config.evaluate");
    s.get("x1", c.evaluate.x1);
    s.get("x2", c.evaluate.x2);
    s.get("t0", c.evaluate.t0);
    s.get("compare_exact", c.evaluate.compare_exact);
    s.get("amplitude", c.evaluate.amplitude);
    s.finish();
  }
  {
    detail::Reader s(r.sub("transition"), "config.transition");
    s.get("window", c.transition.window);
    s.get("samples", c.transition.samples);
    s.get("u0", c.transition.u0);
    s.finish();
  }
  r.finish();
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + " is not valid JSON (" + e.what() + ")");
  }
  RunConfig c;
  read_config(j, c);
  return c;
}

/// Canonical JSON form of the configuration; its hash goes in the manifest.
inline json to_json(const RunConfig& c) {
  return {
      {"schema", kSchema},
      {"command", c.command},
      {"hamiltonian", {{"name", c.hamiltonian}, {"n", c.n}, {"rho", c.rho}}},
      {"manifold", {{"name", c.manifold}}},
      {"tolerances", {{"ode", c.ode_tol}, {"newton", c.newton_tol}}},
      {"h", c.h},
      {"E", c.E},
      {"output_dir", c.output_dir},
      {"seed", c.seed},
      {"plots", c.plots},
      {"flow", {{"x", c.flow.x}, {"p", c.flow.p}, {"t", c.flow.t}, {"samples", c.flow.samples}}},
      {"glancing", {{"phi_min", c.glancing.phi_min}, {"phi_max", c.glancing.phi_max}, {"x0", c.glancing.x0}}},
      {"classify",
       {{"case", c.classify.mixed_case},
        {"a", c.classify.a},
        {"alpha", c.classify.alpha},
        {"beta", c.classify.beta},
        {"gamma", c.classify.gamma},
        {"f1", c.classify.f1},
        {"f2", c.classify.f2},
        {"g", c.classify.g}}},
      {"density",
       {{"t_max", c.density.t_max},
        {"phi_min", c.density.phi_min},
        {"phi_max", c.density.phi_max},
        {"grid", c.density.grid}}},
      {"evaluate",
       {{"x1", c.evaluate.x1},
        {"x2", c.evaluate.x2},
        {"t0", c.evaluate.t0},
        {"compare_exact", c.evaluate.compare_exact},
        {"amplitude", c.evaluate.amplitude}}},
      {"transition",
       {{"window", c.transition.window}, {"samples", c.transition.samples}, {"u0", c.transition.u0}}},
  };
}

// ---------------------------------------------------------------------------
// Threads, hashing, artifacts

/// Worker count from GLANCE_THREADS, else the hardware concurrency.
inline int thread_count() {
  if (const char* s = std::getenv("GLANCE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (end == s || *end != '\0' || v < 1) throw ConfigError("GLANCE_THREADS: expected a positive integer, got '" + std::string(s) + "'");
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count) on up to thread_count() workers. The first
/// exception thrown by any task is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(thread_count()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next++;
        if (i >= count) return;
        {
          std::lock_guard<std::mutex> lock(m);
          if (error) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256: OpenSSL digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

/// Output directory with a record of every file written, for the manifest.
class Artifacts {
 public:
  explicit Artifacts(const std::string& dir) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ConfigError("output_dir: cannot create '" + dir + "': " + ec.message());
    const fs::path probe = dir_ / ".glance_write_probe";
    {
      std::ofstream p(probe);
      if (!p) throw ConfigError("output_dir: '" + dir + "' is not writable");
    }
    fs::remove(probe, ec);
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir_ / name).string());
    out << content;
    files_.push_back({{"path", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
  }

  const json& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  json files_ = json::array();
};

inline json library_versions() {
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  return {{"glance", kToolVersion},
          {"eigen", eigen.str()},
          {"boost", BOOST_LIB_VERSION},
          {"openssl", OPENSSL_VERSION_TEXT},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"cli11", CLI11_VERSION},
#if defined(__clang__)
          {"compiler", std::string("clang ") + __clang_version__},
#elif defined(__GNUC__)
          {"compiler", std::string("gcc ") + __VERSION__},
#else
          {"compiler", "unknown"},
#endif
          {"cxx_standard", static_cast<long>(__cplusplus)}};
}

// ---------------------------------------------------------------------------
// Commands

struct CommandResult {
  json summary;
  std::vector<std::string> lines;  // human-readable report
};

namespace detail {

inline Polynomial rho_of(const RunConfig& c) {
  return polynomial_from_json(c.rho, spatial_variable_names(c.n), "hamiltonian.rho");
}

inline Hamiltonian hamiltonian_of(const RunConfig& c) {
  if (c.hamiltonian.rfind("conformal", 0) != 0) return hamiltonians::by_name(c.hamiltonian, c.n, Polynomial());
  return hamiltonians::by_name(c.hamiltonian, c.n, rho_of(c));
}

inline Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::string csv_row(std::initializer_list<double> values) {
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  for (double v : values) {
    if (!first) os << ',';
    os << v;
    first = false;
  }
  os << '\n';
  return os.str();
}

inline std::string matrix_text(const Mat& A) {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < A.rows(); ++i) {
    os << (i ? ",(" : "(");
    for (int j = 0; j < A.cols(); ++j) os << (j ? "," : "") << format_number(A(i, j));
    os << ')';
  }
  os << ')';
  return os.str();
}

inline std::string vector_text(const Vec& v) {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < v.size(); ++i) os << (i ? "," : "") << format_number(v[i]);
  os << ')';
  return os.str();
}

// round to 1e-9 so printed values of exact closed forms come out clean
inline double tidy(double v) {
  const double r = std::round(v * 1e9) / 1e9;
  return r == 0.0 ? 0.0 : r;
}

inline Mat tidy(const Mat& A) { return A.unaryExpr([](double v) { return tidy(v); }); }

}  // namespace detail

inline CommandResult run_flow(const RunConfig& c, Artifacts& out) {
  const auto h = detail::hamiltonian_of(c);
  const PhasePoint z0(detail::to_vec(c.flow.x), detail::to_vec(c.flow.p));
  const auto traj = flow_trajectory(h, z0, c.flow.t, c.ode_tol);
  std::ostringstream csv;
  csv << "t";
  for (int i = 1; i <= c.n; ++i) csv << ",x" << i;
  for (int i = 1; i <= c.n; ++i) csv << ",p" << i;
  csv << ",H\n";
  csv.precision(17);
  const double H0 = h(z0);
  double drift = 0.0;
  for (int k = 0; k < c.flow.samples; ++k) {
    const double t = c.flow.t * k / (c.flow.samples - 1);
    const Vec y = traj.at(t);
    const PhasePoint z = PhasePoint::from_stacked(y);
    const double H = h(z);
    drift = std::max(drift, std::abs(H - H0));
    csv << t;
    for (int i = 0; i < y.size(); ++i) csv << ',' << y[i];
    csv << ',' << H << '\n';
  }
  out.write("flow.csv", csv.str());
  if (c.plots)
    out.write("flow.gp", "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'x1'\nset ylabel 'x2'\n"
                         "plot 'flow.csv' using 2:3 with lines title 'trajectory'\n");
  const PhasePoint end = PhasePoint::from_stacked(traj.final_state());
  CommandResult r;
  r.summary = {{"energy", H0}, {"energy_drift", drift}, {"steps", traj.steps()},
               {"x_end", std::vector<double>(end.x.data(), end.x.data() + end.x.size())},
               {"p_end", std::vector<double>(end.p.data(), end.p.data() + end.p.size())}};
  r.lines.push_back("H = " + format_number(H0) + ", max drift " + format_number(drift) + ", " +
                    std::to_string(traj.steps()) + " steps");
  r.lines.push_back("end point " + end.str());
  return r;
}

inline CommandResult run_glancing(const RunConfig& c, Artifacts& out) {
  if (c.n != 2) throw ConfigError("hamiltonian.n: glancing search is implemented for n = 2");
  Hamiltonian h;
  if (!c.glancing.x0.empty()) {
    const Polynomial rho = hamiltonians::rho_shifted_half(detail::to_vec(c.glancing.x0));
    if (c.hamiltonian == "conformal1")
      h = hamiltonians::conformal1(rho);
    else if (c.hamiltonian == "conformal2")
      h = hamiltonians::conformal2(rho);
    else
      throw ConfigError("glancing.x0: needs a conformal hamiltonian");
  } else {
    h = detail::hamiltonian_of(c);
  }
  GlancingSearchOptions opt;
  opt.phi_min = c.glancing.phi_min;
  opt.phi_max = c.glancing.phi_max;
  const auto found = glancing_search(h, opt);
  std::ostringstream csv;
  csv.precision(17);
  csv << "phi,psi,E0,kind,det,trace\n";
  CommandResult r;
  r.summary["points"] = json::array();
  for (const auto& g : found) {
    csv << g.phi << ',' << g.psi[0] << ',' << g.E0 << ',' << to_string(g.kind) << ',' << g.det() << ',' << g.trace()
        << '\n';
    r.summary["points"].push_back(
        {{"phi", g.phi}, {"psi", g.psi[0]}, {"E0", g.E0}, {"kind", to_string(g.kind)}, {"det", g.det()}, {"trace", g.trace()}});
    r.lines.push_back("phi=" + format_number(g.phi) + " psi=" + format_number(g.psi[0]) + " E0=" + format_number(g.E0) +
                      " " + to_string(g.kind) + " det=" + format_number(g.det()) + " trace=" + format_number(g.trace()));
  }
  out.write("glancing.csv", csv.str());
  r.lines.insert(r.lines.begin(), std::to_string(found.size()) + " glancing point(s)");
  return r;
}

inline CommandResult run_classify(const RunConfig& c, Artifacts& out) {
  const std::vector<std::string> vars{"x1", "x2", "p1", "p2"};
  const PhasePoint z(Vec::Zero(2), Vec::Zero(2));
  ScalarField f1, f2, g = model_glancing_g();
  std::string source;
  const auto& k = c.classify;
  if (!k.f1.empty() || !k.f2.empty()) {
    if (k.f1.empty() || k.f2.empty()) throw ConfigError("classify.f1: f1 and f2 must be given together");
    f1 = ScalarField::from_polynomial(polynomial_from_json(k.f1, vars, "classify.f1"));
    f2 = ScalarField::from_polynomial(polynomial_from_json(k.f2, vars, "classify.f2"));
    if (!k.g.empty()) g = ScalarField::from_polynomial(polynomial_from_json(k.g, vars, "classify.g"));
    source = "user polynomials";
  } else {
    const MixedCase mc = parse_mixed_case(k.mixed_case);
    const auto q = mc == MixedCase::IV ? quadratic_phase_case_iv(k.alpha, k.beta, k.gamma)
                                       : quadratic_phase_lagrangian(mc, k.a);
    if (mc == MixedCase::IV && !admissible_glancing_pair(q))
      throw NotGlancingError("case IV quadratic phase (alpha, beta, gamma) = (" + format_number(k.alpha) + ", " +
                             format_number(k.beta) + ", " + format_number(k.gamma) +
                             ") does not give a glancing pair transverse to F");
    f1 = q.f1;
    f2 = q.f2;
    source = "case " + k.mixed_case;
  }
  const auto p = pair_classification(f1, f2, g, z);
  const Mat A = detail::tidy(p.A);
  const Vec B = detail::tidy(Mat(p.B)).col(0);
  CommandResult r;
  r.summary = {{"source", source},
               {"A", {{A(0, 0), A(0, 1)}, {A(1, 0), A(1, 1)}}},
               {"B", {B[0], B[1]}},
               {"det_A", detail::tidy(p.det_A)},
               {"tBAB", detail::tidy(p.tBAB)},
               {"case", p.case_index},
               {"marginal", p.marginal}};
  r.lines.push_back("A_z = " + detail::matrix_text(A));
  r.lines.push_back("B_z = " + detail::vector_text(B));
  r.lines.push_back("det A_z = " + format_number(detail::tidy(p.det_A)) + ", tB A_z B = " + format_number(detail::tidy(p.tBAB)));
  r.lines.push_back("case " + std::to_string(p.case_index) + (p.marginal ? " (marginal: a sign test is near its tolerance)" : ""));
  out.write("classify.json", r.summary.dump(2) + "\n");
  return r;
}

inline CommandResult run_density(const RunConfig& c, Artifacts& out) {
  if (c.n != 2) throw ConfigError("hamiltonian.n: density sweeps are implemented for n = 2");
  const auto h = detail::hamiltonian_of(c);
  const auto& d = c.density;
  const BesselFlow flow(h, 2, d.t_max);
  const auto fam = prop2_family(h, 2, d.t_max);
  const auto y = prop2_density_coordinates(2);
  const int P = d.grid[0], Q = d.grid[1], T = d.grid[2];
  std::vector<std::string> rows(static_cast<std::size_t>(P));
  std::vector<double> worst(static_cast<std::size_t>(P), 0.0);
  parallel_for(rows.size(), [&](std::size_t a) {
    const double phi = P == 1 ? d.phi_min : d.phi_min + (d.phi_max - d.phi_min) * a / (P - 1);
    std::string block;
    for (int b = 0; b < Q; ++b)
      for (int k = 0; k < T; ++k) {
        const double psi = 2 * std::numbers::pi * b / Q, t = T == 1 ? 0.0 : d.t_max * k / (T - 1);
        const Vec psi_v = Vec::Constant(1, psi);
        const auto [th, xt] = prop2_chart_point(flow, phi, psi_v, t);
        const double F = invariant_density(fam, y, th, xt);
        const double D = flow.jet(phi, psi_v, t).det_P_Ppsi();
        worst[a] = std::max(worst[a], std::abs(std::abs(F) - std::abs(D)) / std::abs(D));
        block += detail::csv_row({phi, psi, t, F, D});
      }
    rows[a] = block;
  });
  std::string csv = "phi,psi,t,F,detPPpsi\n";
  for (const auto& b : rows) csv += b;
  out.write("density.csv", csv);
  if (c.plots)
    out.write("density.gp", "set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\nset ylabel 'F'\n"
                            "plot 'density.csv' using 3:4 with points title 'F', '' using 3:5 with points title 'det(P,P_psi)'\n");
  const double w = *std::max_element(worst.begin(), worst.end());
  CommandResult r;
  r.summary = {{"points", P * Q * T}, {"max_relative_mismatch", w}};
  r.lines.push_back(std::to_string(P * Q * T) + " grid points, max | |F| - |det(P,P_psi)| | / |det| = " + format_number(w));
  if (w > 1e-5) throw InvariantFailure("density identity |F| = |det(P, P_psi)| violated: relative mismatch " + format_number(w));
  return r;
}

inline CommandResult run_evaluate(const RunConfig& c, Artifacts& out) {
  if (c.n != 2) throw ConfigError("hamiltonian.n: evaluate is implemented for n = 2");
  int m = 0;
  Polynomial rho = detail::rho_of(c);
  if (c.hamiltonian == "conformal1") m = 1;
  if (c.hamiltonian == "conformal2") m = 2;
  if (c.hamiltonian == "free") {
    m = 2;
    rho = Polynomial::constant(2, 1.0);
  }
  if (m == 0) throw ConfigError("hamiltonian.name: evaluate needs free, conformal1 or conformal2");
  const bool free_case = m == 2 && rho.is_constant() && rho.constant_term() == 1.0;
  if (c.evaluate.compare_exact && !free_case)
    throw ConfigError("evaluate.compare_exact: the exact reference exists only for H = p^2 (free, or conformal2 with rho = 1)");
  const double h = c.h.front(), E = c.E.front(), t0 = c.evaluate.t0;
  std::function<double(double, double)> a = [](double, double) { return 1.0; };
  if (c.evaluate.amplitude == "bump") a = [](double phi, double) { return smooth_bump(std::abs(phi), 0.05, 3.0, 0.3); };
  const BesselWkbChart chart(rho, m, 2 * t0, a);
  const auto& g1 = c.evaluate.x1;
  const auto& g2 = c.evaluate.x2;
  const int n1 = static_cast<int>(g1[2]), n2 = static_cast<int>(g2[2]);
  std::vector<std::string> rows(static_cast<std::size_t>(n1));
  std::vector<double> diff(static_cast<std::size_t>(n1), 0.0);
  parallel_for(rows.size(), [&](std::size_t i) {
    const double x1 = n1 == 1 ? g1[0] : g1[0] + (g1[1] - g1[0]) * i / (n1 - 1);
    std::ostringstream os;
    os.precision(17);
    for (int j = 0; j < n2; ++j) {
      const double x2 = n2 == 1 ? g2[0] : g2[0] + (g2[1] - g2[0]) * j / (n2 - 1);
      const Vec x = Eigen::Vector2d(x1, x2);
      const cplx u = evaluate_time_integral(chart, x, E, h, t0);
      os << x1 << ',' << x2 << ',' << u.real() << ',' << u.imag() << ',' << std::abs(u);
      if (c.evaluate.compare_exact) {
        const double ref = std::sqrt(2 * std::numbers::pi / h) * exact_u1(x, h);
        const double d = std::abs(u - ref);
        diff[i] = std::max(diff[i], d);
        os << ',' << ref << ',' << d << ',' << helmholtz_residual(x, h, 1e-3);
      }
      os << '\n';
    }
    rows[i] = os.str();
  });
  std::string csv = "x1,x2,Re(u),Im(u),abs(u)";
  if (c.evaluate.compare_exact) csv += ",u_exact,abs_diff,pde_residual";
  csv += "\n";
  for (const auto& r : rows) csv += r;
  out.write("evaluate.csv", csv);
  if (c.plots)
    out.write("evaluate.gp", "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'x1'\nset ylabel 'x2'\n"
                             "splot 'evaluate.csv' using 1:2:5 with points title '|u|'\n");
  CommandResult r;
  r.summary = {{"points", n1 * n2}, {"h", h}, {"E", E}, {"t0", t0}};
  r.lines.push_back(std::to_string(n1 * n2) + " points at h = " + format_number(h) + ", E = " + format_number(E));
  if (c.evaluate.compare_exact) {
    const double d = *std::max_element(diff.begin(), diff.end());
    r.summary["max_abs_diff"] = d;
    r.lines.push_back("max |u - u_exact| = " + format_number(d));
  }
  return r;
}

inline CommandResult run_transition(const RunConfig& c, Artifacts& out) {
  if (c.n != 2) throw ConfigError("hamiltonian.n: transition sampling is implemented for n = 2");
  const auto h = detail::hamiltonian_of(c);
  ManifoldChart lambda0 = c.manifold == "bessel"       ? bessel_chart(2)
                          : c.manifold == "plane_wave" ? plane_wave_chart(2)
                                                       : vertical_fiber_chart(2);
  TransitionOptions opt;
  opt.u0 = detail::to_vec(c.transition.u0);
  opt.window = c.transition.window;
  opt.samples = c.transition.samples;
  const TransitionSampler sampler(h, lambda0, opt);
  std::vector<TransitionSample> samples(c.E.size());
  parallel_for(c.E.size(), [&](std::size_t i) { samples[i] = sampler.sample(c.E[i]); });
  CommandResult r;
  json list = json::array();
  std::string plot = "set datafile separator ','\nset key autotitle columnhead\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string tag = format_number(c.E[i]);
    std::ostringstream f1, f2;
    write_figure_tables(s, f1, f2);
    out.write("fig1_eps" + tag + ".csv", f1.str());
    out.write("fig2_eps" + tag + ".csv", f2.str());
    json e = {{"E", s.E},
              {"E0", s.E0},
              {"eps_proxy", s.eps_proxy},
              {"kind", to_string(s.kind)},
              {"regime", to_string(s.regime)},
              {"self_intersections", s.self_intersections},
              {"cusps", s.cusps.size()},
              {"diameter", s.regime == Regime::infinity_curve ? s.diameter() : 0.0},
              {"note", s.note}};
    list.push_back(e);
    std::string line = "E=" + tag + " eps_proxy=" + format_number(s.eps_proxy) + " regime=" + to_string(s.regime);
    if (s.regime == Regime::infinity_curve) {
      line += " self_intersections=" + std::to_string(s.self_intersections) + " cusps=" + std::to_string(s.cusps.size());
      plot += "set terminal pngcairo size 800,600\n";
      plot += "set output 'fig1_eps" + tag + ".png'\nset xlabel 'y'\nset ylabel 'p_y'\n";
      plot += "plot 'fig1_eps" + tag + ".csv' using 1:2 with lines title 'E=" + tag + "'\n";
      plot += "set output 'fig2_eps" + tag + ".png'\nset ylabel 'phase'\n";
      plot += "plot 'fig2_eps" + tag + ".csv' using 1:2 with lines title 'E=" + tag + "'\n";
    }
    r.lines.push_back(line);
  }
  r.summary = {{"E0", sampler.E0()}, {"kind", to_string(sampler.kind())}, {"samples", list}};
  out.write("transition.json", r.summary.dump(2) + "\n");
  if (c.plots) out.write("transition.gp", plot);
  r.lines.insert(r.lines.begin(), "glancing point E0 = " + format_number(sampler.E0()) + " (" + to_string(sampler.kind()) + ")");
  return r;
}

inline CommandResult run_verify_all(const RunConfig& c, Artifacts& out) {
  namespace ga = glance::acceptance;
  const auto criteria = ga::all_criteria();
  std::vector<ga::CriterionResult> results(criteria.size());
  ga::Options opt;
  opt.seed = c.seed;
  parallel_for(criteria.size(), [&](std::size_t i) {
    results[i] = ga::run_criterion(static_cast<int>(i + 1), criteria[i], opt);
  });
  CommandResult r;
  json list = json::array();
  std::vector<std::string> failed;
  for (const auto& x : results) {
    r.lines.push_back(ga::format_line(x));
    list.push_back({{"id", x.id}, {"name", x.name}, {"passed", x.passed}, {"detail", x.detail}});
    if (!x.passed) failed.push_back("[" + std::to_string(x.id) + "] " + x.name);
  }
  r.summary = {{"criteria", list}, {"passed", results.size() - failed.size()}, {"total", results.size()}};
  out.write("verify_all.json", r.summary.dump(2) + "\n");
  if (!failed.empty()) {
    std::string names;
    for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
    throw InvariantFailure("acceptance criteria failed: " + names);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Entry points

inline std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const InvariantFailure*>(&e)) return "invariant";
  if (dynamic_cast<const CausticError*>(&e)) return "caustic";
  if (dynamic_cast<const IntegrationError*>(&e)) return "integration";
  if (dynamic_cast<const EvaluationError*>(&e)) return "evaluation";
  if (dynamic_cast<const NotGlancingError*>(&e)) return "not-glancing";
  if (dynamic_cast<const NotLagrangianError*>(&e)) return "not-lagrangian";
  if (dynamic_cast<const NotApplicableError*>(&e)) return "not-applicable";
  if (dynamic_cast<const PreconditionError*>(&e)) return "precondition";
  if (dynamic_cast<const ChartBreakdownError*>(&e)) return "chart-breakdown";
  if (dynamic_cast<const DensityDegenerateError*>(&e)) return "density-degenerate";
  if (dynamic_cast<const DegenerateFamilyError*>(&e)) return "degenerate-family";
  if (dynamic_cast<const GlancingDetectedError*>(&e)) return "glancing-detected";
  if (dynamic_cast<const NoIntersectionError*>(&e)) return "no-intersection";
  if (dynamic_cast<const ValidityDomainError*>(&e)) return "validity-domain";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const UnsupportedError*>(&e)) return "unsupported";
  return "numeric";
}

/// Runs one validated configuration; writes artifacts and the manifest.
/// Throws ConfigError for schema problems and other glance errors for
/// numeric failures.
inline CommandResult run(const RunConfig& c) {
  validate(c);
  Artifacts out(c.output_dir);
  CommandResult r;
  if (c.command == "flow") r = run_flow(c, out);
  else if (c.command == "glancing") r = run_glancing(c, out);
  else if (c.command == "classify") r = run_classify(c, out);
  else if (c.command == "density") r = run_density(c, out);
  else if (c.command == "evaluate") r = run_evaluate(c, out);
  else if (c.command == "transition") r = run_transition(c, out);
  else r = run_verify_all(c, out);
  const json cfg = to_json(c);
  const json manifest = {{"schema", kSchema},
                         {"command", c.command},
                         {"config", cfg},
                         {"config_sha256", sha256_hex(cfg.dump())},
                         {"seed", c.seed},
                         {"versions", library_versions()},
                         {"files", out.files()}};
  std::ofstream m(out.dir() / "manifest.json");
  if (!m) throw Error("cannot write manifest.json");
  m << manifest.dump(2) << '\n';
  r.summary["output_dir"] = c.output_dir;
  r.summary["files"] = out.files();
  return r;
}

namespace detail {

inline std::optional<std::string> find_config_arg(int argc, const char* const* argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return std::nullopt;
}

}  // namespace detail

/// Command-line front end. Returns the process exit code.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig c;
  bool as_json = false;
  bool no_plots = false;
  std::string config_path;
  std::string rho_text;
  try {
    // a config file supplies defaults; explicit flags override it
    if (auto p = detail::find_config_arg(argc, argv)) c = load_config_file(*p);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return config_error;
  }

  CLI::App app{"Glancing-point numerics for Hamiltonian flow-outs of Lagrangian manifolds", "glance"};
  app.set_help_flag("--help", "print this help and exit");
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", config_path, "JSON run configuration (schema " + std::string(kSchema) + ")");
  app.add_flag("--json", as_json, "print a machine-readable summary");
  app.add_option("-o,--out", c.output_dir, "output directory")->capture_default_str();
  app.add_option("--seed", c.seed, "seed for sampled checks")->capture_default_str();
  app.add_flag("--no-plots", no_plots, "do not write gnuplot scripts");
  app.add_option("--hamiltonian", c.hamiltonian, "pn, free, py, conformal1 or conformal2")->capture_default_str();
  app.add_option("--n", c.n, "configuration-space dimension")->capture_default_str();
  app.add_option("--rho", rho_text, "rho as a polynomial in x, y[, z]");
  app.add_option("--manifold", c.manifold, "bessel, plane_wave or vertical_fiber")->capture_default_str();
  app.add_option("--ode-tol", c.ode_tol, "ODE tolerance")->capture_default_str();
  app.add_option("--h", c.h, "semiclassical parameter(s)")->delimiter(',');
  app.add_option("--E", c.E, "energy value(s)")->delimiter(',');

  auto* flow = app.add_subcommand("flow", "integrate one Hamiltonian trajectory");
  flow->add_option("--x", c.flow.x, "initial position")->delimiter(',');
  flow->add_option("--p", c.flow.p, "initial momentum")->delimiter(',');
  flow->add_option("--t", c.flow.t, "final time")->capture_default_str();
  flow->add_option("--samples", c.flow.samples, "output rows")->capture_default_str();

  auto* glancing = app.add_subcommand("glancing", "find glancing points on the Bessel cylinder");
  glancing->add_option("--phi-min", c.glancing.phi_min)->capture_default_str();
  glancing->add_option("--phi-max", c.glancing.phi_max)->capture_default_str();
  glancing->add_option("--x0", c.glancing.x0, "use rho = (1 + |x - x0|^2)/2")->delimiter(',');

  auto* classify = app.add_subcommand("classify", "brackets A_z, B_z and the case index of a glancing pair");
  classify->add_option("--case", c.classify.mixed_case, "I, II, III or IV")->capture_default_str();
  classify->add_option("--a", c.classify.a, "parameter of cases I-III")->capture_default_str();
  classify->add_option("--alpha", c.classify.alpha)->capture_default_str();
  classify->add_option("--beta", c.classify.beta)->capture_default_str();
  classify->add_option("--gamma", c.classify.gamma)->capture_default_str();
  classify->add_option("--f1", c.classify.f1, "defining function in x1,x2,p1,p2");
  classify->add_option("--f2", c.classify.f2, "defining function in x1,x2,p1,p2");
  classify->add_option("--g", c.classify.g, "energy function in x1,x2,p1,p2");

  auto* density = app.add_subcommand("density", "invariant density against det(P, P_psi) on a grid");
  density->add_option("--t-max", c.density.t_max)->capture_default_str();
  density->add_option("--phi-min", c.density.phi_min)->capture_default_str();
  density->add_option("--phi-max", c.density.phi_max)->capture_default_str();
  density->add_option("--grid", c.density.grid, "phi,psi,t node counts")->delimiter(',');

  auto* evaluate = app.add_subcommand("evaluate", "time integral of the WKB chart over an x grid");
  evaluate->add_option("--x1", c.evaluate.x1, "min,max,count")->delimiter(',');
  evaluate->add_option("--x2", c.evaluate.x2, "min,max,count")->delimiter(',');
  evaluate->add_option("--t0", c.evaluate.t0, "cutoff time")->capture_default_str();
  evaluate->add_flag("--compare-exact", c.evaluate.compare_exact, "add the J1 reference (H = p^2)");
  evaluate->add_option("--amplitude", c.evaluate.amplitude, "one or bump")->capture_default_str();

  auto* transition = app.add_subcommand("transition", "sections of the flow-out near a glancing extremum");
  transition->add_option("--window", c.transition.window)->capture_default_str();
  transition->add_option("--samples", c.transition.samples)->capture_default_str();
  transition->add_option("--u0", c.transition.u0, "glancing point in chart parameters")->delimiter(',');

  app.add_subcommand("verify-all", "run the acceptance criteria");

  const bool has_config = detail::find_config_arg(argc, argv).has_value();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : config_error;
  }
  for (auto* s : app.get_subcommands()) c.command = s->get_name();
  // without a config file, transition defaults to the plane-wave example
  if (!has_config && c.command == "transition") {
    if (app.count("--hamiltonian") == 0) c.hamiltonian = "conformal2";
    if (app.count("--manifold") == 0) c.manifold = "plane_wave";
  }
  if (!rho_text.empty()) c.rho = rho_text;
  if (no_plots) c.plots = false;

  try {
    const CommandResult r = run(c);
    if (as_json) {
      json s = r.summary;
      s["command"] = c.command;
      s["status"] = "ok";
      out << s.dump(2) << '\n';
    } else {
      for (const auto& l : r.lines) out << l << '\n';
    }
    return ok;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    if (as_json) out << json{{"command", c.command}, {"status", "config-error"}, {"error", e.what()}}.dump(2) << '\n';
    return config_error;
  } catch (const std::exception& e) {
    err << c.command << ": numeric failure (" << error_kind(e) << "): " << e.what() << '\n';
    if (as_json)
      out << json{{"command", c.command}, {"status", "numeric-failure"}, {"invariant", error_kind(e)}, {"error", e.what()}}
                 .dump(2)
          << '\n';
    return numeric_failure;
  }
}

}  // namespace glance::cli
