#pragma once

#include "json.hpp"
#include "skewlab/cone_field.hpp"
#include "skewlab/skew_product.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace skewlab {

using ordered_json = nlohmann::ordered_json;

struct ConfigError : Error {
  std::string field;  // dotted path of the offending entry, empty for file-level faults
  ConfigError(std::string field_in, const std::string& msg)
      : Error(field_in.empty() ? msg : field_in + ": " + msg),
        field(std::move(field_in)) {}
};

struct GridConfig {
  int profile_points = 10000;   // monotonicity and derivative grid per stage
  int roundtrip_points = 10000; // random points for the map round trip
  int cone_directions = 64;     // boundary directions sampled per cone
  int cone_time_samples = 5;    // shear times on [-t, t] in the rescale sweep
  int switch_points = 100;      // base points per distinguished fiber
  int domination_points = 1000; // sampled points for the finite-time gaps
  int monotone_points = 100;    // points for the window-growth comparison
  int sandwich = 16;            // per-axis grid of the absolute rate check
  int nested_points = 64;       // points per level of the nested check
  int witness_x = 32;           // unit-leg starts across the base
  int witness_z = 8;            // unit-leg starts across the band
  int fall_curves = 16;         // descents integrated to the floor
  int dichotomy_points = 1000;  // random points of the sign dichotomy
};

struct IterationConfig {
  int bundle_window = 60;      // power-iteration window of bundle estimates
  int lyapunov_steps = 10000;  // QR cocycle steps
  int domination_window = 32;  // finite-time window of the gap check
  int domination_low = 8;      // window-growth comparison endpoints
  int domination_high = 64;
  int falln_k = 3;             // band index of the deep-descent check
  int nested_window = 32;      // finite-time window of the nested check
};

struct ToleranceConfig {
  double fd_agreement = 1e-6;     // derivative vs central differences
  double roundtrip = 1e-9;        // f then f^{-1} displacement
  double chain_rule = 1e-10;      // Df^{-1} Df deviation from the identity
  double switch_angle = 1e-6;     // bundle angle at the distinguished fibers
  double lyapunov = 1e-3;         // exponent error against the fiber spectrum
  double nested_angle = 1e-4;     // stable-plane angle of multi-stage towers
  double terminal_height = 1e-8;  // descent floor as a fraction of c
  double length_slack = 1.05;     // allowance over the L / (1 - eta) bound
  double selfcheck = 0.005;       // endpoint agreement under step halving
  double exponent_sum = 1e-10;    // exponent sum vs volume growth
};

struct RunConfig {
  int schema_version = 1;
  std::string base = "cat-map";
  std::vector<std::vector<double>> matrix;  // integer entries; empty: named default
  int flow_steps = 2;                       // suspension return time in unit flow steps
  std::string mode = "diffeo";
  std::string field_style = "aligned";
  int depth = 1;
  bool doubling = false;
  std::vector<ShearProfileParams> profile = {ShearProfileParams{}};  // one entry per stage
  double eps0 = 0.05;
  double aperture = 0.5;
  double margin_floor = 1e-3;
  double step = 0.02;
  std::uint64_t seed = 0x5EED;
  int threads = 0;  // 0: keep the process-wide worker count
  std::string out_dir = "out";
  GridConfig grids;
  IterationConfig iterations;
  ToleranceConfig tolerances;
};

namespace detail {

inline std::string json_kind(const ordered_json& v) {
  switch (v.type()) {
    case ordered_json::value_t::null: return "null";
    case ordered_json::value_t::object: return "an object";
    case ordered_json::value_t::array: return "an array";
    case ordered_json::value_t::string: return "a string";
    case ordered_json::value_t::boolean: return "a boolean";
    case ordered_json::value_t::binary: return "binary data";
    default: return "a number";
  }
}

// Typed field access over one JSON object with consumed-key tracking, so a
// misspelled key is reported instead of silently falling back to a default.
class Fields {
 public:
  Fields(const ordered_json& j, std::string where)
      : j_(j), where_(std::move(where)) {
    if (!j_.is_object())
      throw ConfigError(where_, "expected an object, got " + json_kind(j_));
  }

  std::string path(const std::string& key) const {
    return where_.empty() ? key : where_ + "." + key;
  }

  bool has(const char* key) const { return j_.contains(key); }

  const ordered_json& child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const char* key, double fallback) {
    if (!has(key)) return fallback;
    const ordered_json& v = child(key);
    if (!v.is_number())
      throw ConfigError(path(key), "expected a number, got " + json_kind(v));
    return v.get<double>();
  }

  long long integer(const char* key, long long fallback) {
    if (!has(key)) return fallback;
    const ordered_json& v = child(key);
    if (!v.is_number_integer())
      throw ConfigError(path(key), "expected an integer, got " + json_kind(v));
    return v.get<long long>();
  }

  std::uint64_t uint64(const char* key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const ordered_json& v = child(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError(path(key),
                        "expected a nonnegative integer, got " + json_kind(v));
    return v.get<std::uint64_t>();
  }

  bool boolean(const char* key, bool fallback) {
    if (!has(key)) return fallback;
    const ordered_json& v = child(key);
    if (!v.is_boolean())
      throw ConfigError(path(key), "expected a boolean, got " + json_kind(v));
    return v.get<bool>();
  }

  std::string text(const char* key, std::string fallback) {
    if (!has(key)) return fallback;
    const ordered_json& v = child(key);
    if (!v.is_string())
      throw ConfigError(path(key), "expected a string, got " + json_kind(v));
    return v.get<std::string>();
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError(path(it.key()), "unknown key");
  }

 private:
  const ordered_json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline int positive_int(Fields& f, const char* key, int fallback) {
  long long v = f.integer(key, fallback);
  if (v < 1) throw ConfigError(f.path(key), "must be at least 1");
  if (v > 100000000) throw ConfigError(f.path(key), "implausibly large");
  return static_cast<int>(v);
}

inline double positive_number(Fields& f, const char* key, double fallback) {
  double v = f.number(key, fallback);
  if (!(v > 0.0))
    throw ConfigError(f.path(key), "must be positive, got " + fmt_g17(v));
  return v;
}

inline ShearProfileParams profile_from_json(const ordered_json& j,
                                            const std::string& where) {
  Fields f(j, where);
  ShearProfileParams p;
  p.lambda = f.number("lambda", p.lambda);
  p.eta = f.number("eta", p.eta);
  p.mu = f.number("mu", p.mu);
  p.a = f.number("a", p.a);
  p.N = f.number("N", p.N);
  p.validation_grid = positive_int(f, "validation_grid", p.validation_grid);
  f.done();
  if (!(0.0 < p.lambda && p.lambda < p.eta && p.eta < 1.0 && 1.0 < p.mu))
    throw ConfigError(where, "requires 0 < lambda < eta < 1 < mu; got lambda = " +
                                 fmt_g17(p.lambda) + ", eta = " + fmt_g17(p.eta) +
                                 ", mu = " + fmt_g17(p.mu));
  if (!(0.0 < p.a && p.a < 1.0))
    throw ConfigError(where, "requires 0 < a < 1; got a = " + fmt_g17(p.a));
  if (!(p.N >= 1.0))
    throw ConfigError(where, "requires N >= 1; got N = " + fmt_g17(p.N));
  return p;
}

inline std::vector<std::vector<double>> matrix_from_json(const ordered_json& j,
                                                         const std::string& where) {
  if (!j.is_array() || j.empty())
    throw ConfigError(where, "expected a nonempty array of rows");
  size_t n = j.size();
  std::vector<std::vector<double>> rows;
  for (size_t i = 0; i < n; ++i) {
    const ordered_json& r = j[i];
    std::string rw = where + "[" + std::to_string(i) + "]";
    if (!r.is_array() || r.size() != n)
      throw ConfigError(rw, "matrix must be square; expected " +
                                std::to_string(n) + " entries");
    std::vector<double> row;
    for (size_t k = 0; k < n; ++k) {
      if (!r[k].is_number())
        throw ConfigError(rw, "entries must be numbers");
      double v = r[k].get<double>();
      if (v != std::floor(v))
        throw ConfigError(rw, "entries must be integers, got " + fmt_g17(v));
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

// Integer entries of the base map: the named default, or the configured
// override.
inline std::vector<std::vector<double>> config_matrix(const RunConfig& cfg) {
  if (!cfg.matrix.empty()) return cfg.matrix;
  if (cfg.base == "t3-one-stable")
    return {{0, 0, 1}, {1, 0, -6}, {0, 1, 5}};
  if (cfg.base == "t3-two-stable")
    return {{0, 0, 1}, {1, 0, -5}, {0, 1, 6}};
  return {{2, 1}, {1, 1}};
}

inline RunConfig config_from_json(const ordered_json& j) {
  detail::Fields top(j, "");
  RunConfig cfg;

  cfg.schema_version = static_cast<int>(top.integer("schema_version", 1));
  if (cfg.schema_version != 1)
    throw ConfigError("schema_version", "this build reads schema 1, got " +
                                            std::to_string(cfg.schema_version));

  cfg.base = top.text("base", cfg.base);
  static const std::set<std::string> bases = {
      "cat-map", "t3-one-stable", "t3-two-stable", "suspension-flow"};
  if (!bases.count(cfg.base))
    throw ConfigError("base", "unknown base \"" + cfg.base +
                                  "\"; expected cat-map | t3-one-stable | "
                                  "t3-two-stable | suspension-flow");

  if (top.has("matrix"))
    cfg.matrix = detail::matrix_from_json(top.child("matrix"), "matrix");
  if (cfg.base == "suspension-flow" && !cfg.matrix.empty() && cfg.matrix.size() != 2)
    throw ConfigError("matrix", "the suspension fiber map must be 2 x 2");

  cfg.flow_steps = static_cast<int>(top.integer("flow_steps", cfg.flow_steps));
  if (top.has("flow_steps") && cfg.base != "suspension-flow")
    throw ConfigError("flow_steps", "applies only to the suspension-flow base");
  if (cfg.flow_steps < 1) throw ConfigError("flow_steps", "must be at least 1");

  cfg.mode = top.text("mode", cfg.mode);
  if (cfg.mode != "diffeo" && cfg.mode != "flow")
    throw ConfigError("mode", "expected diffeo | flow, got \"" + cfg.mode + "\"");
  if (cfg.mode == "flow" && cfg.base != "suspension-flow")
    throw ConfigError("mode", "flow mode requires the suspension-flow base");

  cfg.field_style = top.text("field_style", cfg.field_style);
  if (cfg.field_style != "aligned" && cfg.field_style != "full-stable")
    throw ConfigError("field_style", "expected aligned | full-stable, got \"" +
                                         cfg.field_style + "\"");

  cfg.depth = static_cast<int>(top.integer("depth", cfg.depth));
  if (cfg.depth < 1) throw ConfigError("depth", "must be at least 1");
  cfg.doubling = top.boolean("doubling", cfg.doubling);

  cfg.profile.clear();
  if (top.has("profile")) {
    const ordered_json& pj = top.child("profile");
    if (pj.is_array()) {
      if (static_cast<int>(pj.size()) != cfg.depth)
        throw ConfigError("profile", "one entry per stage is required; got " +
                                         std::to_string(pj.size()) +
                                         " for depth " + std::to_string(cfg.depth));
      for (size_t k = 0; k < pj.size(); ++k)
        cfg.profile.push_back(detail::profile_from_json(
            pj[k], "profile[" + std::to_string(k) + "]"));
    } else {
      if (cfg.depth != 1)
        throw ConfigError("profile",
                          "depth " + std::to_string(cfg.depth) +
                              " needs an array of per-stage entries, since the "
                              "stage constants must strictly decrease");
      cfg.profile.push_back(detail::profile_from_json(pj, "profile"));
    }
  } else {
    if (cfg.depth != 1)
      throw ConfigError("profile", "required for depth > 1");
    cfg.profile.push_back(ShearProfileParams{});
  }

  if (cfg.mode == "flow") {
    const ShearProfileParams& p = cfg.profile[0];
    double etaN = std::pow(p.eta, cfg.flow_steps);
    if (!(etaN < p.lambda))
      throw ConfigError("profile",
                        "flow mode requires eta^N < lambda so the slow flow "
                        "branch still contracts faster than any fiber rate; "
                        "got eta^N = " + fmt_g17(etaN) + " with lambda = " +
                            fmt_g17(p.lambda));
  }

  cfg.eps0 = detail::positive_number(top, "eps0", cfg.eps0);
  cfg.aperture = detail::positive_number(top, "aperture", cfg.aperture);
  cfg.margin_floor = detail::positive_number(top, "margin_floor", cfg.margin_floor);
  cfg.step = detail::positive_number(top, "step", cfg.step);
  cfg.seed = top.uint64("seed", cfg.seed);
  cfg.threads = static_cast<int>(top.integer("threads", cfg.threads));
  if (cfg.threads < 0) throw ConfigError("threads", "must be nonnegative");
  cfg.out_dir = top.text("out_dir", cfg.out_dir);
  if (cfg.out_dir.empty()) throw ConfigError("out_dir", "must not be empty");

  if (top.has("grids")) {
    detail::Fields g(top.child("grids"), "grids");
    GridConfig& v = cfg.grids;
    v.profile_points = detail::positive_int(g, "profile_points", v.profile_points);
    v.roundtrip_points = detail::positive_int(g, "roundtrip_points", v.roundtrip_points);
    v.cone_directions = detail::positive_int(g, "cone_directions", v.cone_directions);
    v.cone_time_samples = detail::positive_int(g, "cone_time_samples", v.cone_time_samples);
    v.switch_points = detail::positive_int(g, "switch_points", v.switch_points);
    v.domination_points = detail::positive_int(g, "domination_points", v.domination_points);
    v.monotone_points = detail::positive_int(g, "monotone_points", v.monotone_points);
    v.sandwich = detail::positive_int(g, "sandwich", v.sandwich);
    if (v.sandwich % 2 != 0)
      throw ConfigError("grids.sandwich",
                        "must be even, half inside and half outside the ramp");
    v.nested_points = detail::positive_int(g, "nested_points", v.nested_points);
    v.witness_x = detail::positive_int(g, "witness_x", v.witness_x);
    v.witness_z = detail::positive_int(g, "witness_z", v.witness_z);
    v.fall_curves = detail::positive_int(g, "fall_curves", v.fall_curves);
    v.dichotomy_points = detail::positive_int(g, "dichotomy_points", v.dichotomy_points);
    g.done();
  }

  if (top.has("iterations")) {
    detail::Fields it(top.child("iterations"), "iterations");
    IterationConfig& v = cfg.iterations;
    v.bundle_window = detail::positive_int(it, "bundle_window", v.bundle_window);
    v.lyapunov_steps = detail::positive_int(it, "lyapunov_steps", v.lyapunov_steps);
    v.domination_window = detail::positive_int(it, "domination_window", v.domination_window);
    v.domination_low = detail::positive_int(it, "domination_low", v.domination_low);
    v.domination_high = detail::positive_int(it, "domination_high", v.domination_high);
    if (v.domination_low >= v.domination_high)
      throw ConfigError("iterations.domination_low",
                        "must be smaller than domination_high");
    v.falln_k = static_cast<int>(it.integer("falln_k", v.falln_k));
    if (v.falln_k < 0)
      throw ConfigError("iterations.falln_k", "must be nonnegative");
    v.nested_window = detail::positive_int(it, "nested_window", v.nested_window);
    it.done();
  }

  if (top.has("tolerances")) {
    detail::Fields tl(top.child("tolerances"), "tolerances");
    ToleranceConfig& v = cfg.tolerances;
    v.fd_agreement = detail::positive_number(tl, "fd_agreement", v.fd_agreement);
    v.roundtrip = detail::positive_number(tl, "roundtrip", v.roundtrip);
    v.chain_rule = detail::positive_number(tl, "chain_rule", v.chain_rule);
    v.switch_angle = detail::positive_number(tl, "switch_angle", v.switch_angle);
    v.lyapunov = detail::positive_number(tl, "lyapunov", v.lyapunov);
    v.nested_angle = detail::positive_number(tl, "nested_angle", v.nested_angle);
    v.terminal_height = detail::positive_number(tl, "terminal_height", v.terminal_height);
    v.length_slack = detail::positive_number(tl, "length_slack", v.length_slack);
    if (v.length_slack < 1.0)
      throw ConfigError("tolerances.length_slack", "must be at least 1");
    v.selfcheck = detail::positive_number(tl, "selfcheck", v.selfcheck);
    v.exponent_sum = detail::positive_number(tl, "exponent_sum", v.exponent_sum);
    tl.done();
  }

  top.done();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("", "config parse failure in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// Manifest echo in fixed key order, with every default materialized, so a
// report names the exact run it certifies.
inline ordered_json config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["schema_version"] = cfg.schema_version;
  j["base"] = cfg.base;
  j["matrix"] = config_matrix(cfg);
  if (cfg.base == "suspension-flow") j["flow_steps"] = cfg.flow_steps;
  j["mode"] = cfg.mode;
  j["field_style"] = cfg.field_style;
  j["depth"] = cfg.depth;
  j["doubling"] = cfg.doubling;
  ordered_json stages = ordered_json::array();
  for (const ShearProfileParams& p : cfg.profile) {
    ordered_json s;
    s["lambda"] = p.lambda;
    s["eta"] = p.eta;
    s["mu"] = p.mu;
    s["a"] = p.a;
    s["N"] = p.N;
    s["validation_grid"] = p.validation_grid;
    stages.push_back(std::move(s));
  }
  j["profile"] = std::move(stages);
  j["eps0"] = cfg.eps0;
  j["aperture"] = cfg.aperture;
  j["margin_floor"] = cfg.margin_floor;
  j["step"] = cfg.step;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["out_dir"] = cfg.out_dir;
  const GridConfig& g = cfg.grids;
  j["grids"] = {{"profile_points", g.profile_points},
                {"roundtrip_points", g.roundtrip_points},
                {"cone_directions", g.cone_directions},
                {"cone_time_samples", g.cone_time_samples},
                {"switch_points", g.switch_points},
                {"domination_points", g.domination_points},
                {"monotone_points", g.monotone_points},
                {"sandwich", g.sandwich},
                {"nested_points", g.nested_points},
                {"witness_x", g.witness_x},
                {"witness_z", g.witness_z},
                {"fall_curves", g.fall_curves},
                {"dichotomy_points", g.dichotomy_points}};
  const IterationConfig& it = cfg.iterations;
  j["iterations"] = {{"bundle_window", it.bundle_window},
                     {"lyapunov_steps", it.lyapunov_steps},
                     {"domination_window", it.domination_window},
                     {"domination_low", it.domination_low},
                     {"domination_high", it.domination_high},
                     {"falln_k", it.falln_k},
                     {"nested_window", it.nested_window}};
  const ToleranceConfig& tl = cfg.tolerances;
  j["tolerances"] = {{"fd_agreement", tl.fd_agreement},
                     {"roundtrip", tl.roundtrip},
                     {"chain_rule", tl.chain_rule},
                     {"switch_angle", tl.switch_angle},
                     {"lyapunov", tl.lyapunov},
                     {"nested_angle", tl.nested_angle},
                     {"terminal_height", tl.terminal_height},
                     {"length_slack", tl.length_slack},
                     {"selfcheck", tl.selfcheck},
                     {"exponent_sum", tl.exponent_sum}};
  return j;
}

inline BaseSystem resolve_base(const RunConfig& cfg) {
  std::vector<std::vector<double>> rows = config_matrix(cfg);
  int n = static_cast<int>(rows.size());
  MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) m(i, k) = rows[i][k];
  if (cfg.base == "suspension-flow") return make_suspension_base(m, cfg.flow_steps);
  return make_toral_base(m);
}

// The constructed tower together with the cone certification that resolved
// its field size eps: families are built at the configured aperture, then eps
// is halved from eps0 until every perturbed inclusion clears the margin floor
// across the shear-time sweep. Cone data is copied out flat; the quadratic
// forms themselves are cheap to rebuild on demand.
struct TowerBuild {
  RunConfig config;
  BaseSystem base;
  std::vector<ShearProfile> profs;
  RescaleResult rescale;
  MarginRows time_zero;  // margins certified while assembling the families
  bool given_x = false;  // full-stable style, bootstrapped from the field X
  int power = 0;
  double power_margin = 0.0;
  double zero_margin = 0.0;
  double c_const = 0.0;
  double x_in_b = 0.0;
  double x_pullback_in_e = 0.0;
  SwitchTower tower;
};

inline TowerBuild build_tower(const RunConfig& cfg) {
  TowerBuild tb;
  tb.config = cfg;
  try {
    tb.base = resolve_base(cfg);
    for (size_t k = 0; k < cfg.profile.size(); ++k)
      tb.profs.push_back(ShearProfile::build(cfg.profile[k]));

    if (cfg.field_style == "aligned") {
      StandardCones sc =
          build_standard_cones(tb.base, cfg.aperture, 0.0,
                               cfg.grids.cone_directions, cfg.seed);
      tb.rescale = rescale_X_epsilon(tb.base, standard_inclusion_specs(sc),
                                     cfg.eps0, cfg.margin_floor, 1.0,
                                     cfg.grids.cone_time_samples,
                                     cfg.grids.cone_directions, cfg.seed);
      tb.time_zero = sc.margins;
    } else {
      VectorXd x = VectorXd::Zero(tb.base.dim());
      for (int i = 0; i < tb.base.stable_count(); ++i) x[i] = 1.0;
      GivenXOptions gopt;
      gopt.aperture = cfg.aperture;
      gopt.directions = cfg.grids.cone_directions;
      gopt.seed = cfg.seed;
      GivenXCones gx = build_cones_given_X(tb.base, {x}, gopt);
      tb.rescale = rescale_X_epsilon(tb.base, given_x_inclusion_specs(gx),
                                     cfg.eps0, cfg.margin_floor, 1.0,
                                     cfg.grids.cone_time_samples,
                                     cfg.grids.cone_directions, cfg.seed);
      tb.time_zero = gx.margins;
      tb.given_x = true;
      tb.power = gx.power;
      tb.power_margin = gx.power_margin;
      tb.zero_margin = gx.zero_margin;
      tb.c_const = gx.C_const;
      tb.x_in_b = gx.x_in_B;
      tb.x_pullback_in_e = gx.x_pullback_in_E;
    }

    tb.tower = SwitchTower::build(
        tb.base, tb.profs,
        cfg.mode == "flow" ? TowerMode::flow : TowerMode::diffeo,
        cfg.field_style == "aligned" ? FieldStyle::aligned : FieldStyle::full_stable,
        cfg.depth, cfg.doubling, tb.rescale.eps);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("", e.what());
  }
  return tb;
}

}  // namespace skewlab
