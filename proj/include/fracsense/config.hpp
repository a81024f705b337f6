#pragma once

// Experiment configuration: sectioned key-value text and the shipped presets.
//
//   # comment
//   [section]
//   key = value
//
// Complex values are written as two numbers "re im". Sections and keys are
// listed in write_config(); unknown sections or keys are errors.

#include "fracsense/glsm.hpp"
#include "fracsense/fod_inversion.hpp"
#include "fracsense/patterns.hpp"
#include "fracsense/stiffness_inversion.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

namespace fracsense {

class ConfigError : public Error {
 public:
  ConfigError(int line, const std::string& key, const std::string& msg)
      : Error("config", (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                            (key.empty() ? std::string() : "key '" + key + "': ") + msg),
        line_(line),
        key_(key) {}
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

struct ExperimentConfig {
  std::string name = "zebra-mini";
  // [geometry] cylindrical patch
  double width = 0.7, arclength = 0.55, radius = 0.35;
  int n_arc = 8, n_width = 10;
  // [medium]
  double rho = 1.0, c_s = 1.0, c_p = 2.08;
  // [frequency]
  double lambda_s_over_ell = 0.7;
  // [grid]
  int n_theta = 12, n_phi = 8;
  // [stiffness]
  PatternParams pattern;
  // [noise]
  double noise_level = 0.05;
  std::uint64_t seed = 7;
  // [sampling] GLSM sampling box and spacing
  Vec3 box_lo{-0.45, -0.5, -0.05}, box_hi{0.45, 0.5, 0.6};
  double sampling_h = 0.05;
  // [inversion]
  double alpha_factor = GlsmParams::kDefaultAlphaFactor;
  double glsm_delta = 0.0;        ///< relative GLSM noise bound; 0: the noise level
  double q_fraction = kDefaultQFraction;
  double delta_trunc = kDefaultDeltaTrunc;
  double tau = 0.2;
  int fit_degree = 2;
  int fields = 16;                ///< recombined illuminations stacked in the stiffness solve
  StiffnessMode mode = StiffnessMode::Diagonal;

  ElasticMedium medium() const { return ElasticMedium::from_speeds(rho, c_p, c_s); }
  double lambda_s() const { return lambda_s_over_ell * arclength; }
  double omega() const { return 2.0 * kPi * c_s / lambda_s(); }
  ObservationGrid grid() const { return ObservationGrid(n_theta, n_phi); }
  FractureMesh true_mesh() const { return build_cylindrical_patch(width, arclength, radius, n_arc, n_width); }
  StiffnessField truth() const {
    PatternParams p = pattern;
    p.width = width;
    p.arclength = arclength;
    p.radius = radius;
    return make_stiffness_pattern(p);
  }
  /// Noise bound used by every regularized stage.
  double inversion_delta() const { return std::max(noise_level, 1e-6); }
  double glsm_noise() const { return glsm_delta > 0 ? glsm_delta : std::max(noise_level, 1e-3); }
  SamplingGrid sampling() const {
    SamplingGrid g;
    g.lo = box_lo;
    g.hi = box_hi;
    for (int a = 0; a < 3; ++a) {
      const int n = static_cast<int>(std::lround((box_hi[a] - box_lo[a]) / sampling_h)) + 1;
      (a == 0 ? g.nx : a == 1 ? g.ny : g.nz) = std::max(n, 2);
    }
    return g;
  }
  SurfaceFitOptions fit_options() const {
    SurfaceFitOptions o;
    o.n_u = n_width;  // longest principal axis of the cylinder patch is its width
    o.n_v = n_arc;
    o.degree = fit_degree;
    return o;
  }

  void validate() const {
    if (!(width > 0 && arclength > 0 && radius > 0)) throw ConfigError(0, "geometry", "dimensions must be positive");
    if (n_arc < 2 || n_width < 2) throw ConfigError(0, "geometry", "need at least 2 elements per direction");
    if (n_theta < 1 || n_phi < 1) throw ConfigError(0, "grid", "empty observation grid");
    if ((n_arc - 1) * (n_width - 1) >= n_theta * n_phi)
      throw ConfigError(0, "geometry", "free nodes must be fewer than observation directions");
    try {
      medium().validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(0, "medium", e.what());
    }
    if (!(lambda_s_over_ell > 0)) throw ConfigError(0, "lambda_s_over_ell", "must be positive");
    if (!(noise_level >= 0)) throw ConfigError(0, "level", "must be non-negative");
    if (!(sampling_h > 0) || !((box_hi - box_lo).minCoeff() > 0)) throw ConfigError(0, "sampling", "empty box");
    if (!(alpha_factor > 0)) throw ConfigError(0, "alpha_factor", "must be positive");
    if (!(glsm_delta >= 0)) throw ConfigError(0, "glsm_delta", "must be non-negative");
    if (!(q_fraction > 0 && q_fraction < 1)) throw ConfigError(0, "q_fraction", "must lie in (0, 1)");
    if (!(delta_trunc > 0)) throw ConfigError(0, "delta_trunc", "must be positive");
    if (!(tau > 0 && tau < 1)) throw ConfigError(0, "tau", "must lie in (0, 1)");
    if (fit_degree < 1) throw ConfigError(0, "fit_degree", "must be at least 1");
    if (fields < 1) throw ConfigError(0, "fields", "must be positive");
    try {
      truth();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(0, "stiffness", e.what());
    }
  }
};

inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  if (name == "zebra-mini") {
    c.pattern.name = "zebra";
    c.pattern.stripes = 2;
  } else if (name == "zebra" || name == "cheetah") {
    c.n_theta = 25;
    c.n_phi = 12;
    c.n_arc = 14;
    c.n_width = 18;
    c.pattern.name = name;
    c.pattern.stripes = 3;
  } else {
    throw ConfigError(0, "preset", "unknown preset '" + name + "' (zebra, cheetah, zebra-mini)");
  }
  return c;
}

namespace detail {

struct ConfigField {
  std::function<void(std::istream&)> read;
  std::function<void(std::ostream&)> write;
};

template <class T>
ConfigField scalar_field(T& v) {
  return {[&v](std::istream& is) { is >> v; }, [&v](std::ostream& os) { os << v; }};
}

inline ConfigField complex_field(cd& v) {
  return {[&v](std::istream& is) {
            double re, im;
            is >> re >> im;
            v = cd(re, im);
          },
          [&v](std::ostream& os) { os << v.real() << ' ' << v.imag(); }};
}

inline ConfigField vec_field(Vec3& v) {
  return {[&v](std::istream& is) { is >> v[0] >> v[1] >> v[2]; },
          [&v](std::ostream& os) { os << v[0] << ' ' << v[1] << ' ' << v[2]; }};
}

inline ConfigField mode_field(StiffnessMode& m) {
  return {[&m](std::istream& is) {
            std::string s;
            is >> s;
            m = parse_mode(s);
          },
          [&m](std::ostream& os) { os << to_string(m); }};
}

using ConfigSchema = std::vector<std::pair<std::string, std::vector<std::pair<std::string, ConfigField>>>>;

inline ConfigSchema schema(ExperimentConfig& c) {
  return {
      {"experiment", {{"name", scalar_field(c.name)}}},
      {"geometry",
       {{"width", scalar_field(c.width)},
        {"arclength", scalar_field(c.arclength)},
        {"radius", scalar_field(c.radius)},
        {"n_arc", scalar_field(c.n_arc)},
        {"n_width", scalar_field(c.n_width)}}},
      {"medium", {{"rho", scalar_field(c.rho)}, {"c_s", scalar_field(c.c_s)}, {"c_p", scalar_field(c.c_p)}}},
      {"frequency", {{"lambda_s_over_ell", scalar_field(c.lambda_s_over_ell)}}},
      {"grid", {{"n_theta", scalar_field(c.n_theta)}, {"n_phi", scalar_field(c.n_phi)}}},
      {"stiffness",
       {{"pattern", scalar_field(c.pattern.name)},
        {"kn_a", complex_field(c.pattern.kn_a)},
        {"ks_a", complex_field(c.pattern.ks_a)},
        {"kn_b", complex_field(c.pattern.kn_b)},
        {"ks_b", complex_field(c.pattern.ks_b)},
        {"stripes", scalar_field(c.pattern.stripes)},
        {"spots", scalar_field(c.pattern.spots)},
        {"spot_radius", scalar_field(c.pattern.spot_radius)},
        {"spot_seed", scalar_field(c.pattern.spot_seed)}}},
      {"noise", {{"level", scalar_field(c.noise_level)}, {"seed", scalar_field(c.seed)}}},
      {"sampling", {{"lo", vec_field(c.box_lo)}, {"hi", vec_field(c.box_hi)}, {"h", scalar_field(c.sampling_h)}}},
      {"inversion",
       {{"alpha_factor", scalar_field(c.alpha_factor)},
        {"glsm_delta", scalar_field(c.glsm_delta)},
        {"q_fraction", scalar_field(c.q_fraction)},
        {"delta_trunc", scalar_field(c.delta_trunc)},
        {"tau", scalar_field(c.tau)},
        {"fit_degree", scalar_field(c.fit_degree)},
        {"fields", scalar_field(c.fields)},
        {"mode", mode_field(c.mode)}}},
  };
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

/// Reads key-value overrides into `base`. A leading "preset = <name>" line
/// (outside any section) replaces `base` with that preset first.
inline ExperimentConfig read_config(std::istream& is, ExperimentConfig base = preset("zebra-mini")) {
  ExperimentConfig c = std::move(base);
  auto sch = detail::schema(c);
  std::string line, section;
  int lineno = 0;
  bool any_section = false;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string t = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(lineno, "", "malformed section header");
      section = detail::trim(t.substr(1, t.size() - 2));
      bool known = false;
      for (const auto& s : sch) known |= s.first == section;
      if (!known) throw ConfigError(lineno, section, "unknown section");
      any_section = true;
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(lineno, "", "expected 'key = value'");
    const std::string key = detail::trim(t.substr(0, eq)), value = detail::trim(t.substr(eq + 1));
    if (value.empty()) throw ConfigError(lineno, key, "missing value");
    if (!any_section) {
      if (key != "preset") throw ConfigError(lineno, key, "only 'preset' may appear before the first section");
      try {
        c = preset(value);
      } catch (const ConfigError&) {
        throw ConfigError(lineno, key, "unknown preset '" + value + "'");
      }
      sch = detail::schema(c);
      continue;
    }
    const detail::ConfigField* field = nullptr;
    for (const auto& s : sch)
      if (s.first == section)
        for (const auto& kv : s.second)
          if (kv.first == key) field = &kv.second;
    if (!field) throw ConfigError(lineno, key, "unknown key in [" + section + "]");
    std::istringstream vs(value);
    try {
      field->read(vs);
    } catch (const std::exception& e) {
      throw ConfigError(lineno, key, e.what());
    }
    std::string rest;
    if (vs.fail() || (vs >> rest)) throw ConfigError(lineno, key, "cannot parse value '" + value + "'");
  }
  return c;
}

inline void write_config(std::ostream& os, const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  os << std::setprecision(17);
  for (const auto& s : detail::schema(c)) {
    os << '[' << s.first << "]\n";
    for (const auto& kv : s.second) {
      os << kv.first << " = ";
      kv.second.write(os);
      os << '\n';
    }
  }
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = preset("zebra-mini")) {
  std::ifstream is(path);
  if (!is) throw ConfigError(0, "", "cannot read " + path);
  return read_config(is, std::move(base));
}

inline void save_config(const std::string& path, const ExperimentConfig& c) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_config(os, c);
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  std::ostringstream x, y;
  write_config(x, a);
  write_config(y, b);
  return x.str() == y.str();
}

}  // namespace fracsense
