#pragma once

// Batch stage commands behind the command-line tool. Each stage reads its
// inputs from an artifact directory and writes its outputs to another one
// (the same directory by default), so stages can run separately or chained.

#include "fracsense/acceptance.hpp"
#include "fracsense/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fracsense::cli {

inline constexpr const char* kThreadsEnv = "FRACSENSE_THREADS";

struct Options {
  std::string config;  ///< config file; empty: preset or the input directory's config.txt
  std::string preset;
  std::string out = "out";
  std::string in;      ///< fallback input artifact directory; empty: same as out
  std::string mesh;    ///< external reconstructed surface for fod/stiffness
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
  bool geometry_oracle = false;

  std::string input_dir() const { return in.empty() ? out : in; }
};

/// Applies the thread count from FRACSENSE_THREADS; returns the count set, or 0.
inline int apply_thread_env() {
  const char* v = std::getenv(kThreadsEnv);
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw Error("cli", std::string(kThreadsEnv) + " must be a positive integer");
#ifdef _OPENMP
  omp_set_num_threads(static_cast<int>(n));
#endif
  return static_cast<int>(n);
}

namespace detail {

namespace fs = std::filesystem;

inline std::string out_path(const Options& o, const std::string& name) { return (fs::path(o.out) / name).string(); }

/// Inputs are looked up in the output directory first (products of earlier
/// stages), then in the input directory.
inline std::string in_path(const Options& o, const std::string& name) {
  const auto p = out_path(o, name);
  return fs::exists(p) ? p : (fs::path(o.input_dir()) / name).string();
}

inline std::string require(const Options& o, const std::string& name, const std::string& stage) {
  const auto p = in_path(o, name);
  if (!fs::exists(p)) throw Error(stage, "missing input " + name + " in " + o.out +
                                           (o.input_dir() == o.out ? "" : " or " + o.input_dir()));
  return p;
}

}  // namespace detail

/// Config precedence: --config (on top of --preset when given), then --preset,
/// then config.txt in the input directory, then zebra-mini. --seed and
/// --noise override the result.
inline ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig c;
  if (!o.config.empty()) {
    c = load_config(o.config, o.preset.empty() ? preset("zebra-mini") : preset(o.preset));
  } else if (!o.preset.empty()) {
    c = preset(o.preset);
  } else if (std::filesystem::exists(detail::in_path(o, artifacts::kConfig))) {
    c = load_config(detail::in_path(o, artifacts::kConfig));
  } else {
    c = preset("zebra-mini");
  }
  if (o.seed) c.seed = *o.seed;
  if (o.noise) c.noise_level = *o.noise;
  c.validate();
  return c;
}

/// Surface used by the FOD and stiffness stages: --mesh, the true surface
/// under --geometry-oracle, else the GLSM reconstruction.
inline FractureMesh resolve_gamma(const Options& o, const std::string& stage) {
  return run_stage(stage, [&] {
    if (!o.mesh.empty()) return load_mesh(o.mesh);
    return load_mesh(detail::require(o, o.geometry_oracle ? artifacts::kTrueMesh : artifacts::kReconMesh, stage));
  });
}

inline Json header(const ExperimentConfig& c, const std::string& stage) {
  return {{"stage", stage}, {"preset", c.name}, {"seed", c.seed}, {"noise_level", c.noise_level}};
}

inline void synth(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto s = synthesize(cfg);
  run_stage("synth", [&] {
    std::filesystem::create_directories(o.out);
    save_config(detail::out_path(o, artifacts::kConfig), cfg);
    save_mesh(detail::out_path(o, artifacts::kTrueMesh), s.mesh);
    save_dataset(detail::out_path(o, artifacts::kData), s.noisy);
    Json j = header(cfg, "synth");
    j["synth"] = {{"nodes", s.mesh.num_nodes()},
                  {"incidents", s.noisy.num_incidents()},
                  {"max_residual", s.max_residual}};
    save_json(detail::out_path(o, "report_synth.json"), j);
  });
}

inline void glsm(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto data = run_stage("glsm", [&] { return load_dataset(detail::require(o, artifacts::kData, "glsm")); });
  const auto g = run_glsm(cfg, data);
  run_stage("glsm", [&] {
    std::filesystem::create_directories(o.out);
    save_indicator_map(detail::out_path(o, artifacts::kIndicator), g.map);
    save_mesh(detail::out_path(o, artifacts::kReconMesh), g.surface.mesh);
    const auto truth = detail::in_path(o, artifacts::kTrueMesh);
    const double h = std::filesystem::exists(truth) ? hausdorff_distance(g.surface.mesh, load_mesh(truth)) : -1.0;
    Json j = header(cfg, "glsm");
    j["glsm"] = glsm_report(cfg, g, h);
    save_json(detail::out_path(o, "report_glsm.json"), j);
  });
}

inline void fod(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto data = run_stage("fod", [&] { return load_dataset(detail::require(o, artifacts::kData, "fod")); });
  const auto gamma = resolve_gamma(o, "fod");
  const auto f = run_fod(cfg, gamma, data);
  run_stage("fod", [&] {
    std::filesystem::create_directories(o.out);
    {
      std::ofstream os(detail::out_path(o, artifacts::kRecombination));
      if (!os) throw std::runtime_error("cannot write recombination file");
      write_recombinations(os, f.recombinations);
    }
    for (std::size_t j = 0; j < f.fods.size(); ++j)
      save_fod(detail::out_path(o, artifacts::fod_file(static_cast<int>(j))), gamma, f.fods[j].fod);
    Json j = header(cfg, "fod");
    j["fod"] = fod_report(f, gamma);
    save_json(detail::out_path(o, "report_fod.json"), j);
  });
}

inline void stiffness(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto gamma = resolve_gamma(o, "stiffness");
  FodStage f = run_stage("stiffness", [&] {
    FodStage s;
    std::ifstream is(detail::require(o, artifacts::kRecombination, "stiffness"));
    s.recombinations = read_recombinations(is);
    for (std::size_t j = 0; j < s.recombinations.size(); ++j) {
      const auto name = artifacts::fod_file(static_cast<int>(j));
      FodRecovery r;
      r.fod = load_fod(detail::require(o, name, "stiffness"));
      if (r.fod.num_nodes() != gamma.num_nodes())
        throw std::invalid_argument(name + " does not match the surface mesh");
      s.fods.push_back(std::move(r));
    }
    if (s.fods.empty()) throw std::invalid_argument("no recombined fields");
    return s;
  });
  const auto s = run_stiffness(cfg, gamma, herglotz_incidents(cfg.grid(), cfg.omega()), f);
  run_stage("stiffness", [&] {
    std::filesystem::create_directories(o.out);
    save_stiffness(detail::out_path(o, artifacts::kStiffness), s.result);
    Json j = header(cfg, "stiffness");
    j["geometry_oracle"] = o.geometry_oracle;
    j["stiffness"] = stiffness_report(cfg, s);
    const auto truth = detail::in_path(o, artifacts::kTrueMesh);
    if (std::filesystem::exists(truth))
      j["truth_comparison"] = comparison_report(compare_to_truth(s.result, load_mesh(truth), cfg.truth()));
    save_json(detail::out_path(o, artifacts::kReport), j);
  });
}

inline void pipeline(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto p = full_pipeline(cfg, o.geometry_oracle);
  run_stage("pipeline", [&] { write_artifacts(p, o.out); });
}

/// Runs the acceptance suite; returns the number of failed criteria.
inline int validate(std::ostream& os) {
  int failed = 0;
  for (const auto& r : run_acceptance(os)) failed += !r.pass;
  return failed;
}

}  // namespace fracsense::cli
