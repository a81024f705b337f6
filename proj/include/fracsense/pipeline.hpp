#pragma once

// End-to-end experiment: synthetic data, GLSM geometry, FOD recovery with
// source recombination, stiffness inversion, and the artifact set.

#include "fracsense/config.hpp"
#include "fracsense/fod_inversion.hpp"
#include "fracsense/glsm.hpp"
#include "fracsense/stiffness_inversion.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>

namespace fracsense {

using Json = nlohmann::ordered_json;

/// Runs f, re-tagging foreign exceptions with the stage name.
template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(stage, e.what());
  }
}

struct SynthResult {
  FractureMesh mesh;
  std::vector<IncidentPlaneWave> waves;
  std::vector<FodVector> fods;  ///< forward FOD per incident
  FarFieldDataset clean, noisy;
  double max_residual = 0.0;
};

/// Forward solves on the true fracture for the Herglotz incident set.
inline SynthResult synthesize(const ExperimentConfig& cfg) {
  return run_stage("synth", [&] {
    cfg.validate();
    SynthResult s;
    const auto med = cfg.medium();
    const double omega = cfg.omega();
    const auto grid = cfg.grid();
    s.mesh = cfg.true_mesh();
    s.waves = herglotz_incidents(grid, omega);
    auto res = solve_forward(s.mesh, cfg.truth(), s.waves, med, omega);
    s.fods = std::move(res.fods);
    s.max_residual = res.max_residual;
    s.clean = synthesize_dataset(s.mesh, s.fods, s.waves, grid, med, omega);
    s.noisy = add_noise(s.clean, cfg.noise_level, cfg.seed, med);
    return s;
  });
}

struct GlsmStage {
  GlsmParams params;
  double f_norm = 0.0, sharp_min_eig = 0.0;
  IndicatorMap map;
  ExtractedSurface surface;
};

inline GlsmStage run_glsm(const ExperimentConfig& cfg, const FarFieldDataset& data) {
  return run_stage("glsm", [&] {
    GlsmStage g;
    const auto op = assemble_F(data, cfg.grid(), cfg.medium());
    g.f_norm = op.norm;
    g.sharp_min_eig = op.sharp_min_eig;
    g.params = GlsmParams::relative(op.norm, cfg.glsm_noise(), cfg.alpha_factor);
    g.map = indicator_map(op, g.params, cfg.sampling());
    g.surface = extract_surface(g.map, cfg.tau, cfg.fit_options());
    return g;
  });
}

/// Datasets in recombination order: P incidences first (evenly spread
/// directions), then the two S polarizations.
inline std::vector<int> recombination_order(const ObservationGrid& grid) {
  std::vector<int> order;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < grid.size(); ++k) order.push_back(3 * k + c);
  return order;
}

struct FodStage {
  FodSystem sys;
  std::vector<Recombination> recombinations;  ///< g indexed like the dataset incidents
  std::vector<FodRecovery> fods;
};

inline FodStage run_fod(const ExperimentConfig& cfg, const FractureMesh& gamma, const FarFieldDataset& data) {
  return run_stage("fod", [&] {
    FodStage f;
    const auto grid = cfg.grid();
    const auto med = cfg.medium();
    const double omega = cfg.omega();
    f.sys = assemble_M(gamma, grid, med, omega, cfg.q_fraction);
    std::vector<CVector> vecs;
    for (const auto& rec : data.records) vecs.push_back(farfield_vector(rec, grid, med, omega));
    if (cfg.fields == 1) {
      // even-determined subset of Q + 1 datasets, P incidences first
      const auto order = recombination_order(grid);
      std::vector<CVector> ordered;
      for (int j : order) ordered.push_back(vecs[j]);
      Recombination r = recombine_sources(f.sys, ordered);
      CVector g = CVector::Zero(data.num_incidents());
      for (std::size_t j = 0; j < order.size(); ++j) g[order[j]] = r.g[j];
      r.g = g;
      for (int& u : r.used) u = order[u];
      f.recombinations.push_back(std::move(r));
    } else {
      f.recombinations = recombine_sources_multi(f.sys, vecs, cfg.fields);
    }
    for (const auto& r : f.recombinations)
      f.fods.push_back(recover_fod(gamma, f.sys, r.combined, r.noise_level(cfg.inversion_delta())));
    return f;
  });
}

struct StiffnessStage {
  std::vector<TruncatedAction> truncations;
  StiffnessSystem system;
  RecoveredStiffness result;
};

inline StiffnessStage run_stiffness(const ExperimentConfig& cfg, const FractureMesh& gamma,
                                    const std::vector<IncidentPlaneWave>& waves, const FodStage& fod) {
  return run_stage("stiffness", [&] {
    StiffnessStage s;
    const auto med = cfg.medium();
    const double omega = cfg.omega();
    // full mode needs at least two collocation points per node
    const auto colloc =
        cfg.mode == StiffnessMode::Full ? interior_collocation(gamma, 4) : matched_collocation(gamma);
    const auto T = assemble_T(gamma, colloc, med, omega);
    const CMatrix tinc_all = incident_tractions(colloc, waves, med);
    const int m = static_cast<int>(fod.fods.size());
    CMatrix a(3 * colloc.size(), m), rhs(3 * colloc.size(), m);
    for (int j = 0; j < m; ++j) {
      if (fod.recombinations[j].g.size() != static_cast<Eigen::Index>(waves.size()))
        throw Error("stiffness", "recombination weights and incident waves differ in length");
      s.truncations.push_back(truncate_T(T, gamma, fod.fods[j].fod, cfg.delta_trunc));
      a.col(j) = fod_at_collocation(gamma, colloc, fod.fods[j].fod);
      rhs.col(j) = s.truncations.back().action + tinc_all * fod.recombinations[j].g;
    }
    s.system = build_system(cfg.mode, gamma, colloc, a, rhs);
    s.result = solve_stiffness(s.system, cfg.inversion_delta());
    return s;
  });
}

struct TruthComparison {
  int reliable = 0;
  double threshold = 0.1;
  double worst_n = 0.0, worst_s = 0.0, mean = 0.0;
  double corr_n = 0.0, corr_s = 0.0;
  bool meets(double max_err, double min_corr) const {
    return reliable > 0 && worst_n <= max_err && worst_s <= max_err && corr_n >= min_corr && corr_s >= min_corr;
  }
};

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 0.0;
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

/// Re(kappa) errors on points with reliability >= threshold; the truth is
/// read at the closest point of the true fracture.
inline TruthComparison compare_to_truth(const RecoveredStiffness& r, const FractureMesh& truth_mesh,
                                        const StiffnessField& truth, double threshold = 0.1) {
  TruthComparison c;
  c.threshold = threshold;
  std::vector<double> rn, tn, rs, ts;
  double sum = 0.0;
  for (int i = 0; i < r.size(); ++i) {
    if (r.reliability[i] < threshold) continue;
    const CMat3 kt = truth.local(closest_point(truth_mesh, r.points[i]).x);
    const CVec3 k = r.mode == StiffnessMode::Diagonal ? r.kappa[i] : CVec3(r.K6[i].head<3>());
    ++c.reliable;
    const double en = std::abs(k[0].real() - kt(0, 0).real()) / std::abs(kt(0, 0).real());
    c.worst_n = std::max(c.worst_n, en);
    sum += en;
    rn.push_back(k[0].real());
    tn.push_back(kt(0, 0).real());
    for (int s = 1; s < 3; ++s) {
      const double es = std::abs(k[s].real() - kt(s, s).real()) / std::abs(kt(s, s).real());
      c.worst_s = std::max(c.worst_s, es);
      sum += es;
      rs.push_back(k[s].real());
      ts.push_back(kt(s, s).real());
    }
  }
  c.mean = c.reliable ? sum / (3.0 * c.reliable) : 0.0;
  c.corr_n = pearson(rn, tn);
  c.corr_s = pearson(rs, ts);
  return c;
}

struct PipelineResult {
  ExperimentConfig config;
  bool geometry_oracle = false;
  SynthResult synth;
  std::optional<GlsmStage> glsm;
  FractureMesh gamma;  ///< surface used for FOD and stiffness inversion
  double hausdorff = 0.0;
  FodStage fod;
  StiffnessStage stiffness;
  TruthComparison comparison;
  Json report;
};

inline Json glsm_report(const ExperimentConfig& c, const GlsmStage& g, double hausdorff) {
  return {{"alpha", g.params.alpha},
          {"delta", g.params.delta},
          {"f_norm", g.f_norm},
          {"sharp_min_eig", g.sharp_min_eig},
          {"tau", c.tau},
          {"selected_points", g.surface.selected},
          {"fit_rms_residual", g.surface.rms_residual},
          {"fit_residual_warning", g.surface.residual_warning},
          {"hausdorff_to_truth", hausdorff},
          {"area", g.surface.mesh.area()}};
}

inline Json fod_report(const FodStage& f, const FractureMesh& gamma) {
  Json fod;
  fod["Q"] = f.sys.Q;
  fod["singular_values"] = f.sys.sigma.size();
  fod["sigma_ratio"] = f.sys.sigma[f.sys.sigma.size() - 1] / f.sys.sigma[0];
  fod["fields"] = f.fods.size();
  Json fields = Json::array();
  for (std::size_t i = 0; i < f.fods.size(); ++i)
    fields.push_back({{"projection", f.recombinations[i].projection},
                      {"noise_gain", f.recombinations[i].noise_gain},
                      {"beta", f.fods[i].beta},
                      {"discrepancy", f.fods[i].discrepancy},
                      {"fallback", f.fods[i].fallback},
                      {"suppressed_fraction", f.sys.suppressed_fraction(f.fods[i].fod.free_part(gamma))}});
  fod["per_field"] = fields;
  return fod;
}

inline Json stiffness_report(const ExperimentConfig& c, const StiffnessStage& s) {
  const auto& r = s.result;
  int flagged = 0;
  for (bool f : r.flagged) flagged += f;
  Json n = Json::array();
  for (const auto& t : s.truncations) n.push_back(t.N);
  return {{"mode", to_string(r.mode)},
          {"points", r.size()},
          {"flagged", flagged},
          {"beta", r.beta},
          {"discrepancy", r.discrepancy},
          {"least_squares_fallback", r.fallback},
          {"delta_trunc", c.delta_trunc},
          {"truncation_N", n},
          {"active_fraction", r.active_fraction()}};
}

inline Json comparison_report(const TruthComparison& t) {
  return {{"reliability_threshold", t.threshold},
          {"reliable_points", t.reliable},
          {"worst_rel_error_kn", t.worst_n},
          {"worst_rel_error_ks", t.worst_s},
          {"mean_rel_error", t.mean},
          {"correlation_kn", t.corr_n},
          {"correlation_ks", t.corr_s}};
}

inline Json make_report(const PipelineResult& p) {
  const auto& c = p.config;
  Json j;
  j["preset"] = c.name;
  j["seed"] = c.seed;
  j["noise_level"] = c.noise_level;
  j["geometry_oracle"] = p.geometry_oracle;
  j["grid"] = {{"n_theta", c.n_theta}, {"n_phi", c.n_phi}};
  j["omega"] = c.omega();
  j["synth"] = {{"nodes", p.synth.mesh.num_nodes()},
                {"incidents", p.synth.noisy.num_incidents()},
                {"max_residual", p.synth.max_residual}};
  if (p.glsm) j["glsm"] = glsm_report(c, *p.glsm, p.hausdorff);
  j["fod"] = fod_report(p.fod, p.gamma);
  j["stiffness"] = stiffness_report(c, p.stiffness);
  j["truth_comparison"] = comparison_report(p.comparison);
  return j;
}

inline PipelineResult full_pipeline(const ExperimentConfig& cfg, bool geometry_oracle) {
  PipelineResult p;
  p.config = cfg;
  p.geometry_oracle = geometry_oracle;
  p.synth = synthesize(cfg);
  if (geometry_oracle) {
    p.gamma = p.synth.mesh;
  } else {
    p.glsm = run_glsm(cfg, p.synth.noisy);
    p.gamma = p.glsm->surface.mesh;
    p.hausdorff = hausdorff_distance(p.gamma, p.synth.mesh);
  }
  p.fod = run_fod(cfg, p.gamma, p.synth.noisy);
  p.stiffness = run_stiffness(cfg, p.gamma, p.synth.waves, p.fod);
  p.comparison = compare_to_truth(p.stiffness.result, p.synth.mesh, cfg.truth());
  p.report = make_report(p);
  return p;
}

// ---------------------------------------------------------------------------
// Recombination weights file
//
//   recombination <n_incidents> <n_fields>
//   field <j> <projection> <noise_gain>
//   <p> Re(g_p) Im(g_p)          (n_incidents lines per field)

inline void write_recombinations(std::ostream& os, const std::vector<Recombination>& rs) {
  const int P = rs.empty() ? 0 : static_cast<int>(rs.front().g.size());
  os << std::setprecision(17) << "recombination " << P << ' ' << rs.size() << '\n';
  for (std::size_t j = 0; j < rs.size(); ++j) {
    os << "field " << j << ' ' << rs[j].projection << ' ' << rs[j].noise_gain << '\n';
    for (int p = 0; p < P; ++p) os << p << ' ' << rs[j].g[p].real() << ' ' << rs[j].g[p].imag() << '\n';
  }
}

inline std::vector<Recombination> read_recombinations(std::istream& is) {
  std::string tag;
  int P = -1, m = -1;
  is >> tag >> P >> m;
  if (!is || tag != "recombination" || P < 0 || m < 0)
    throw std::invalid_argument("recombination file: malformed header");
  std::vector<Recombination> rs(m);
  for (int j = 0; j < m; ++j) {
    int idx;
    is >> tag >> idx >> rs[j].projection >> rs[j].noise_gain;
    if (!is || tag != "field" || idx != j) throw std::invalid_argument("recombination file: bad field header");
    rs[j].g.resize(P);
    for (int p = 0; p < P; ++p) {
      int k;
      double re, im;
      is >> k >> re >> im;
      if (!is || k != p) throw std::invalid_argument("recombination file: bad weight line");
      rs[j].g[p] = cd(re, im);
    }
  }
  return rs;
}

namespace artifacts {
inline constexpr const char* kConfig = "config.txt";
inline constexpr const char* kTrueMesh = "mesh_true.txt";
inline constexpr const char* kData = "data.txt";
inline constexpr const char* kIndicator = "indicator.txt";
inline constexpr const char* kReconMesh = "mesh_recon.txt";
inline constexpr const char* kRecombination = "recombination.txt";
inline constexpr const char* kStiffness = "stiffness.txt";
inline constexpr const char* kReport = "report.json";
inline std::string fod_file(int j) { return "fod_" + std::to_string(j) + ".txt"; }
}  // namespace artifacts

inline void save_json(const std::string& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(2) << '\n';
}

inline void write_artifacts(const PipelineResult& p, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path d(dir);
  save_config((d / artifacts::kConfig).string(), p.config);
  save_mesh((d / artifacts::kTrueMesh).string(), p.synth.mesh);
  save_dataset((d / artifacts::kData).string(), p.synth.noisy);
  if (p.glsm) {
    save_indicator_map((d / artifacts::kIndicator).string(), p.glsm->map);
    save_mesh((d / artifacts::kReconMesh).string(), p.gamma);
  }
  {
    std::ofstream os(d / artifacts::kRecombination);
    if (!os) throw std::runtime_error("cannot write recombination file");
    write_recombinations(os, p.fod.recombinations);
  }
  for (std::size_t j = 0; j < p.fod.fods.size(); ++j)
    save_fod((d / artifacts::fod_file(static_cast<int>(j))).string(), p.gamma, p.fod.fods[j].fod);
  save_stiffness((d / artifacts::kStiffness).string(), p.stiffness.result);
  save_json((d / artifacts::kReport).string(), p.report);
}

}  // namespace fracsense
