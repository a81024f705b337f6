#include "fracsense/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>

using namespace fracsense;

namespace {

ConfigError parse_error(const std::string& text) {
  std::istringstream is(text);
  try {
    read_config(is);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return ConfigError(-1, "", "");
}

std::string tmpdir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("fracsense_cli_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  return d.string();
}

/// Small experiment: 4x5 mesh, 8x6 grid, 2 recombined fields.
ExperimentConfig tiny() {
  auto c = preset("zebra-mini");
  c.n_arc = 4;
  c.n_width = 5;
  c.n_theta = 8;
  c.n_phi = 6;
  c.fields = 2;
  c.sampling_h = 0.1;
  return c;
}

}  // namespace

TEST(Config, DefaultsAreZebraMini) {
  std::istringstream is("");
  EXPECT_TRUE(read_config(is) == preset("zebra-mini"));
}

TEST(Config, OverridesAndComments) {
  std::istringstream is(
      "# experiment\n"
      "[grid]\n"
      "n_theta = 10   # polar\n"
      "[stiffness]\n"
      "kn_a = 12 -2\n"
      "[inversion]\n"
      "mode = full\n");
  const auto c = read_config(is);
  EXPECT_EQ(c.n_theta, 10);
  EXPECT_EQ(c.pattern.kn_a, cd(12, -2));
  EXPECT_EQ(c.mode, StiffnessMode::Full);
}

TEST(Config, LeadingPresetLine) {
  std::istringstream is("preset = zebra\n[noise]\nseed = 11\n");
  const auto c = read_config(is);
  auto want = preset("zebra");
  want.seed = 11;
  EXPECT_TRUE(c == want);
}

TEST(Config, ErrorsCarryLineAndKey) {
  auto e = parse_error("[grid]\nn_theta = 4\n[bogus]\n");
  EXPECT_EQ(e.line(), 3);
  EXPECT_EQ(e.key(), "bogus");

  e = parse_error("[geometry]\n\nwidht = 1\n");
  EXPECT_EQ(e.line(), 3);
  EXPECT_EQ(e.key(), "widht");

  e = parse_error("[geometry]\nwidth 1\n");
  EXPECT_EQ(e.line(), 2);

  e = parse_error("[grid]\nn_phi = many\n");
  EXPECT_EQ(e.line(), 2);
  EXPECT_EQ(e.key(), "n_phi");

  e = parse_error("[grid]\nn_phi = 4 5\n");
  EXPECT_EQ(e.key(), "n_phi");

  e = parse_error("[inversion]\nmode = sideways\n");
  EXPECT_EQ(e.key(), "mode");

  e = parse_error("[geometry\n");
  EXPECT_EQ(e.line(), 1);

  e = parse_error("[grid]\npreset = zebra\n");
  EXPECT_EQ(e.key(), "preset");

  e = parse_error("preset = giraffe\n");
  EXPECT_EQ(e.line(), 1);
  EXPECT_EQ(e.key(), "preset");

  e = parse_error("width = 1\n");
  EXPECT_EQ(e.key(), "width");

  e = parse_error("[grid]\nn_phi =\n");
  EXPECT_EQ(e.key(), "n_phi");
}

TEST(Config, WriteReadRoundTrip) {
  auto c = preset("cheetah");
  c.noise_level = 0.0125;
  c.seed = 123456789012345ULL;
  c.pattern.ks_b = cd(1.0 / 3.0, -0.1);
  c.box_lo = Vec3(-0.1, -0.2, 0.3);
  c.mode = StiffnessMode::Full;
  std::stringstream ss;
  write_config(ss, c);
  EXPECT_TRUE(read_config(ss) == c);

  const auto path = tmpdir("cfg") + ".txt";
  save_config(path, c);
  EXPECT_TRUE(load_config(path) == c);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config(path), ConfigError);
}

TEST(Config, Presets) {
  const auto mini = preset("zebra-mini");
  EXPECT_EQ(mini.n_theta, 12);
  EXPECT_EQ(mini.n_phi, 8);
  const auto z = preset("zebra");
  EXPECT_EQ(z.n_theta, 25);
  EXPECT_EQ(z.n_phi, 12);
  EXPECT_DOUBLE_EQ(z.width, 0.7);
  EXPECT_DOUBLE_EQ(z.arclength, 0.55);
  EXPECT_DOUBLE_EQ(z.radius, 0.35);
  EXPECT_DOUBLE_EQ(z.lambda_s_over_ell, 0.7);
  EXPECT_DOUBLE_EQ(z.noise_level, 0.05);
  EXPECT_DOUBLE_EQ(z.c_s, 1.0);
  EXPECT_DOUBLE_EQ(z.c_p, 2.08);
  EXPECT_DOUBLE_EQ(z.q_fraction, 0.15);
  EXPECT_DOUBLE_EQ(z.delta_trunc, 0.001);
  EXPECT_EQ(z.pattern.name, "zebra");
  EXPECT_EQ(preset("cheetah").pattern.name, "cheetah");
  for (const char* n : {"zebra-mini", "zebra", "cheetah"}) EXPECT_NO_THROW(preset(n).validate()) << n;
  EXPECT_THROW(preset("leopard"), ConfigError);
}

TEST(Config, ValidateRejects) {
  auto c = preset("zebra-mini");
  c.c_p = 0.5;  // c_p <= c_s
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset("zebra-mini");
  c.n_theta = 2;
  c.n_phi = 2;  // more free nodes than directions
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset("zebra-mini");
  c.tau = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset("zebra-mini");
  c.pattern.kn_b = cd(10, 1);
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset("zebra-mini");
  c.q_fraction = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, DerivedQuantities) {
  const auto c = preset("zebra");
  EXPECT_NEAR(c.lambda_s(), 0.7 * 0.55, 1e-15);
  EXPECT_NEAR(c.omega(), 2 * kPi / (0.7 * 0.55), 1e-12);
  const auto g = c.sampling();
  EXPECT_EQ(g.nx, 19);
  EXPECT_EQ(g.ny, 21);
  EXPECT_EQ(g.nz, 14);
}

TEST(Patterns, CylinderCoords) {
  const double R = 0.35;
  const Vec2 c = cylinder_coords(Vec3(R * std::sin(0.4), -0.1, R * std::cos(0.4)), R);
  EXPECT_NEAR(c[0], 0.4 * R, 1e-15);
  EXPECT_NEAR(c[1], -0.1, 1e-15);
}

TEST(Patterns, ZebraStripe) {
  EXPECT_EQ(zebra_stripe(-0.35, 0.7, 2), 0);
  EXPECT_EQ(zebra_stripe(-0.01, 0.7, 2), 0);
  EXPECT_EQ(zebra_stripe(0.01, 0.7, 2), 1);
  EXPECT_EQ(zebra_stripe(0.35, 0.7, 2), 1);  // clamped
  EXPECT_EQ(zebra_stripe(0.0, 0.7, 3), 1);
  EXPECT_EQ(zebra_stripe(-0.2, 0.7, 3), 0);
  EXPECT_EQ(zebra_stripe(0.2, 0.7, 3), 2);
}

TEST(Patterns, UniformIsConstantDiagonal) {
  PatternParams p;
  p.name = "uniform";
  const auto K = make_stiffness_pattern(p);
  for (const Vec3& x : {Vec3(0, 0, 0.35), Vec3(0.1, 0.3, 0.33)}) {
    const CMat3 k = K.local(x);
    EXPECT_EQ(k(0, 0), p.kn_a);
    EXPECT_EQ(k(1, 1), p.ks_a);
    EXPECT_EQ(k(2, 2), p.ks_a);
    EXPECT_EQ(std::abs(k(0, 1)) + std::abs(k(0, 2)) + std::abs(k(1, 2)), 0.0);
  }
}

TEST(Patterns, ZebraTwoStripesAlongWidth) {
  const auto c = preset("zebra-mini");
  const auto K = c.truth();
  const auto mesh = c.true_mesh();
  std::set<std::pair<double, double>> values;
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const Vec3 x = mesh.node(i);
    const cd kn = K.local(x)(0, 0);
    values.insert({kn.real(), kn.imag()});
    const double w = cylinder_coords(x, c.radius)[1];
    if (std::abs(w) > 1e-9) EXPECT_EQ(kn, w < 0 ? c.pattern.kn_a : c.pattern.kn_b) << "w = " << w;
  }
  EXPECT_EQ(values.size(), 2u);
}

TEST(Patterns, CheetahDeterministicBumps) {
  const auto c = preset("cheetah");
  const auto a = c.truth(), b = c.truth();
  const auto mesh = c.true_mesh();
  double lo = 1e300, hi = -1e300;
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const cd kn = a.local(mesh.node(i))(0, 0);
    EXPECT_EQ(kn, b.local(mesh.node(i))(0, 0));
    EXPECT_LE(kn.imag(), 0.0);
    lo = std::min(lo, kn.real());
    hi = std::max(hi, kn.real());
  }
  // background level present, spot level approached
  EXPECT_NEAR(hi, c.pattern.kn_a.real(), 1e-3);
  EXPECT_LT(lo, c.pattern.kn_a.real() - 0.5 * (c.pattern.kn_a.real() - c.pattern.kn_b.real()));
}

TEST(Patterns, Errors) {
  PatternParams p;
  p.name = "zebra";
  p.stripes = 0;
  EXPECT_THROW(make_stiffness_pattern(p), std::invalid_argument);
  p.stripes = -1;
  EXPECT_THROW(make_stiffness_pattern(p), std::invalid_argument);
  p.stripes = 2;
  p.ks_a = cd(5, 0.1);
  EXPECT_THROW(make_stiffness_pattern(p), std::invalid_argument);
  p = PatternParams{};
  p.name = "giraffe";
  EXPECT_THROW(make_stiffness_pattern(p), std::invalid_argument);
}

TEST(Cli, ResolveConfigPrecedence) {
  const auto dir = tmpdir("resolve");
  std::filesystem::create_directories(dir);
  cli::Options o;
  o.out = dir;
  EXPECT_TRUE(cli::resolve_config(o) == preset("zebra-mini"));

  auto stored = tiny();
  stored.seed = 99;
  save_config(dir + "/config.txt", stored);
  EXPECT_TRUE(cli::resolve_config(o) == stored);

  o.preset = "zebra";
  o.seed = 5;
  o.noise = 0.0;
  auto want = preset("zebra");
  want.seed = 5;
  want.noise_level = 0.0;
  EXPECT_TRUE(cli::resolve_config(o) == want);

  o.config = dir + "/missing.txt";
  EXPECT_THROW(cli::resolve_config(o), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(Cli, StagesMatchPipelineArtifacts) {
  const auto staged = tmpdir("staged"), chained = tmpdir("chained");
  const auto cfg_path = tmpdir("tiny") + ".txt";
  save_config(cfg_path, tiny());

  cli::Options o;
  o.config = cfg_path;
  o.out = staged;
  cli::synth(o);
  o.config.clear();  // later stages read config.txt from the directory
  cli::glsm(o);
  cli::fod(o);
  cli::stiffness(o);

  cli::Options p;
  p.config = cfg_path;
  p.out = chained;
  cli::pipeline(p);

  namespace fs = std::filesystem;
  auto slurp = [](const fs::path& f) {
    std::ifstream is(f);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  int compared = 0;
  for (const auto& e : fs::directory_iterator(chained)) {
    const auto name = e.path().filename().string();
    if (name == "report.json") continue;  // per-stage reports differ in layout
    ASSERT_TRUE(fs::exists(fs::path(staged) / name)) << name;
    EXPECT_EQ(slurp(e.path()), slurp(fs::path(staged) / name)) << name;
    ++compared;
  }
  EXPECT_GE(compared, 9);
  for (const char* r : {"report_synth.json", "report_glsm.json", "report_fod.json", "report.json"})
    EXPECT_TRUE(fs::exists(fs::path(staged) / r)) << r;
  fs::remove_all(staged);
  fs::remove_all(chained);
  fs::remove(cfg_path);
}

TEST(Cli, NoiseFreeChainOnTrueSurface) {
  const auto data_dir = tmpdir("oracle_data"), dir = tmpdir("oracle");
  auto cfg = tiny();
  cfg.noise_level = 0.0;
  const auto cfg_path = dir + ".txt";
  save_config(cfg_path, cfg);
  cli::Options o;
  o.config = cfg_path;
  o.out = data_dir;
  cli::synth(o);
  o.config.clear();
  o.in = data_dir;
  o.out = dir;
  o.geometry_oracle = true;
  cli::fod(o);
  cli::stiffness(o);

  // recovered FOD against the recombined forward FOD
  const auto s = synthesize(cfg);
  std::ifstream is(dir + "/recombination.txt");
  const auto rs = read_recombinations(is);
  ASSERT_EQ(rs.size(), 2u);
  for (int j = 0; j < 2; ++j) {
    CVector want = CVector::Zero(s.fods.front().values.size());
    for (std::size_t p = 0; p < s.fods.size(); ++p) want += rs[j].g[p] * s.fods[p].values;
    const auto got = load_fod(dir + "/" + artifacts::fod_file(j));
    EXPECT_LT((got.values - want).norm() / want.norm(), 1e-3) << "field " << j;
  }

  std::ifstream rj(dir + "/report.json");
  const auto report = Json::parse(rj);
  EXPECT_LT(report["truth_comparison"]["mean_rel_error"].get<double>(), 0.01);
  EXPECT_TRUE(report["geometry_oracle"].get<bool>());
  std::filesystem::remove_all(data_dir);
  std::filesystem::remove_all(dir);
  std::filesystem::remove(cfg_path);
}

TEST(Cli, StageErrorsAreTagged) {
  const auto dir = tmpdir("errors");
  cli::Options o;
  o.out = dir;
  try {
    cli::glsm(o);
    FAIL() << "expected missing input";
  } catch (const Error& e) {
    EXPECT_EQ(e.stage(), "glsm");
  }
  try {
    cli::stiffness(o);
    FAIL() << "expected missing input";
  } catch (const Error& e) {
    EXPECT_EQ(e.stage(), "stiffness");
  }
  o.mesh = dir + "/nope.txt";
  try {
    cli::fod(o);
    FAIL() << "expected missing input";
  } catch (const Error& e) {
    EXPECT_EQ(e.stage(), "fod");
  }
}

TEST(Cli, ThreadEnv) {
  ::unsetenv(cli::kThreadsEnv);
  EXPECT_EQ(cli::apply_thread_env(), 0);
  ::setenv(cli::kThreadsEnv, "1", 1);
  EXPECT_EQ(cli::apply_thread_env(), 1);
  ::setenv(cli::kThreadsEnv, "two", 1);
  EXPECT_THROW(cli::apply_thread_env(), Error);
  ::setenv(cli::kThreadsEnv, "0", 1);
  EXPECT_THROW(cli::apply_thread_env(), Error);
  ::unsetenv(cli::kThreadsEnv);
}
