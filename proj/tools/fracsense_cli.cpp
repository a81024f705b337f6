#include "fracsense/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fc = fracsense::cli;

namespace {

void add_common(CLI::App* sub, fc::Options& o) {
  sub->add_option("--config", o.config, "Config file (sectioned key = value text)");
  sub->add_option("--preset", o.preset, "Preset experiment: zebra-mini, zebra, cheetah");
  sub->add_option("--seed", o.seed, "Noise seed override");
  sub->add_option("--noise", o.noise, "Relative noise level override");
  sub->add_option("--out", o.out, "Output artifact directory")->capture_default_str();
  sub->add_option("--in", o.in, "Input artifact directory (default: --out)");
  sub->add_option("--mesh", o.mesh, "External reconstructed surface mesh");
  sub->add_flag("--geometry-oracle", o.geometry_oracle, "Use the true surface instead of the GLSM reconstruction");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fracture stiffness reconstruction from far-field elastic data"};
  app.require_subcommand(1);
  fc::Options o;
  struct Stage {
    const char* name;
    const char* help;
    void (*run)(const fc::Options&);
  };
  const Stage stages[] = {
      {"synth", "Forward-simulate noisy far-field data on the true fracture", fc::synth},
      {"glsm", "Reconstruct the fracture surface from far-field data", fc::glsm},
      {"fod", "Recover fracture opening displacements on the surface", fc::fod},
      {"stiffness", "Recover the interfacial stiffness from recovered openings", fc::stiffness},
      {"pipeline", "Run all stages and write the full artifact set", fc::pipeline},
  };
  for (const auto& s : stages) add_common(app.add_subcommand(s.name, s.help), o);
  auto* validate = app.add_subcommand("validate", "Run the acceptance suite");

  CLI11_PARSE(app, argc, argv);
  std::string stage = "cli";
  try {
    fc::apply_thread_env();
    if (validate->parsed()) {
      stage = "validate";
      const int failed = fc::validate(std::cout);
      std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
      return failed == 0 ? 0 : 1;
    }
    for (const auto& s : stages)
      if (app.got_subcommand(s.name)) {
        stage = s.name;
        s.run(o);
      }
  } catch (const fracsense::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: [" << stage << "] " << e.what() << '\n';
    return 2;
  }
  return 0;
}
