// Writes the synthetic shapes workspace: toy model, images, masks, labels, config.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hucd/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hucd-synth: generate the toy two-class shapes workspace"};
  std::string out = "toy";
  int images = 200;
  std::uint64_t seed = 1;
  app.add_option("--out", out, "workspace directory");
  app.add_option("--images", images, "number of images")->check(CLI::Range(4, 100000));
  app.add_option("--seed", seed, "dataset seed");
  CLI11_PARSE(app, argc, argv);
  try {
    hucd::write_toy_workspace(out, images, seed);
    std::cout << "wrote " << images << " images to " << out << " (run: hucd --config " << out << "/config.json all)\n";
  } catch (const hucd::Error& e) {
    std::cerr << "error (" << hucd::to_string(e.kind()) << "): " << e.what() << "\n";
    return 3;
  }
  return 0;
}
