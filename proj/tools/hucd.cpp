// Concept discovery / scoring / benchmarking driver.
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hucd/pipeline.hpp"

namespace {

int exit_code(hucd::ErrorKind k) {
  switch (k) {
    case hucd::ErrorKind::Config: return 2;
    case hucd::ErrorKind::Data:
    case hucd::ErrorKind::Argument: return 3;
    case hucd::ErrorKind::Numeric:
    case hucd::ErrorKind::Contract: return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hucd: discover, score and benchmark multi-dimensional concepts"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  std::string config_path, mode, output, image;
  std::uint64_t seed = 0;
  int parallelism = 0;
  std::vector<int> classes;
  app.add_option("--config", config_path, "pipeline config (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  app.add_option("--parallelism", parallelism, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--mode", mode, "masking mode: layer_masking | inpaint_original_scale | crop_and_rescale");
  app.add_option("--class", classes, "restrict to these classes (repeatable)");
  app.add_option("--output", output, "output directory");
  auto* discover = app.add_subcommand("discover", "segment embeddings and subspace clusters");
  auto* score = app.add_subcommand("score", "concept bases, completeness, per-segment scores");
  auto* explain = app.add_subcommand("explain", "activation and relevance maps for one image");
  explain->add_option("--image", image, "image id")->required();
  auto* bench = app.add_subcommand("bench", "C-Deletion and C-Insertion curves");
  auto* all = app.add_subcommand("all", "discover, score, bench and explain");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    hucd::PipelineConfig cfg = hucd::load_config(config_path);
    if (*seed_opt) cfg.seed = seed;
    if (parallelism > 0) cfg.parallelism = parallelism;
    if (!mode.empty()) {
      try {
        cfg.mode = hucd::parse_masking_mode(mode);
      } catch (const hucd::Error& e) {
        throw hucd::ConfigError(e.what());
      }
      cfg.bench_modes = {cfg.mode};
    }
    if (!classes.empty()) cfg.classes = classes;
    if (!output.empty()) cfg.output = output;
    cfg.validate();

    if (*discover) hucd::cmd_discover(cfg, std::cout);
    if (*score) {
      const auto r = hucd::cmd_score(cfg, std::cout);
      std::cout << "class,clusters,completeness\n";
      for (const auto& c : r.classes)
        std::cout << c.class_label << "," << c.space.n() << "," << hucd::io::fmt(c.global.eta) << "\n";
    }
    if (*explain) hucd::cmd_explain(cfg, image, std::cout);
    if (*bench) hucd::cmd_bench(cfg, std::cout);
    if (*all) hucd::cmd_all(cfg, std::cout);
  } catch (const hucd::Error& e) {
    std::cerr << "error (" << hucd::to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
