#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mgf/cli/run.hpp"

int main(int argc, char** argv) {
  using namespace mgf::cli;
  CLI::App app{"Meta-learning for generative adversarial networks"};
  app.require_subcommand(1);

  RunOptions opts;
  bool single_thread = false;
  std::string output_dir;
  app.add_flag("--single-thread", single_thread, "Run every task on one thread");
  app.add_option("--output", output_dir, "Override output.dir");

  std::string config, checkpoint;
  auto* train = app.add_subcommand("meta-train", "Meta-train from a config file");
  train->add_option("config", config, "Run config")->required()->check(CLI::ExistingFile);

  int cls = 0;
  std::optional<std::size_t> shots, steps;
  auto* adapt = app.add_subcommand("adapt", "Adapt a checkpoint to one class");
  adapt->add_option("checkpoint", checkpoint, "Checkpoint prefix")->required();
  adapt->add_option("--class", cls, "Class label")->required();
  adapt->add_option("--shots", shots, "Number of real samples");
  adapt->add_option("--steps", steps, "Adaptation steps");

  std::size_t count = 64;
  auto* gen = app.add_subcommand("generate", "Sample from a checkpoint");
  gen->add_option("checkpoint", checkpoint, "Checkpoint prefix")->required();
  gen->add_option("--count", count, "Number of samples");

  auto* evaluate = app.add_subcommand("evaluate", "Run the adaptation benchmark");
  evaluate->add_option("checkpoint", checkpoint, "Checkpoint prefix")->required();
  evaluate->add_option("config", config, "Evaluation config")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  opts.single_thread = single_thread;
  if (!output_dir.empty()) opts.output_dir = output_dir;
  if (const char* s = std::getenv("MGF_SEED"); s && *s) {
    try {
      std::size_t used = 0;
      opts.seed = std::stoull(s, &used);
      if (s[used] != '\0') throw std::invalid_argument(s);
    } catch (const std::exception&) {
      std::cerr << "error: MGF_SEED must be a non-negative integer, got '" << s << "'\n";
      return kExitConfig;
    }
  }

  if (*train) return cmd_meta_train(config, opts);
  if (*adapt) return cmd_adapt(checkpoint, cls, shots, steps, opts);
  if (*gen) return cmd_generate(checkpoint, count, opts);
  return cmd_evaluate(checkpoint, config, opts);
}
