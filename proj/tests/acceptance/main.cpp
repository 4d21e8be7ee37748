#include <chrono>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "acceptance.hpp"

int main(int argc, char** argv) {
  using namespace mgf::acceptance;
  namespace fs = std::filesystem;

  CLI::App app{"Acceptance checks; prints one PASS or FAIL line per criterion"};
  std::vector<int> selected;
  Paths paths{MGF_CONFIG_DIR, MGF_CLASSIFIER_CACHE, fs::temp_directory_path() / "mgf_acceptance"};
  app.add_option("-c,--criterion", selected, "Criteria to run (default all)")->check(CLI::Range(1, 8));
  app.add_option("--configs", paths.configs, "Directory holding the experiment configs");
  app.add_option("--classifier", paths.classifier, "Reference classifier cache");
  app.add_option("--work", paths.work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::vector<std::function<Outcome()>> criteria{
      gradient_oracles,
      algorithm_reductions,
      hand_trace,
      [&] { return synthetic_fewshot(paths); },
      [&] { return image_fewshot(paths); },
      [&] { return acgan_ordering(paths); },
      [&] { return determinism(paths); },
      data_layer,
  };

  bool all = true;
  for (int n : selected) {
    Outcome o;
    try {
      o = criteria.at(static_cast<std::size_t>(n - 1))();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
