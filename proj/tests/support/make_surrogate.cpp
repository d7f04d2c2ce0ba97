// Writes a small MovieLens-1M-format dataset for tests and smoke runs.
#include "surrogate.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"write a synthetic MovieLens-1M-format dataset"};
  karsein::testing::SurrogateSpec spec;
  std::string dir;
  app.add_option("dir", dir, "output directory")->required();
  app.add_option("--users", spec.users);
  app.add_option("--items", spec.items);
  app.add_option("--ratings", spec.ratings);
  app.add_option("--seed", spec.seed);
  CLI11_PARSE(app, argc, argv);
  try {
    karsein::testing::write_surrogate_ml1m(dir, spec);
  } catch (const std::exception& e) {
    std::cerr << "make_surrogate: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
