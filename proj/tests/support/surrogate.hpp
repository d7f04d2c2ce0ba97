#pragma once

#include <cstdint>
#include <filesystem>

namespace karsein::testing {

struct SurrogateSpec {
  int users = 400;
  int items = 300;
  int ratings = 20000;
  int latent = 4;
  double noise = 0.6;
  std::uint64_t seed = 7;
};

/// Writes users.dat / movies.dat / ratings.dat in the MovieLens-1M layout.
/// Ratings come from a latent-factor model plus gender x genre and
/// age x genre effects, so there is learnable second-order structure.
void write_surrogate_ml1m(const std::filesystem::path& dir, const SurrogateSpec& spec = {});

}  // namespace karsein::testing
