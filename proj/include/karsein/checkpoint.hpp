#pragma once

#include "karsein/ctr_model.hpp"
#include "karsein/data.hpp"
#include "karsein/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace karsein {

/// Everything needed to rebuild a CTR model's architecture.
struct ModelSpec {
  std::string kind = "karsein";  // karsein | kan | mlp
  KarseinConfig karsein;
  // kan / mlp reference nets (embedding_dim and embedding_std come from `karsein`)
  std::vector<int> hidden{64, 64};
  int kan_grid = 3;
  int kan_order = 1;

  void validate() const;
};

nlohmann::json to_json(const KarseinConfig& c);
nlohmann::json to_json(const ModelSpec& s);
/// Strict: unknown keys and wrong types raise ConfigError.
ModelSpec model_spec_from_json(const nlohmann::json& j);

std::string to_string(HeadMode h);
std::string to_string(Towers t);
HeadMode head_mode_from_string(const std::string& s);
Towers towers_from_string(const std::string& s);

std::unique_ptr<CtrModel<float>> make_model(const ModelSpec& spec, const std::vector<std::int32_t>& vocab_sizes,
                                            std::uint64_t seed);

inline constexpr int kCheckpointSchemaVersion = 1;

struct Checkpoint {
  ModelSpec spec;
  std::uint64_t seed = 0;
  DatasetSchema schema;
  std::vector<FieldVocab> vocab;
  nlohmann::json extra;  // free-form (training config, metrics)
  std::unique_ptr<CtrModel<float>> model;
};

/// Writes `dir/manifest.json` and `dir/params.bin` (all tensors as
/// little-endian float32, concatenated in manifest order).
void save_checkpoint(const std::filesystem::path& dir, const CtrModel<float>& model, const ModelSpec& spec,
                     std::uint64_t seed, const DatasetSchema& schema, const std::vector<FieldVocab>& vocab,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Throws DataError on any inconsistency between manifest, blob and model.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace karsein
