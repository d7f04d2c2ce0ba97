#pragma once

#include "karsein/core.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace karsein {

enum class FieldKind { Categorical, Numeric };
enum class LabelKind {
  Rating,  // integer 1..5, binarized with 3 dropped
  Binary,  // already 0/1
};

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::Categorical;
};

struct DatasetSchema {
  std::vector<FieldSpec> fields;
  std::string label = "rating";
  LabelKind label_kind = LabelKind::Rating;
  char delimiter = ',';
  bool has_header = true;

  std::size_t field_count() const { return fields.size(); }
  void validate() const;

  // user_id, item_id, gender, age, occupation, genre
  static DatasetSchema movielens_1m();
  // user_id, item_id
  static DatasetSchema douban();
  // I1..I13 numeric, C1..C26 categorical, binary label first column, tab separated
  static DatasetSchema criteo();
  static DatasetSchema named(const std::string& name);
};

/// Raw string-valued records in schema field order.
struct RawTable {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> labels;
  std::size_t malformed = 0;

  std::size_t size() const { return rows.size(); }
};

// Fraction of malformed rows above which ingestion fails.
inline constexpr double kMalformedCap = 0.01;

RawTable load_csv(const std::filesystem::path& path, const DatasetSchema& schema);

/// Joins the MovieLens-1M ratings.dat / users.dat / movies.dat files
/// ("::"-separated) into schema order. Recognized field names: user_id,
/// item_id, gender, age, occupation, zip, genre (first listed genre).
RawTable load_movielens_1m(const std::filesystem::path& dir, const DatasetSchema& schema);

/// 1,2 -> 0; 4,5 -> 1; 3 -> nullopt (dropped). Other values throw DataError.
std::optional<int> binarize_label(int rating);

/// Missing -> 0, negative -> 1, otherwise 2 + floor(ln(1 + v)).
int log_discretize(std::optional<double> v);

struct SplitIndices {
  std::vector<std::int32_t> train;
  std::vector<std::int32_t> val;
  std::vector<std::int32_t> test;
};

SplitIndices split_811(std::size_t n, std::uint64_t seed);

/// Vocabulary of one field. Index 0 is reserved for out-of-vocabulary values.
class FieldVocab {
 public:
  FieldVocab();
  std::int32_t add(const std::string& value);
  std::int32_t encode(const std::string& value) const;
  std::int32_t size() const { return static_cast<std::int32_t>(values_.size()); }
  const std::vector<std::string>& values() const { return values_; }

 private:
  std::unordered_map<std::string, std::int32_t> index_;
  std::vector<std::string> values_;
};

/// Read-only view of the training rows; the only input vocabulary building accepts.
struct TrainView {
  const RawTable& table;
  std::span<const std::int32_t> rows;
};

/// Vocabulary per field from training rows only, values indexed by first occurrence.
std::vector<FieldVocab> build_vocab(const TrainView& train, const DatasetSchema& schema);

using RecordMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EncodedDataset {
  DatasetSchema schema;
  std::vector<FieldVocab> vocab;
  RecordMatrix records;  // N x m field-local indices
  std::vector<float> labels;
  SplitIndices split;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t field_count() const { return static_cast<std::size_t>(records.cols()); }
  std::vector<std::int32_t> vocab_sizes() const;

  void gather(std::span<const std::int32_t> rows, RecordMatrix& out, std::vector<float>& out_labels) const;
};

/// Binarizes labels (dropping neutral ratings), discretizes numeric fields,
/// splits 8:1:1 with `seed`, builds the vocabulary from the train split and
/// encodes every row.
EncodedDataset encode_dataset(const RawTable& table, const DatasetSchema& schema, std::uint64_t seed);

/// Encoded cache: manifest.json, vocab.json and little-endian int32 blobs.
void save_encoded(const EncodedDataset& data, const std::filesystem::path& dir);
EncodedDataset load_encoded(const std::filesystem::path& dir);

/// Minibatches over `split`, reshuffled per (seed, epoch); last partial batch kept.
std::vector<std::vector<std::int32_t>> batches(std::span<const std::int32_t> split, int batch_size,
                                               std::uint64_t seed, int epoch);

// Little-endian int32/float blob helpers shared with checkpoints.
void write_le_i32(const std::filesystem::path& path, std::span<const std::int32_t> values);
std::vector<std::int32_t> read_le_i32(const std::filesystem::path& path);
void write_le_f32(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_le_f32(const std::filesystem::path& path);

std::vector<std::string> split_line(const std::string& line, char delimiter);

nlohmann::json schema_to_json(const DatasetSchema& s);
DatasetSchema schema_from_json(const nlohmann::json& j);

}  // namespace karsein
