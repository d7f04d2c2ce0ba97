#include "karsein/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

namespace karsein {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kEncodedSchemaVersion = 1;

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\r' || s[b] == '\n' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\r' || s[e - 1] == '\n' || s[e - 1] == '\t')) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_on(const std::string& line, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

std::optional<int> parse_int(const std::string& s) {
  const std::string t = trim(s);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) return std::nullopt;
  return v;
}

void check_malformed_cap(std::size_t good, std::size_t malformed, const std::string& what) {
  const std::size_t total = good + malformed;
  if (good == 0) throw DataError(what + ": no records");
  if (static_cast<double>(malformed) > kMalformedCap * static_cast<double>(total)) {
    throw DataError(what + ": " + std::to_string(malformed) + " of " + std::to_string(total) +
                    " rows malformed (cap 1%)");
  }
}

template <typename T>
void write_le(const fs::path& path, std::span<const T> values) {
  static_assert(sizeof(T) == 4);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const T& v : values) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &v, 4);
    const unsigned char bytes[4] = {static_cast<unsigned char>(bits & 0xffu),
                                    static_cast<unsigned char>((bits >> 8) & 0xffu),
                                    static_cast<unsigned char>((bits >> 16) & 0xffu),
                                    static_cast<unsigned char>((bits >> 24) & 0xffu)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
  if (!out) throw DataError("short write to " + path.string());
}

template <typename T>
std::vector<T> read_le(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() % 4 != 0) throw DataError(path.string() + ": size is not a multiple of 4 bytes");
  std::vector<T> out(raw.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                               (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                               (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                               (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

}  // namespace

json schema_to_json(const DatasetSchema& s) {
  json fields = json::array();
  for (const auto& f : s.fields) {
    fields.push_back({{"name", f.name}, {"kind", f.kind == FieldKind::Numeric ? "numeric" : "categorical"}});
  }
  return {{"fields", fields},
          {"label", s.label},
          {"label_kind", s.label_kind == LabelKind::Rating ? "rating" : "binary"},
          {"delimiter", std::string(1, s.delimiter)},
          {"has_header", s.has_header}};
}

DatasetSchema schema_from_json(const json& j) {
  DatasetSchema s;
  for (const auto& f : j.at("fields")) {
    s.fields.push_back({f.at("name").get<std::string>(),
                        f.at("kind").get<std::string>() == "numeric" ? FieldKind::Numeric : FieldKind::Categorical});
  }
  s.label = j.at("label").get<std::string>();
  s.label_kind = j.at("label_kind").get<std::string>() == "rating" ? LabelKind::Rating : LabelKind::Binary;
  const std::string d = j.at("delimiter").get<std::string>();
  s.delimiter = d.empty() ? ',' : d[0];
  s.has_header = j.at("has_header").get<bool>();
  return s;
}

void DatasetSchema::validate() const {
  if (fields.empty()) throw ConfigError("schema: at least one field is required");
  std::set<std::string> seen;
  for (const auto& f : fields) {
    if (f.name.empty()) throw ConfigError("schema: empty field name");
    if (!seen.insert(f.name).second) throw ConfigError("schema: duplicate field '" + f.name + "'");
  }
  if (seen.count(label) != 0) throw ConfigError("schema: label column '" + label + "' is also a field");
}

DatasetSchema DatasetSchema::movielens_1m() {
  DatasetSchema s;
  for (const char* n : {"user_id", "item_id", "gender", "age", "occupation", "genre"}) {
    s.fields.push_back({n, FieldKind::Categorical});
  }
  s.label = "rating";
  s.label_kind = LabelKind::Rating;
  return s;
}

DatasetSchema DatasetSchema::douban() {
  DatasetSchema s;
  s.fields = {{"user_id", FieldKind::Categorical}, {"item_id", FieldKind::Categorical}};
  s.label = "rating";
  s.label_kind = LabelKind::Rating;
  return s;
}

DatasetSchema DatasetSchema::criteo() {
  DatasetSchema s;
  for (int i = 1; i <= 13; ++i) s.fields.push_back({"I" + std::to_string(i), FieldKind::Numeric});
  for (int i = 1; i <= 26; ++i) s.fields.push_back({"C" + std::to_string(i), FieldKind::Categorical});
  s.label = "label";
  s.label_kind = LabelKind::Binary;
  s.delimiter = '\t';
  s.has_header = false;
  return s;
}

DatasetSchema DatasetSchema::named(const std::string& name) {
  if (name == "ml1m" || name == "movielens-1m") return movielens_1m();
  if (name == "douban") return douban();
  if (name == "criteo") return criteo();
  throw ConfigError("unknown schema name '" + name + "' (expected ml1m, douban or criteo)");
}

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == delimiter) {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r' && c != '\n') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

RawTable load_csv(const fs::path& path, const DatasetSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  // Column positions: from the header when present, otherwise label first
  // for binary (Criteo) layouts and last for rating layouts.
  std::vector<std::size_t> field_cols(schema.fields.size());
  std::size_t label_col = 0;
  std::size_t width = schema.fields.size() + 1;
  std::string line;
  if (schema.has_header) {
    if (!std::getline(in, line)) throw DataError(path.string() + ": no records");
    const auto header = split_line(line, schema.delimiter);
    width = header.size();
    auto find = [&](const std::string& name) {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (trim(header[i]) == name) return i;
      }
      throw DataError(path.string() + ": missing column '" + name + "'");
    };
    for (std::size_t f = 0; f < schema.fields.size(); ++f) field_cols[f] = find(schema.fields[f].name);
    label_col = find(schema.label);
  } else if (schema.label_kind == LabelKind::Binary) {
    label_col = 0;
    std::iota(field_cols.begin(), field_cols.end(), std::size_t{1});
  } else {
    std::iota(field_cols.begin(), field_cols.end(), std::size_t{0});
    label_col = schema.fields.size();
  }

  RawTable table;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cols = split_line(line, schema.delimiter);
    if (cols.size() != width) {
      ++table.malformed;
      continue;
    }
    std::vector<std::string> row;
    row.reserve(field_cols.size());
    for (std::size_t c : field_cols) row.push_back(trim(cols[c]));
    table.rows.push_back(std::move(row));
    table.labels.push_back(trim(cols[label_col]));
  }
  check_malformed_cap(table.rows.size(), table.malformed, path.string());
  return table;
}

RawTable load_movielens_1m(const fs::path& dir, const DatasetSchema& schema) {
  schema.validate();
  auto open = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) throw DataError("cannot open " + (dir / name).string());
    return in;
  };

  std::unordered_map<std::string, std::vector<std::string>> users;   // id -> gender, age, occupation, zip
  std::unordered_map<std::string, std::string> genres;               // id -> first genre
  std::string line;
  {
    auto in = open("users.dat");
    while (std::getline(in, line)) {
      const auto c = split_on(trim(line), "::");
      if (c.size() == 5) users[c[0]] = {c[1], c[2], c[3], c[4]};
    }
  }
  {
    auto in = open("movies.dat");
    while (std::getline(in, line)) {
      const auto c = split_on(trim(line), "::");
      if (c.size() == 3) genres[c[0]] = split_on(c[2], "|").front();
    }
  }

  enum class Source { User, Item, Gender, Age, Occupation, Zip, Genre };
  std::vector<Source> sources;
  for (const auto& f : schema.fields) {
    if (f.name == "user_id") sources.push_back(Source::User);
    else if (f.name == "item_id") sources.push_back(Source::Item);
    else if (f.name == "gender") sources.push_back(Source::Gender);
    else if (f.name == "age") sources.push_back(Source::Age);
    else if (f.name == "occupation") sources.push_back(Source::Occupation);
    else if (f.name == "zip") sources.push_back(Source::Zip);
    else if (f.name == "genre") sources.push_back(Source::Genre);
    else throw DataError("MovieLens-1M has no field '" + f.name + "'");
  }

  RawTable table;
  auto in = open("ratings.dat");
  while (std::getline(in, line)) {
    const auto c = split_on(trim(line), "::");
    if (c.size() != 4) {
      if (!trim(line).empty()) ++table.malformed;
      continue;
    }
    const auto u = users.find(c[0]);
    const auto g = genres.find(c[1]);
    if (u == users.end() || g == genres.end()) {
      ++table.malformed;
      continue;
    }
    std::vector<std::string> row;
    row.reserve(sources.size());
    for (Source s : sources) {
      switch (s) {
        case Source::User: row.push_back(c[0]); break;
        case Source::Item: row.push_back(c[1]); break;
        case Source::Gender: row.push_back(u->second[0]); break;
        case Source::Age: row.push_back(u->second[1]); break;
        case Source::Occupation: row.push_back(u->second[2]); break;
        case Source::Zip: row.push_back(u->second[3]); break;
        case Source::Genre: row.push_back(g->second); break;
      }
    }
    table.rows.push_back(std::move(row));
    table.labels.push_back(c[2]);
  }
  check_malformed_cap(table.rows.size(), table.malformed, (dir / "ratings.dat").string());
  return table;
}

std::optional<int> binarize_label(int rating) {
  switch (rating) {
    case 1:
    case 2:
      return 0;
    case 3:
      return std::nullopt;
    case 4:
    case 5:
      return 1;
    default:
      throw DataError("rating out of range 1..5: " + std::to_string(rating));
  }
}

int log_discretize(std::optional<double> v) {
  if (!v.has_value() || std::isnan(*v)) return 0;
  if (*v < 0.0) return 1;
  return 2 + static_cast<int>(std::floor(std::log1p(*v)));
}

SplitIndices split_811(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw DataError("split_811 needs at least 10 records, got " + std::to_string(n));
  std::vector<std::int32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0x5117));
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_train = (n * 8) / 10;
  const std::size_t n_val = n / 10;
  SplitIndices s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
               idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return s;
}

FieldVocab::FieldVocab() { values_.push_back("<oov>"); }

std::int32_t FieldVocab::add(const std::string& value) {
  const auto [it, inserted] = index_.try_emplace(value, static_cast<std::int32_t>(values_.size()));
  if (inserted) values_.push_back(value);
  return it->second;
}

std::int32_t FieldVocab::encode(const std::string& value) const {
  const auto it = index_.find(value);
  return it == index_.end() ? 0 : it->second;
}

std::vector<FieldVocab> build_vocab(const TrainView& train, const DatasetSchema& schema) {
  std::vector<FieldVocab> vocab(schema.field_count());
  for (std::int32_t r : train.rows) {
    const auto& row = train.table.rows.at(static_cast<std::size_t>(r));
    for (std::size_t f = 0; f < vocab.size(); ++f) vocab[f].add(row[f]);
  }
  return vocab;
}

std::vector<std::int32_t> EncodedDataset::vocab_sizes() const {
  std::vector<std::int32_t> out;
  out.reserve(vocab.size());
  for (const auto& v : vocab) out.push_back(v.size());
  return out;
}

void EncodedDataset::gather(std::span<const std::int32_t> rows, RecordMatrix& out,
                            std::vector<float>& out_labels) const {
  out.resize(static_cast<Index>(rows.size()), records.cols());
  out_labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Index>(i)) = records.row(rows[i]);
    out_labels[i] = labels[static_cast<std::size_t>(rows[i])];
  }
}

EncodedDataset encode_dataset(const RawTable& table, const DatasetSchema& schema, std::uint64_t seed) {
  schema.validate();
  // Label binarization; neutral ratings leave the dataset entirely.
  RawTable kept;
  std::vector<float> labels;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    int y = 0;
    if (schema.label_kind == LabelKind::Rating) {
      const auto r = parse_int(table.labels[i]);
      if (!r) throw DataError("row " + std::to_string(i) + ": rating '" + table.labels[i] + "' is not an integer");
      const auto b = binarize_label(*r);
      if (!b) continue;
      y = *b;
    } else {
      const auto r = parse_int(table.labels[i]);
      if (!r || (*r != 0 && *r != 1)) {
        throw DataError("row " + std::to_string(i) + ": label '" + table.labels[i] + "' is not 0/1");
      }
      y = *r;
    }
    std::vector<std::string> row = table.rows[i];
    for (std::size_t f = 0; f < schema.fields.size(); ++f) {
      if (schema.fields[f].kind == FieldKind::Numeric) row[f] = std::to_string(log_discretize(parse_double(row[f])));
    }
    kept.rows.push_back(std::move(row));
    labels.push_back(static_cast<float>(y));
  }

  EncodedDataset data;
  data.schema = schema;
  data.seed = seed;
  data.split = split_811(kept.rows.size(), seed);
  data.vocab = build_vocab(TrainView{kept, data.split.train}, schema);
  data.labels = std::move(labels);
  data.records.resize(static_cast<Index>(kept.rows.size()), static_cast<Index>(schema.field_count()));
  for (std::size_t i = 0; i < kept.rows.size(); ++i) {
    for (std::size_t f = 0; f < schema.field_count(); ++f) {
      data.records(static_cast<Index>(i), static_cast<Index>(f)) = data.vocab[f].encode(kept.rows[i][f]);
    }
  }
  return data;
}

void write_le_i32(const fs::path& path, std::span<const std::int32_t> values) { write_le(path, values); }
std::vector<std::int32_t> read_le_i32(const fs::path& path) { return read_le<std::int32_t>(path); }
void write_le_f32(const fs::path& path, std::span<const float> values) { write_le(path, values); }
std::vector<float> read_le_f32(const fs::path& path) { return read_le<float>(path); }

void save_encoded(const EncodedDataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  json vocab = json::array();
  for (const auto& v : data.vocab) vocab.push_back(v.values());
  json manifest = {{"schema_version", kEncodedSchemaVersion},
                   {"schema", schema_to_json(data.schema)},
                   {"records", data.size()},
                   {"fields", data.field_count()},
                   {"vocab_sizes", data.vocab_sizes()},
                   {"split_sizes", {data.split.train.size(), data.split.val.size(), data.split.test.size()}},
                   {"seed", data.seed}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
  std::ofstream(dir / "vocab.json") << vocab.dump() << "\n";
  write_le_i32(dir / "records.bin", std::span<const std::int32_t>(data.records.data(),
                                                                   static_cast<std::size_t>(data.records.size())));
  std::vector<std::int32_t> labels(data.labels.begin(), data.labels.end());
  write_le_i32(dir / "labels.bin", labels);
  std::vector<std::int32_t> splits;
  splits.insert(splits.end(), data.split.train.begin(), data.split.train.end());
  splits.insert(splits.end(), data.split.val.begin(), data.split.val.end());
  splits.insert(splits.end(), data.split.test.begin(), data.split.test.end());
  write_le_i32(dir / "splits.bin", splits);
}

EncodedDataset load_encoded(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw DataError("cannot open " + (dir / "manifest.json").string());
  const json manifest = json::parse(mf);
  if (manifest.at("schema_version").get<int>() != kEncodedSchemaVersion) {
    throw DataError("unsupported encoded dataset version");
  }
  EncodedDataset data;
  data.schema = schema_from_json(manifest.at("schema"));
  data.seed = manifest.at("seed").get<std::uint64_t>();
  const auto n = manifest.at("records").get<std::size_t>();
  const auto m = manifest.at("fields").get<std::size_t>();

  std::ifstream vf(dir / "vocab.json");
  if (!vf) throw DataError("cannot open " + (dir / "vocab.json").string());
  const json vocab = json::parse(vf);
  for (const auto& field : vocab) {
    FieldVocab v;
    const auto values = field.get<std::vector<std::string>>();
    for (std::size_t i = 1; i < values.size(); ++i) v.add(values[i]);
    data.vocab.push_back(std::move(v));
  }

  const auto records = read_le_i32(dir / "records.bin");
  const auto labels = read_le_i32(dir / "labels.bin");
  const auto splits = read_le_i32(dir / "splits.bin");
  const auto sizes = manifest.at("split_sizes").get<std::vector<std::size_t>>();
  if (records.size() != n * m || labels.size() != n || splits.size() != n || sizes.size() != 3 ||
      data.vocab.size() != m) {
    throw DataError("encoded dataset at " + dir.string() + " is inconsistent with its manifest");
  }
  data.records = Eigen::Map<const RecordMatrix>(records.data(), static_cast<Index>(n), static_cast<Index>(m));
  data.labels.assign(labels.begin(), labels.end());
  auto it = splits.begin();
  data.split.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  data.split.val.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  data.split.test.assign(it, splits.end());
  return data;
}

std::vector<std::vector<std::int32_t>> batches(std::span<const std::int32_t> split, int batch_size,
                                               std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::int32_t> order(split.begin(), split.end());
  Rng rng(mix_seed(seed, 0x10000ULL + static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::int32_t>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace karsein
