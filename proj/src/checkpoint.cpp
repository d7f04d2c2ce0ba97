#include "karsein/checkpoint.hpp"

#include "karsein/json_util.hpp"
#include "karsein/reference_nets.hpp"

#include <fstream>

namespace karsein {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(HeadMode h) { return h == HeadMode::Mean ? "mean" : "paper_sum"; }

std::string to_string(Towers t) {
  switch (t) {
    case Towers::Both: return "both";
    case Towers::ExplicitOnly: return "explicit";
    case Towers::ImplicitOnly: return "implicit";
  }
  return "?";
}

HeadMode head_mode_from_string(const std::string& s) {
  if (s == "mean") return HeadMode::Mean;
  if (s == "paper_sum") return HeadMode::PaperSum;
  throw ConfigError("head must be 'mean' or 'paper_sum', got '" + s + "'");
}

Towers towers_from_string(const std::string& s) {
  if (s == "both") return Towers::Both;
  if (s == "explicit") return Towers::ExplicitOnly;
  if (s == "implicit") return Towers::ImplicitOnly;
  throw ConfigError("towers must be 'both', 'explicit' or 'implicit', got '" + s + "'");
}

void ModelSpec::validate() const {
  if (kind != "karsein" && kind != "kan" && kind != "mlp") {
    throw ConfigError("model.kind must be karsein, kan or mlp, got '" + kind + "'");
  }
  karsein.validate();
  for (int w : hidden) {
    if (w < 1) throw ConfigError("model.hidden widths must be >= 1");
  }
  if (kan_grid < 1) throw ConfigError("model.kan_grid must be >= 1");
  if (kan_order < 1 || kan_order > kMaxSplineOrder) throw ConfigError("model.kan_order out of range");
}

json to_json(const KarseinConfig& c) {
  return {{"embedding_dim", c.embedding_dim}, {"explicit_hidden", c.explicit_hidden},
          {"implicit_hidden", c.implicit_hidden}, {"spline_order", c.spline_order},
          {"grid_size", c.grid_size}, {"head", to_string(c.head)},
          {"pairwise_layers", c.pairwise_layers}, {"towers", to_string(c.towers)},
          {"embedding_std", c.embedding_std}};
}

json to_json(const ModelSpec& s) {
  json j = to_json(s.karsein);
  j["kind"] = s.kind;
  j["hidden"] = s.hidden;
  j["kan_grid"] = s.kan_grid;
  j["kan_order"] = s.kan_order;
  return j;
}

ModelSpec model_spec_from_json(const json& j) {
  const std::string where = "model";
  require_keys(j,
               {"kind", "embedding_dim", "explicit_hidden", "implicit_hidden", "spline_order", "grid_size", "head",
                "pairwise_layers", "towers", "embedding_std", "hidden", "kan_grid", "kan_order"},
               where);
  ModelSpec s;
  read_opt(j, "kind", s.kind, where);
  auto& c = s.karsein;
  read_opt(j, "embedding_dim", c.embedding_dim, where);
  read_opt(j, "explicit_hidden", c.explicit_hidden, where);
  read_opt(j, "implicit_hidden", c.implicit_hidden, where);
  read_opt(j, "spline_order", c.spline_order, where);
  read_opt(j, "grid_size", c.grid_size, where);
  read_opt(j, "pairwise_layers", c.pairwise_layers, where);
  read_opt(j, "embedding_std", c.embedding_std, where);
  std::string head = to_string(c.head);
  std::string towers = to_string(c.towers);
  read_opt(j, "head", head, where);
  read_opt(j, "towers", towers, where);
  c.head = head_mode_from_string(head);
  c.towers = towers_from_string(towers);
  read_opt(j, "hidden", s.hidden, where);
  read_opt(j, "kan_grid", s.kan_grid, where);
  read_opt(j, "kan_order", s.kan_order, where);
  if (c.grid_size < 1) throw ConfigError("model.grid_size must be >= 1");
  if (c.spline_order < 1 || c.spline_order > kMaxSplineOrder) throw ConfigError("model.spline_order out of range");
  s.validate();
  return s;
}

std::unique_ptr<CtrModel<float>> make_model(const ModelSpec& spec, const std::vector<std::int32_t>& vocab_sizes,
                                            std::uint64_t seed) {
  spec.validate();
  const auto& c = spec.karsein;
  if (spec.kind == "kan") {
    return std::make_unique<KanCtrModel<float>>(vocab_sizes, c.embedding_dim, spec.hidden, spec.kan_grid,
                                                spec.kan_order, c.embedding_std, seed);
  }
  if (spec.kind == "mlp") {
    return std::make_unique<MlpCtrModel<float>>(vocab_sizes, c.embedding_dim, spec.hidden, c.embedding_std, seed);
  }
  return std::make_unique<KarseinModel<float>>(c, vocab_sizes, seed);
}

void save_checkpoint(const fs::path& dir, const CtrModel<float>& model, const ModelSpec& spec, std::uint64_t seed,
                     const DatasetSchema& schema, const std::vector<FieldVocab>& vocab, const json& extra) {
  fs::create_directories(dir);
  json tensors = json::array();
  std::vector<float> blob;
  for (const auto* p : model.parameters()) {
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()},
                       {"offset", blob.size()}});
    blob.insert(blob.end(), p->value.data(), p->value.data() + p->value.size());
  }
  json masks = json::object();
  if (const auto* k = dynamic_cast<const KarseinModel<float>*>(&model)) {
    for (const auto* tower : {&k->explicit_tower, &k->implicit_tower}) {
      for (const auto& layer : *tower) {
        if (layer.mask.empty()) continue;
        std::vector<Index> rows;
        for (Index h = 0; h < layer.eff_in(); ++h) {
          if (layer.masked(h)) rows.push_back(h);
        }
        masks[layer.coeffs.name] = rows;
      }
    }
  }
  json vocab_json = json::array();
  for (const auto& v : vocab) vocab_json.push_back(v.values());
  const json manifest = {{"schema_version", kCheckpointSchemaVersion},
                         {"model_kind", model.kind()},
                         {"model", to_json(spec)},
                         {"seed", seed},
                         {"dataset_schema", schema_to_json(schema)},
                         {"vocab", vocab_json},
                         {"tensors", tensors},
                         {"masks", masks},
                         {"blob", "params.bin"},
                         {"blob_floats", blob.size()},
                         {"extra", extra}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
  write_le_f32(dir / "params.bin", blob);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw DataError("checkpoint: cannot open " + mpath.string());
  Checkpoint ck;
  try {
    const json manifest = json::parse(in);
    if (manifest.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
      throw DataError("checkpoint: unsupported schema_version");
    }
    ck.spec = model_spec_from_json(manifest.at("model"));
    ck.seed = manifest.at("seed").get<std::uint64_t>();
    ck.schema = schema_from_json(manifest.at("dataset_schema"));
    for (const auto& field : manifest.at("vocab")) {
      FieldVocab v;
      const auto values = field.get<std::vector<std::string>>();
      for (std::size_t i = 1; i < values.size(); ++i) v.add(values[i]);
      ck.vocab.push_back(std::move(v));
    }
    ck.extra = manifest.value("extra", json::object());
    std::vector<std::int32_t> sizes;
    for (const auto& v : ck.vocab) sizes.push_back(v.size());
    ck.model = make_model(ck.spec, sizes, ck.seed);
    if (ck.model->kind() != manifest.at("model_kind").get<std::string>()) {
      throw DataError("checkpoint: model_kind does not match model spec");
    }

    const auto blob = read_le_f32(dir / manifest.value("blob", std::string("params.bin")));
    if (blob.size() != manifest.at("blob_floats").get<std::size_t>()) {
      throw DataError("checkpoint: blob has " + std::to_string(blob.size()) + " floats, manifest declares " +
                      std::to_string(manifest.at("blob_floats").get<std::size_t>()));
    }
    const auto& tensors = manifest.at("tensors");
    auto params = ck.model->parameters();
    if (tensors.size() != params.size()) throw DataError("checkpoint: tensor count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      auto* p = params[i];
      const auto rows = t.at("rows").get<Index>();
      const auto cols = t.at("cols").get<Index>();
      const auto offset = t.at("offset").get<std::size_t>();
      if (t.at("name").get<std::string>() != p->name || rows != p->value.rows() || cols != p->value.cols()) {
        throw DataError("checkpoint: tensor '" + t.at("name").get<std::string>() + "' " + shape_str(rows, cols) +
                        " does not match model tensor '" + p->name + "' " +
                        shape_str(p->value.rows(), p->value.cols()));
      }
      if (offset + static_cast<std::size_t>(rows * cols) > blob.size()) {
        throw DataError("checkpoint: tensor '" + p->name + "' runs past the end of the blob");
      }
      p->value = Eigen::Map<const Matrix<float>>(blob.data() + offset, rows, cols);
      if (!p->value.allFinite()) throw DataError("checkpoint: tensor '" + p->name + "' holds non-finite values");
      p->zero_grad();
    }
    if (auto* k = dynamic_cast<KarseinModel<float>*>(ck.model.get())) {
      const json masks = manifest.value("masks", json::object());
      for (auto* tower : {&k->explicit_tower, &k->implicit_tower}) {
        for (auto& layer : *tower) {
          if (!masks.contains(layer.coeffs.name)) continue;
          layer.mask.assign(static_cast<std::size_t>(layer.eff_in()), 0);
          for (const auto h : masks.at(layer.coeffs.name).get<std::vector<Index>>()) {
            if (h < 0 || h >= layer.eff_in()) throw DataError("checkpoint: mask row out of range");
            layer.mask[static_cast<std::size_t>(h)] = 1;
          }
        }
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: malformed manifest (") + e.what() + ")");
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: invalid model spec (") + e.what() + ")");
  }
  return ck;
}

}  // namespace karsein
