#include "karsein/analysis.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace karsein {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

template <typename Model>
auto& find_layer(Model& model, const std::string& name) {
  for (auto* tower : {&model.explicit_tower, &model.implicit_tower}) {
    for (auto& layer : *tower) {
      if (layer.coeffs.name == name + ".coeffs") return layer;
    }
  }
  throw DimensionError("no layer named '" + name + "'");
}

std::string layer_name(const KarseinLayer<float>& layer) {
  const auto& n = layer.coeffs.name;
  return n.substr(0, n.size() - std::string(".coeffs").size());
}

}  // namespace

std::vector<LayerConnections> connection_map(const KarseinModel<float>& model) {
  std::vector<LayerConnections> out;
  for (const auto* tower : {&model.explicit_tower, &model.implicit_tower}) {
    for (const auto& layer : *tower) {
      out.push_back({layer_name(layer), layer.w_base.value.cast<double>().cwiseAbs() +
                                            layer.w_silu.value.cast<double>().cwiseAbs()});
    }
  }
  return out;
}

void write_matrix_csv(const fs::path& path, const MatrixD& m) {
  auto out = open_out(path);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << "\n";
  }
}

MatrixD read_matrix_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size()) throw DataError(path.string() + ": ragged CSV");
    rows.push_back(std::move(row));
  }
  MatrixD m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return m;
}

void write_heatmap_svg(const fs::path& path, const MatrixD& m, const std::string& title) {
  constexpr int kCell = 12;
  constexpr int kTop = 28;
  constexpr int kLeft = 8;
  const double peak = m.size() > 0 ? m.maxCoeff() : 0.0;
  const Index w = kLeft * 2 + m.cols() * kCell;
  const Index h = kTop + m.rows() * kCell + 8;
  auto out = open_out(path);
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << std::max<Index>(w, 240) << "\" height=\"" << h
      << "\">\n";
  out << "<text x=\"" << kLeft << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(title)
      << " (max " << peak << ")</text>\n";
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      const double t = peak > 0.0 ? m(r, c) / peak : 0.0;
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - t)));
      out << "<rect x=\"" << kLeft + c * kCell << "\" y=\"" << kTop + r * kCell << "\" width=\"" << kCell
          << "\" height=\"" << kCell << "\" fill=\"rgb(" << shade << "," << shade << ",255)\"/>\n";
    }
  }
  out << "</svg>\n";
}

bool RedundancyReport::empty() const {
  return std::all_of(layers.begin(), layers.end(), [](const auto& l) { return l.redundant.empty(); });
}

RedundancyReport find_redundant(const std::vector<LayerConnections>& maps, double threshold) {
  RedundancyReport report;
  report.threshold = threshold;
  for (const auto& map : maps) {
    LayerRedundancy lr;
    lr.layer = map.layer;
    lr.inputs = map.strength.cols();
    for (Index h = 0; h < map.strength.cols(); ++h) {
      const double strongest = map.strength.rows() > 0 ? map.strength.col(h).maxCoeff() : 0.0;
      if (strongest <= threshold) lr.redundant.push_back(h);
    }
    lr.ratio = lr.inputs > 0 ? static_cast<double>(lr.redundant.size()) / static_cast<double>(lr.inputs) : 0.0;
    report.layers.push_back(std::move(lr));
  }
  return report;
}

void apply_redundancy_mask(KarseinModel<float>& model, const RedundancyReport& report) {
  for (const auto& lr : report.layers) {
    if (lr.redundant.empty()) continue;
    auto& layer = find_layer(model, lr.layer);
    if (static_cast<Index>(lr.redundant.size()) >= layer.eff_in()) {
      throw ConfigError("mask_and_finetune: every input of layer " + lr.layer + " would be masked");
    }
    if (layer.mask.empty()) layer.mask.assign(static_cast<std::size_t>(layer.eff_in()), 0);
    for (Index h : lr.redundant) {
      if (h < 0 || h >= layer.eff_in()) throw DimensionError("redundant row out of range in " + lr.layer);
      layer.mask[static_cast<std::size_t>(h)] = 1;
    }
    layer.apply_mask();
  }
}

FinetuneResult mask_and_finetune(const KarseinModel<float>& model, const RedundancyReport& report,
                                 const EncodedDataset& data, TrainConfig config, int epochs) {
  if (epochs < 0) throw ConfigError("mask_and_finetune: epochs must be >= 0");
  FinetuneResult result;
  result.model = std::make_unique<KarseinModel<float>>(model);
  result.auc_before = evaluate(model, data, data.split.test, config.eval_batch).auc;
  if (report.empty()) {
    result.auc_after = result.auc_before;
    return result;
  }
  apply_redundancy_mask(*result.model, report);
  config.max_epochs = epochs;
  config.patience = std::max(1, epochs);
  result.report = train(*result.model, data, config);
  result.auc_after = evaluate(*result.model, data, data.split.test, config.eval_batch).auc;
  return result;
}

std::vector<double> sample_activation(const KarseinModel<float>& model, const std::string& layer, Index row,
                                      std::span<const double> xs) {
  const auto& l = find_layer(model, layer);
  if (row < 0 || row >= l.eff_in()) {
    throw DimensionError("sample_activation: row " + std::to_string(row) + " outside " + layer + " (" +
                         std::to_string(l.eff_in()) + " rows)");
  }
  const auto& cf = model.config();
  const BSplineBasis<double> basis(cf.grid_size, cf.spline_order);
  const Eigen::VectorXd c = l.coeffs.value.row(row).cast<double>().transpose();
  std::vector<double> ys;
  ys.reserve(xs.size());
  for (double x : xs) ys.push_back(basis.dot(c, x));
  return ys;
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 2) throw ConfigError("linspace needs at least 2 points");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return out;
}

CubicFit fit_cubic(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DimensionError("fit_cubic: xs and ys differ in length");
  if (xs.size() < 8) throw ConfigError("fit_cubic: at least 8 samples are required");
  const std::set<double> distinct(xs.begin(), xs.end());
  if (distinct.size() < 4) throw ConfigError("fit_cubic: xs are degenerate (fewer than 4 distinct values)");

  const Index n = static_cast<Index>(xs.size());
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (Index i = 0; i < n; ++i) {
    const double x = xs[static_cast<std::size_t>(i)];
    a(i, 0) = 1.0;
    a(i, 1) = x;
    a(i, 2) = x * x;
    a(i, 3) = x * x * x;
    b[i] = ys[static_cast<std::size_t>(i)];
  }
  const auto qr = a.colPivHouseholderQr();
  if (qr.rank() < 4) throw ConfigError("fit_cubic: design matrix is rank deficient");
  const Eigen::VectorXd coef = qr.solve(b);

  CubicFit fit;
  for (int k = 0; k < 4; ++k) fit.coeffs[static_cast<std::size_t>(k)] = coef[k];
  fit.lo = *distinct.begin();
  fit.hi = *distinct.rbegin();
  const double mean = b.mean();
  const double ss_tot = (b.array() - mean).square().sum();
  const double ss_res = (a * coef - b).squaredNorm();
  if (ss_tot == 0.0) {
    // Constant data: the fit is exact up to rounding in the solve.
    const double scale = std::max(1.0, std::abs(mean));
    fit.r2 = std::sqrt(ss_res / static_cast<double>(b.size())) <= 1e-12 * scale ? 1.0 : 0.0;
  } else {
    fit.r2 = 1.0 - ss_res / ss_tot;
  }
  return fit;
}

void write_xy_csv(const fs::path& path, std::span<const double> xs, std::span<const double> ys) {
  auto out = open_out(path);
  out << "x,y\n";
  for (std::size_t i = 0; i < xs.size(); ++i) out << xs[i] << "," << ys[i] << "\n";
}

void write_polyline_svg(const fs::path& path, std::span<const double> xs, std::span<const double> ys,
                        const std::string& title) {
  constexpr double kW = 320;
  constexpr double kH = 240;
  constexpr double kPad = 24;
  const auto [xlo, xhi] = std::minmax_element(xs.begin(), xs.end());
  const auto [ylo, yhi] = std::minmax_element(ys.begin(), ys.end());
  const double x0 = *xlo;
  const double xr = std::max(*xhi - *xlo, 1e-12);
  double y0 = *ylo;
  double yr = *yhi - *ylo;
  if (yr < 1e-12) {
    y0 -= 0.5;
    yr = 1.0;
  }
  auto out = open_out(path);
  out << std::setprecision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  out << "<text x=\"" << kPad << "\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(title)
      << "</text>\n";
  out << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << kW - 2 * kPad << "\" height=\""
      << kH - 2 * kPad << "\" fill=\"none\" stroke=\"#999\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double px = kPad + (xs[i] - x0) / xr * (kW - 2 * kPad);
    const double py = kH - kPad - (ys[i] - y0) / yr * (kH - 2 * kPad);
    out << (i ? " " : "") << px << "," << py;
  }
  out << "\"/>\n</svg>\n";
}

json to_json(const RedundancyReport& r) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"layer", l.layer}, {"inputs", l.inputs}, {"redundant", l.redundant}, {"ratio", l.ratio}});
  }
  return {{"threshold", r.threshold}, {"layers", layers}};
}

json to_json(const CubicFit& f) {
  return {{"coeffs", f.coeffs}, {"r2", f.r2}, {"domain", {f.lo, f.hi}}};
}

json explain(const KarseinModel<float>& model, const fs::path& out, const ExplainOptions& options) {
  fs::create_directories(out);
  const auto maps = connection_map(model);
  json heatmaps = json::array();
  for (const auto& map : maps) {
    const fs::path csv = out / "heatmaps" / (map.layer + ".csv");
    write_matrix_csv(csv, map.strength);
    write_heatmap_svg(out / "heatmaps" / (map.layer + ".svg"), map.strength, map.layer + " connection strength");
    heatmaps.push_back({{"layer", map.layer}, {"csv", fs::relative(csv, out).string()},
                        {"rows", map.strength.rows()}, {"cols", map.strength.cols()}});
  }
  const RedundancyReport redundancy = find_redundant(maps, options.redundancy_threshold);

  const auto xs = linspace(-1.0, 1.0, options.activation_samples);
  json fits = json::array();
  int curves = 0;
  int good = 0;
  int varying = 0;
  int varying_good = 0;
  for (const auto& layer : model.explicit_tower) {
    const std::string name = layer_name(layer);
    for (Index row = 0; row < layer.eff_in(); ++row) {
      const auto ys = sample_activation(model, name, row, xs);
      const std::string stem = name + "_row" + std::to_string(row);
      write_xy_csv(out / "activations" / (stem + ".csv"), xs, ys);
      write_polyline_svg(out / "activations" / (stem + ".svg"), xs, ys, stem);
      const CubicFit fit = fit_cubic(xs, ys);
      const auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
      const bool constant = *hi - *lo == 0.0;
      ++curves;
      good += fit.r2 >= options.r2_threshold;
      if (!constant) {
        ++varying;
        varying_good += fit.r2 >= options.r2_threshold;
      }
      json f = to_json(fit);
      f["layer"] = name;
      f["row"] = row;
      f["constant"] = constant;
      fits.push_back(std::move(f));
    }
  }
  std::ofstream(out / "cubic_fits.json") << fits.dump(2) << "\n";
  std::ofstream(out / "redundancy.json") << to_json(redundancy).dump(2) << "\n";

  json summary = {{"heatmaps", heatmaps},
                  {"redundancy", to_json(redundancy)},
                  {"activation_curves", curves},
                  {"non_constant_curves", varying},
                  {"r2_threshold", options.r2_threshold},
                  {"fraction_r2_at_least_threshold", curves ? static_cast<double>(good) / curves : 0.0},
                  {"fraction_non_constant_r2_at_least_threshold",
                   varying ? static_cast<double>(varying_good) / varying : 0.0}};
  std::ofstream(out / "explain.json") << summary.dump(2) << "\n";
  return summary;
}

}  // namespace karsein
