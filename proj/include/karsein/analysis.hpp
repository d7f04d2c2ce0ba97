#pragma once

#include "karsein/data.hpp"
#include "karsein/model.hpp"
#include "karsein/training.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace karsein {

/// S[out, in] = |W_b[out, in]| + |W_s[out, in]| for one layer.
struct LayerConnections {
  std::string layer;  // e.g. "explicit.0"
  MatrixD strength;
};

std::vector<LayerConnections> connection_map(const KarseinModel<float>& model);

void write_matrix_csv(const std::filesystem::path& path, const MatrixD& m);
MatrixD read_matrix_csv(const std::filesystem::path& path);

/// Self-contained SVG heat map; rows are outputs, columns are inputs.
void write_heatmap_svg(const std::filesystem::path& path, const MatrixD& m, const std::string& title);

struct LayerRedundancy {
  std::string layer;
  std::vector<Index> redundant;  // input rows whose strongest outgoing connection <= threshold
  Index inputs = 0;
  double ratio = 0.0;
};

struct RedundancyReport {
  double threshold = 0.01;
  std::vector<LayerRedundancy> layers;

  bool empty() const;
};

RedundancyReport find_redundant(const std::vector<LayerConnections>& maps, double threshold = 0.01);

struct FinetuneResult {
  std::unique_ptr<KarseinModel<float>> model;
  double auc_before = 0.0;
  double auc_after = 0.0;
  double delta() const { return auc_after - auc_before; }
  TrainReport report;
};

/// Masks every redundant input row (columns of W_b / W_s and the spline row
/// held at zero), fine-tunes a copy for `epochs` and reports test AUC before
/// and after. An empty report returns an unchanged copy.
FinetuneResult mask_and_finetune(const KarseinModel<float>& model, const RedundancyReport& report,
                                 const EncodedDataset& data, TrainConfig config, int epochs = 3);

/// Applies the masks only (no training). Throws ConfigError when every input
/// of a layer would be masked.
void apply_redundancy_mask(KarseinModel<float>& model, const RedundancyReport& report);

/// Spline component of one per-row activation: y = sum_i N_i(x) C[row, i].
/// `layer` is "explicit.L" or "implicit.L".
std::vector<double> sample_activation(const KarseinModel<float>& model, const std::string& layer, Index row,
                                      std::span<const double> xs);

std::vector<double> linspace(double lo, double hi, int n);

struct CubicFit {
  std::array<double, 4> coeffs{};  // a0 + a1 x + a2 x^2 + a3 x^3
  double r2 = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  double operator()(double x) const { return coeffs[0] + x * (coeffs[1] + x * (coeffs[2] + x * coeffs[3])); }
};

/// Least-squares cubic via a column-pivoted QR of the Vandermonde matrix.
/// Needs >= 8 samples and at least 4 distinct xs.
CubicFit fit_cubic(std::span<const double> xs, std::span<const double> ys);

void write_xy_csv(const std::filesystem::path& path, std::span<const double> xs, std::span<const double> ys);
void write_polyline_svg(const std::filesystem::path& path, std::span<const double> xs, std::span<const double> ys,
                        const std::string& title);

nlohmann::json to_json(const RedundancyReport& r);
nlohmann::json to_json(const CubicFit& f);

struct ExplainOptions {
  double redundancy_threshold = 0.01;
  int activation_samples = 101;
  double r2_threshold = 0.9;
};

/// Heat maps, redundancy report, explicit-tower activation curves and their
/// cubic fits, written under `out`. Returns the summary JSON (also written
/// to out/explain.json).
nlohmann::json explain(const KarseinModel<float>& model, const std::filesystem::path& out,
                       const ExplainOptions& options = {});

}  // namespace karsein
