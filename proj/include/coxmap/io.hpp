#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coxmap/eval.hpp"
#include "coxmap/laplace.hpp"
#include "coxmap/model.hpp"
#include "coxmap/predict.hpp"
#include "coxmap/sim.hpp"

namespace coxmap {

/// CSV with header `pixel_id,x,y,count,unit_id,<covariate columns>`.
PixelTable load_pixels(const std::string& path);
void save_pixels(const std::string& path, const PixelTable& pixels);

/// Model/run configuration parsed from a JSON document.
struct RunSettings {
  double cell_area = 225.0;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::vector<CovariateRole> roles;  // empty: infer from the pixel table
  std::vector<EffectSpec> effects;   // explicit effect list; empty: use preset
  HyperSpec hyper;                   // defaults to none; presets may override
  bool hyper_configured = false;
  SimGridSpec sim;
  double sim_theta = 2.7;
};

RunSettings load_config(const std::string& path);
RunSettings default_settings();

/// Self-contained saved fit: enough to rebuild surfaces without refitting.
struct SavedFit {
  std::string version;
  std::string config_hash;
  std::uint64_t seed = 0;
  double cell_area = 225.0;
  struct BlockInfo {
    std::string name;
    EffectKind kind = EffectKind::Linear;
    int offset = 0, length = 0;
    double standardize_mean = 0.0, standardize_sd = 1.0;
    std::vector<double> bin_edges;
  };
  std::vector<BlockInfo> blocks;
  int latent_dim = 0;
  int n_units = 0;
  std::vector<GridPoint> grid;
  std::vector<double> component_mean, component_sd;
  std::vector<long long> pixel_id;
  std::vector<int> unit_id, count;
  std::vector<double> linpred_mean, linpred_var;
};

SavedFit make_saved_fit(const FitResult& fit, const ModelStructure& model,
                        const PixelTable& pixels, std::uint64_t seed,
                        const std::string& config_hash);
void save_fit_json(const std::string& path, const SavedFit& fit);
SavedFit load_fit_json(const std::string& path);

// Tabular outputs (10 significant digits).
void write_hyperparameter_csv(const std::string& path, const std::vector<GridPoint>& grid);
void write_effect_csvs(const std::string& out_dir, const SavedFit& fit);
void write_intensity_csvs(const std::string& out_dir, const std::vector<long long>& pixel_id,
                          const PredictionSurface& surface);

struct RocRow {
  std::string level;  // "pixel" | "unit"
  std::string fold;   // "insample" | fold index | "pooled"
  const RocResult* roc;
};
void write_roc_csv(const std::string& path, const std::vector<RocRow>& rows);

struct AucSummaryRow {
  std::string model, level;
  double in_sample_auc, cv_auc, cv_auc_fold_mean;
};
void write_auc_summary_csv(const std::string& path, const std::vector<AucSummaryRow>& rows);

void write_truth_json(const std::string& path, const SimTruth& truth);

/// 64-bit FNV-1a, hex-encoded; used for the manifest's config hash.
std::string fnv1a_hex(const std::string& text);

/// Formats a double with 10 significant digits (CSV number format).
std::string format_number(double value);

}  // namespace coxmap
