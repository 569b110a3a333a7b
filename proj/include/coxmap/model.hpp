#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coxmap/graph.hpp"
#include "coxmap/sparse.hpp"

namespace coxmap {

/// Per-pixel counts, covariates and areal-unit membership, column oriented.
struct PixelTable {
  std::vector<long long> pixel_id;
  std::vector<double> x, y;
  std::vector<int> count;
  std::vector<int> unit_id;
  std::vector<std::string> covariate_names;
  std::vector<std::vector<double>> covariates;  // covariates[j][i]
  double cell_area = 225.0;

  std::size_t n_pixels() const { return pixel_id.size(); }
  int covariate_index(const std::string& name) const;
  /// Row subset (copies columns); keeps cell_area and covariate names.
  PixelTable subset(const std::vector<std::size_t>& rows) const;
  void validate() const;
};

enum class EffectKind { Intercept, Linear, Categorical, Rw1, Rw1Cyclic, CarSpatial };

const char* effect_kind_name(EffectKind kind);
EffectKind effect_kind_from_name(const std::string& name);

struct EffectSpec {
  std::string name;  // covariate name; conventional names for intercept / spatial
  EffectKind kind = EffectKind::Linear;
  int n_levels = 0;  // levels (categorical), bins (rw1 kinds); units for car
  double prior_mean = 0.0;
  double prior_precision = 0.0;
  bool sum_to_zero = false;
  /// Block precision scaled by the estimated hyperparameter instead of fixed.
  bool precision_estimated = false;
};

/// Hyperprior for the estimated precision, log-normal by default or a
/// tabulated log-density curve over log(tau).
struct HyperPrior {
  enum class Kind { LogNormal, Table } kind = Kind::LogNormal;
  double log_median = 2.302585092994046;  // log 10
  double sd_log = 1.5;
  std::vector<double> table_log_tau, table_log_density;  // Kind::Table

  double log_density(double tau) const;
};

struct EstimatedHyper {
  std::string name = "tau";
  HyperPrior prior;
  double search_log_lo = -6.0;
  double search_log_hi = 10.0;
  int grid_size = 15;
  double grid_spacing_sd = 0.25;
};

struct HyperSpec {
  std::optional<EstimatedHyper> estimated;
  static HyperSpec none() { return HyperSpec{}; }
  static HyperSpec default_car();
};

/// One latent block of the assembled model.
struct EffectBlock {
  EffectSpec spec;
  int offset = 0;
  int length = 0;
  int prior_rank = 0;  // length minus the nullity of the block's prior precision
  // covariate handling (linear / binned kinds)
  double standardize_mean = 0.0;
  double standardize_sd = 1.0;
  std::vector<double> bin_edges;  // over the standardized values, rw1 kinds
};

/// Assembled latent-field layout: blocks, prior precision (fixed part plus an
/// optionally theta-scaled block), constraints and the pixel incidence map
/// realizing X_i = beta_0 + sum_j beta_j z_j(s_i) + sum_k W_{z_k}(s_i).
/// Immutable after assembly.
struct ModelStructure {
  int latent_dim = 0;
  double cell_area = 225.0;
  std::vector<EffectBlock> blocks;
  Eigen::VectorXd prior_mean;
  SparseSymmetric prior_fixed;
  SparseSymmetric prior_scaled;  // base precision (tau = 1) of the estimated block
  int scaled_block = -1;         // index into blocks, -1 if none
  int scaled_prior_rank = 0;
  LinearConstraint constraints;
  AdjacencyGraph graph;  // empty unless a spatial block exists

  // incidence map, entries_per_pixel entries per pixel
  int entries_per_pixel = 0;
  std::vector<int> inc_index;
  std::vector<double> inc_weight;
  std::vector<int> counts;
  std::size_t n_pixels = 0;

  /// prior precision at a given value of the estimated hyperparameter
  SparseSymmetric prior_precision(double theta) const;
  bool has_estimated_block() const { return scaled_block >= 0; }
  const EffectBlock* block_by_name(const std::string& name) const;

  /// Linear predictor for every pixel in the incidence map.
  Eigen::VectorXd linear_predictor(const Eigen::VectorXd& eta) const;

  /// Incidence row for an out-of-table pixel: raw covariate values in the
  /// order of `covariate_columns` bound by bind_table(). Out-of-range values
  /// clamp to end bins; linear effects use the stored standardization.
  std::vector<std::pair<int, double>> incidence_row(const std::vector<double>& covariate_values,
                                                    int unit_id) const;
  /// Column order expected by incidence_row, resolved against a table.
  std::vector<int> bind_table(const PixelTable& table) const;
};

struct Standardized {
  std::vector<double> values;
  double mean = 0.0;
  double sd = 1.0;
};

/// Center and scale to sample mean 0, sd 1 (n-1 denominator).
Standardized standardize(const std::vector<double>& values);

struct Binned {
  std::vector<int> bins;
  std::vector<double> edges;  // n_bins + 1 equally spaced over [min, max]
};

/// Equidistant binning over [min, max]; the maximum maps to the last bin.
Binned bin_covariate(const std::vector<double>& values, int n_bins);
int bin_of_value(double v, const std::vector<double>& edges);

ModelStructure assemble_model(const PixelTable& pixels, const AdjacencyGraph& graph,
                              const std::vector<EffectSpec>& effects, const HyperSpec& hyper);

/// Covariate roles used to derive Table-2-style preset effect lists.
struct CovariateRole {
  std::string name;
  enum class Kind { Continuous, Categorical, Cyclic } kind = Kind::Continuous;
  int n_levels = 0;      // categorical levels or cyclic classes
  bool nonlinear = false;  // member of the mod2b/mod3 nonlinear subset
};

enum class ModelPreset { Mod1, Mod2, Mod2b, Mod3 };

ModelPreset preset_from_name(const std::string& name);
const char* preset_name(ModelPreset preset);

/// Effect lists for the four preset configurations. The cyclic covariate uses
/// 16 classes, continuous random walks 20 bins with fixed precision 25, fixed
/// effects precision 2 (categorical 100), intercept prior N(-2, 1).
std::vector<EffectSpec> preset_effects(ModelPreset preset, const std::vector<CovariateRole>& roles,
                                       int n_units);

/// Default role inference when no config is given: every covariate continuous,
/// a column named like "aspect"/"asp" cyclic with 16 classes, the nonlinear
/// subset {elevation, slope, distance-to-faults} by name when present.
std::vector<CovariateRole> infer_roles(const PixelTable& pixels);

}  // namespace coxmap
