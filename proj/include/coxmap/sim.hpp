#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "coxmap/model.hpp"

namespace coxmap {

/// Rectangular pixel lattice with square slope-unit tiles (rook adjacency).
struct SimGridSpec {
  int nx = 60;
  int ny = 60;
  int tile = 10;  // pixels per tile side
  double cell_area = 225.0;
  /// Caller-set fixed-effect values (by effect name); everything else is
  /// drawn from its prior.
  std::map<std::string, double> fixed_values;

  int tiles_x() const { return nx / tile; }
  int tiles_y() const { return ny / tile; }
  int n_units() const { return tiles_x() * tiles_y(); }
};

struct SimTruth {
  Eigen::VectorXd eta;  // full latent vector in model layout order
  std::map<std::string, std::vector<double>> blocks;
  double theta = 1.0;
  std::vector<double> intensity;  // per-pixel Poisson mean C exp(X_i)
  std::vector<int> counts;
  std::uint64_t seed = 0;
};

/// Draws a dataset from the exact generative model: fixed effects from their
/// priors (or caller-set), non-cyclic RW1 blocks by cumulating Gaussian
/// increments then centering, cyclic RW1 and CAR blocks from the constrained
/// intrinsic Gaussian via factor-based sampling, counts Poisson per pixel.
/// Fully deterministic per seed.
std::pair<PixelTable, SimTruth> simulate_dataset(const SimGridSpec& spec,
                                                 const AdjacencyGraph& graph,
                                                 const std::vector<EffectSpec>& effects,
                                                 double theta, std::uint64_t seed);

struct QuadratureResult {
  Eigen::VectorXd mean, sd;
  double log_normalizer = 0.0;  // same constant convention as the Laplace path
};

/// Exact posterior moments for models with latent dimension <= 2 by adaptive
/// quadrature of the unnormalized posterior over a +-10-sd box. Evaluates the
/// density directly from the model pieces, independent of the Laplace code path.
QuadratureResult quadrature_oracle(const ModelStructure& model, double theta);

}  // namespace coxmap
