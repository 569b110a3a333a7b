#pragma once

#include <cstdint>
#include <vector>

#include "coxmap/graph.hpp"
#include "coxmap/laplace.hpp"
#include "coxmap/model.hpp"
#include "coxmap/predict.hpp"

namespace coxmap {

struct RocResult {
  std::vector<double> thresholds;  // descending
  std::vector<double> fpr, tpr;    // anchored at (0,0) and (1,1)
  double auc = 0.0;                // Mann-Whitney concordance, ties at 0.5
};

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct CvPlan {
  int n_folds = 4;
  std::uint64_t seed = 0;
  std::vector<int> fold_of_unit;
};

/// Seeded uniform permutation with round-robin fold assignment;
/// fold sizes differ by at most one.
CvPlan make_cv_plan(int n_units, std::uint64_t seed, int n_folds = 4);

struct FoldResult {
  int fold = 0;
  std::vector<std::size_t> heldout_rows;   // row indices in the input table
  std::vector<double> pixel_scores;        // lambda-hat of held-out pixels
  std::vector<int> pixel_labels;           // count > 0
  std::vector<int> heldout_units;          // units held out in this fold
  std::vector<double> unit_scores;         // lambda-hat(A), aligned with heldout_units
  std::vector<int> unit_labels;
  double pixel_auc = 0.0, unit_auc = 0.0;  // NaN when a level is degenerate
  RocResult pixel_roc, unit_roc;           // empty curves when degenerate
};

struct CvResult {
  std::vector<FoldResult> folds;
  RocResult pooled_pixel, pooled_unit;  // held-out scores concatenated across folds
  double fold_mean_pixel_auc = 0.0, fold_mean_unit_auc = 0.0;
};

/// Slope-unit-blocked cross-validation: each fold refits on retained units'
/// pixels and scores held-out pixels/units with the model-coherent predictor
/// (spatial components of held-out units take their CAR conditional mean, with
/// the conditional variance reflected in the lognormal correction).
CvResult cross_validate(const PixelTable& pixels, const AdjacencyGraph& graph,
                        const std::vector<EffectSpec>& effects, const HyperSpec& hyper,
                        const CvPlan& plan, const FitOptions& options = {},
                        IntensityEstimator estimator = IntensityEstimator::LognormalCorrected);

}  // namespace coxmap
